use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use lens_core::optflow::{
    flow_colorize, normalization_magnitude, save_lflo, tvl1_flow_detailed, Tvl1Params,
};
use lens_core::videoio::{generate_clip, load_clip, ActionLabel, Frame, SynthParams};
use serde::{Deserialize, Serialize};

use crate::Output;

#[derive(Debug, Args)]
pub struct FlowArgs {
    /// Clip to read; a seeded synthetic clip when absent.
    #[arg(long)]
    pub clip: Option<PathBuf>,
    /// Action of the synthetic clip.
    #[arg(long, default_value = "Shooting", value_parser = parse_label)]
    pub label: ActionLabel,
    /// Flow from frame `index - 1` to frame `index`.
    #[arg(long, default_value_t = 1)]
    pub index: usize,
    /// Directory for `flow.lflo` and the colorized `flow.ppm`.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_label(s: &str) -> Result<ActionLabel, String> {
    ActionLabel::from_name(s).ok_or_else(|| format!("unknown action {s:?}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    pub width: usize,
    pub height: usize,
    pub index: usize,
    pub mean_u: f64,
    pub mean_v: f64,
    pub max_magnitude: f32,
    pub pyramid_levels: usize,
    pub finest_energies: Vec<f64>,
    pub lflo: PathBuf,
    pub image: PathBuf,
}

/// Binary PPM (P6).
pub fn write_ppm(frame: &Frame, path: &Path) -> anyhow::Result<()> {
    let mut f = std::io::BufWriter::new(
        std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    write!(f, "P6\n{} {}\n255\n", frame.width, frame.height)?;
    f.write_all(&frame.pixels)?;
    f.flush()?;
    Ok(())
}

pub fn flow_cmd(args: &FlowArgs, seed: u64) -> anyhow::Result<Output> {
    let clip = match &args.clip {
        Some(p) => load_clip(p).with_context(|| format!("loading {}", p.display()))?,
        None => generate_clip(&SynthParams::new(seed, 1, 1), args.label, 0, 0)?,
    };
    anyhow::ensure!(
        args.index >= 1 && args.index < clip.len(),
        "frame index {} outside 1..{}",
        args.index,
        clip.len()
    );
    let (prev, next) = (&clip.frames[args.index - 1], &clip.frames[args.index]);
    let (flow, diag) = tvl1_flow_detailed(prev, next, &Tvl1Params::default())?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let lflo = args.out.join("flow.lflo");
    let image = args.out.join("flow.ppm");
    save_lflo(&flow, &lflo)?;
    write_ppm(&flow_colorize(&flow), &image)?;
    let (mean_u, mean_v) = flow.mean();
    let report = FlowReport {
        width: flow.width,
        height: flow.height,
        index: args.index,
        mean_u,
        mean_v,
        max_magnitude: flow.max_magnitude(),
        pyramid_levels: diag.levels,
        finest_energies: diag.finest_energies,
        lflo,
        image,
    };
    let text = format!(
        "flow {}→{} at {}x{}: mean ({:.3}, {:.3}) px, max {:.3} px, color scale {:.3} px\nwrote {} and {}",
        args.index - 1,
        args.index,
        report.width,
        report.height,
        mean_u,
        mean_v,
        report.max_magnitude,
        normalization_magnitude(&flow),
        report.lflo.display(),
        report.image.display()
    );
    Output::new(&report, text)
}
