use std::fmt::Write;
use std::path::PathBuf;

use clap::Args;
use lens_core::videoio::{generate_synthetic_dataset, ActionLabel, SynthParams};

use crate::Output;

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Dataset root; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub groups: u32,
    /// Clips per group.
    #[arg(long, default_value_t = 6)]
    pub clips: u32,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
}

pub fn gen_data(args: &GenDataArgs, seed: u64) -> anyhow::Result<Output> {
    let params = SynthParams {
        width: args.width,
        height: args.height,
        ..SynthParams::new(seed, args.groups, args.clips)
    };
    let manifest = generate_synthetic_dataset(&args.out, &params)?;
    let mut text = format!(
        "{} clips written to {}\n",
        manifest.clip_count,
        args.out.display()
    );
    for (l, n) in ActionLabel::ALL.iter().zip(manifest.count_by_label()) {
        writeln!(text, "  {:<9} {n}", l.name())?;
    }
    Output::new(&manifest, text.trim_end())
}
