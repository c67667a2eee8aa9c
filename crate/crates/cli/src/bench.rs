//! Effective frame rate of the live pipeline under each speed-up, in both
//! inference modes.

use std::fmt::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use clap::Args;
use lens_core::event::Gps;
use lens_core::pipeline::{FrameProcessor, FrameScorer, FrameScores, Models, SyntheticScorer};
use lens_core::videoio::{
    generate_clip, timestamp_for, ActionLabel, Frame, SkipPolicy, SynthParams, SyntheticCost,
};
use lens_edge::{run_pipeline, EdgeConfig, Inference, Mode};
use lens_relay::{start, RelayConfig, ScorerFactory};
use serde::{Deserialize, Serialize};

use crate::{read_toml, Output};

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Synthetic per-frame cost at full resolution.
    #[arg(long, default_value_t = 100.0)]
    pub cost_ms: f64,
    /// Part of the synthetic cost spent on optical flow, which shrinks 4x in reduced mode.
    #[arg(long, default_value_t = 0.8)]
    pub flow_share: f64,
    /// Measurement window per row.
    #[arg(long, default_value_t = 2.0)]
    pub window_s: f64,
    /// Frames skipped after each processed one in the skip rows.
    #[arg(long, default_value_t = 1)]
    pub skip: u32,
    /// Run the trained models instead of the synthetic cost.
    #[arg(long)]
    pub models: Option<PathBuf>,
    /// Only measure edge-mode rows.
    #[arg(long)]
    pub edge_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub cost_ms: f64,
    pub flow_share: f64,
    pub window_s: f64,
    pub skip: u32,
    pub models: Option<PathBuf>,
    pub modes: Vec<Mode>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            cost_ms: 100.0,
            flow_share: 0.8,
            window_s: 2.0,
            skip: 1,
            models: None,
            modes: vec![Mode::Edge, Mode::Cloud],
        }
    }
}

impl From<&BenchArgs> for BenchConfig {
    fn from(a: &BenchArgs) -> Self {
        Self {
            cost_ms: a.cost_ms,
            flow_share: a.flow_share,
            window_s: a.window_s,
            skip: a.skip,
            models: a.models.clone(),
            modes: if a.edge_only {
                vec![Mode::Edge]
            } else {
                vec![Mode::Edge, Mode::Cloud]
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub name: String,
    pub mode: Mode,
    pub skip: u32,
    pub reduced: bool,
    pub frames_scored: usize,
    pub processing_fps: f64,
    /// Source frames covered per second, skipped ones included.
    pub effective_fps: f64,
    /// Effective rate over the baseline row of the same mode.
    pub ratio: f64,
}

/// Records when each frame finished scoring.
struct Timed {
    inner: Box<dyn FrameScorer>,
    stamps: Arc<Mutex<Vec<Instant>>>,
}

impl FrameScorer for Timed {
    fn score(&mut self, frame: &Frame) -> lens_core::Result<FrameScores> {
        let s = self.inner.score(frame)?;
        self.stamps.lock().expect("stamp lock").push(Instant::now());
        Ok(s)
    }
}

#[derive(Clone)]
enum Work {
    Synthetic { cost_ms: f64, flow_share: f64 },
    Models(Arc<Models>),
}

impl Work {
    fn scorer(&self, reduced: bool) -> Box<dyn FrameScorer> {
        match self {
            &Work::Synthetic {
                cost_ms,
                flow_share,
            } => {
                let ms = if reduced {
                    cost_ms * (1.0 - flow_share + flow_share / 4.0)
                } else {
                    cost_ms
                };
                Box::new(SyntheticScorer {
                    cost: SyntheticCost::from_millis(ms),
                })
            }
            Work::Models(m) => Box::new(FrameProcessor::new(m.clone(), reduced)),
        }
    }
}

/// Steady-state rate from completion times, ignoring the first frame.
fn rate(stamps: &[Instant]) -> f64 {
    let s = stamps.get(1..).unwrap_or_default();
    match (s.first(), s.last()) {
        (Some(a), Some(b)) if s.len() >= 2 && b > a => {
            (s.len() - 1) as f64 / (*b - *a).as_secs_f64()
        }
        _ => 0.0,
    }
}

/// Endless replay of one synthetic clip with continuing frame indices, ending
/// once `window` has passed since the first frame was taken.
fn source(seed: u64, window: Duration) -> anyhow::Result<impl Iterator<Item = Frame> + Send> {
    let clip = generate_clip(&SynthParams::new(seed, 1, 1), ActionLabel::Theft, 0, 0)?;
    let fps = clip.fps;
    let mut started: Option<Instant> = None;
    Ok(clip
        .frames
        .into_iter()
        .cycle()
        .enumerate()
        .map(move |(i, mut f)| {
            f.index = i as u32;
            f.timestamp_ms = timestamp_for(f.index, fps);
            f
        })
        .take_while(move |_| started.get_or_insert_with(Instant::now).elapsed() < window))
}

fn measure(
    work: &Work,
    mode: Mode,
    skip: u32,
    reduced: bool,
    seed: u64,
    window: Duration,
    queue_dir: &Path,
) -> anyhow::Result<(usize, f64)> {
    let stamps = Arc::new(Mutex::new(Vec::new()));
    let mut config = EdgeConfig::new(
        "bench",
        Gps { lat: 0.0, lon: 0.0 },
        "http://127.0.0.1:9",
        "bench",
        queue_dir,
    );
    config.skip = SkipPolicy::new(skip)?;
    config.threshold = 1.0;
    config.queue_capacity = 1;
    config.reduced = reduced;
    let frames = source(seed, window)?;
    match mode {
        Mode::Edge => {
            let timed = Timed {
                inner: work.scorer(reduced),
                stamps: stamps.clone(),
            };
            run_pipeline(
                frames,
                30,
                &config,
                Inference::Local(Box::new(timed)),
                |_, _| Ok(()),
            )?;
        }
        Mode::Cloud => {
            let rt = tokio::runtime::Runtime::new()?;
            let (w, st) = (work.clone(), stamps.clone());
            let factory: ScorerFactory = Arc::new(move |_camera: &str| {
                Ok(Box::new(Timed {
                    inner: w.scorer(reduced),
                    stamps: st.clone(),
                }) as Box<dyn FrameScorer>)
            });
            let mut rc = RelayConfig::new(queue_dir.join("relay"));
            rc.infer_bind = Some("127.0.0.1:0".parse()?);
            let relay = rt.block_on(start(rc, Some(factory)))?;
            config.mode = Mode::Cloud;
            config.infer_addr = relay.infer_addr.map(|a| a.to_string());
            let result = run_pipeline(
                frames,
                30,
                &config,
                Inference::Remote {
                    addr: config.infer_addr.clone().unwrap_or_default(),
                },
                |_, _| Ok(()),
            );
            rt.block_on(async { relay.shutdown() });
            result?;
        }
    }
    let stamps = stamps.lock().expect("stamp lock");
    Ok((stamps.len(), rate(&stamps)))
}

pub fn run_bench(config: &BenchConfig, seed: u64) -> anyhow::Result<Vec<BenchRow>> {
    anyhow::ensure!(
        config.window_s >= 1.0,
        "bench window {} s is shorter than 1 s",
        config.window_s
    );
    anyhow::ensure!(config.skip >= 1, "the skip rows need --skip of at least 1");
    anyhow::ensure!(
        (0.0..=1.0).contains(&config.flow_share),
        "flow share must lie in [0, 1]"
    );
    let work = match &config.models {
        Some(dir) => Work::Models(Arc::new(Models::load(dir)?)),
        None => Work::Synthetic {
            cost_ms: config.cost_ms,
            flow_share: config.flow_share,
        },
    };
    let window = Duration::from_secs_f64(config.window_s);
    let tmp = tempfile::tempdir()?;
    let variants = [
        ("baseline", 0, false),
        ("+skip", config.skip, false),
        ("+reduced", 0, true),
        ("+skip+reduced", config.skip, true),
    ];
    let mut rows = Vec::new();
    for &mode in &config.modes {
        let mut baseline = None;
        for (name, skip, reduced) in variants {
            let (n, fps) = measure(&work, mode, skip, reduced, seed, window, tmp.path())?;
            let effective = fps * f64::from(skip + 1);
            let base = *baseline.get_or_insert(effective);
            rows.push(BenchRow {
                name: name.into(),
                mode,
                skip,
                reduced,
                frames_scored: n,
                processing_fps: fps,
                effective_fps: effective,
                ratio: if base > 0.0 { effective / base } else { 0.0 },
            });
        }
    }
    Ok(rows)
}

pub fn render(rows: &[BenchRow]) -> String {
    let mut t = format!(
        "{:<15}{:<7}{:>8}{:>12}{:>14}{:>8}",
        "config", "mode", "frames", "proc fps", "effective fps", "ratio"
    );
    for r in rows {
        let mode = match r.mode {
            Mode::Edge => "edge",
            Mode::Cloud => "cloud",
        };
        let _ = write!(
            t,
            "\n{:<15}{:<7}{:>8}{:>12.2}{:>14.2}{:>8.3}",
            r.name, mode, r.frames_scored, r.processing_fps, r.effective_fps, r.ratio
        );
    }
    t
}

pub fn bench_cmd(args: &BenchArgs, seed: u64, config: Option<&Path>) -> anyhow::Result<Output> {
    let cfg = match config {
        Some(p) => read_toml(p)?,
        None => BenchConfig::from(args),
    };
    let rows = run_bench(&cfg, seed)?;
    Output::new(&rows, render(&rows))
}
