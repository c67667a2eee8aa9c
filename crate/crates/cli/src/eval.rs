use std::fmt::Write;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, ValueEnum};
use lens_core::fusion::{
    complementary_confusion_set, random_search, svm_fit, svm_predict, FusionInput, SearchSpace,
};
use lens_core::pipeline::{evaluate_models, EvalReport, Models};
use lens_core::streams::ClassScores;
use lens_core::videoio::ActionLabel;

use crate::train::load_dataset;
use crate::{write_json, Output};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fixture {
    /// Seeded stream scores whose confusions do not overlap.
    Complementary,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, required_unless_present = "fixture")]
    pub data: Option<PathBuf>,
    /// Checkpoint directory.
    #[arg(long, required_unless_present = "fixture")]
    pub models: Option<PathBuf>,
    /// Score every n-th frame of each clip.
    #[arg(long, default_value_t = 5)]
    pub stride: usize,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Evaluate the fusion stage on a built-in score set instead.
    #[arg(long, value_enum, conflicts_with_all = ["data", "models"])]
    pub fixture: Option<Fixture>,
    /// Samples per class in the fixture.
    #[arg(long, default_value_t = 60)]
    pub per_class: usize,
}

fn argmax(p: &[f64]) -> ActionLabel {
    let probs: [f64; 4] = p.try_into().expect("four class scores");
    ClassScores { probs }.argmax()
}

/// Fits the SVM on one seeded complementary set and reports on a second.
pub fn complementary_report(seed: u64, per_class: usize) -> anyhow::Result<EvalReport> {
    let (train_x, train_y) = complementary_confusion_set(seed, per_class);
    let search = random_search(&train_x, &train_y, &SearchSpace::default(), 20, 5, seed)?;
    let svm = svm_fit(&train_x, &train_y, &search.best)?;
    let (xs, ys): (Vec<FusionInput>, Vec<ActionLabel>) =
        complementary_confusion_set(seed.wrapping_add(1), per_class);
    let spatial: Vec<ActionLabel> = xs.iter().map(|x| argmax(&x.features[..4])).collect();
    let temporal: Vec<ActionLabel> = xs.iter().map(|x| argmax(&x.features[4..])).collect();
    let fused = xs
        .iter()
        .map(|x| svm_predict(&svm, &x.features).map(|p| p.0))
        .collect::<lens_core::Result<Vec<_>>>()?;
    Ok(EvalReport::from_predictions(
        &ys, &spatial, &temporal, &fused,
    )?)
}

pub fn render(r: &EvalReport) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "{} clips", r.clips);
    for (name, v) in [
        ("spatial", &r.spatial),
        ("temporal", &r.temporal),
        ("fused", &r.fused),
    ] {
        let _ = writeln!(t, "\n{name} accuracy {:.3}\n{}", v.accuracy, v.confusion);
    }
    if let Some(a) = r.fused_frame_accuracy {
        let _ = writeln!(
            t,
            "\nfused per-frame accuracy {a:.3} over {} frames",
            r.frames
        );
    }
    let _ = writeln!(t, "\npercent change to fused");
    let _ = write!(t, "{:>10}{:>12}{:>12}", "", "spatial", "temporal");
    for (l, (s, tp)) in ActionLabel::ALL
        .iter()
        .zip(r.spatial_to_fused.iter().zip(&r.temporal_to_fused))
    {
        let _ = write!(
            t,
            "\n{:>10}{:>12}{:>12}",
            l.name(),
            s.to_string(),
            tp.to_string()
        );
    }
    t
}

pub fn eval_cmd(args: &EvalArgs, seed: u64) -> anyhow::Result<Output> {
    let report = match (args.fixture, &args.data, &args.models) {
        (Some(Fixture::Complementary), _, _) => complementary_report(seed, args.per_class)?,
        (None, Some(data), Some(models)) => {
            let m = Models::load(models)
                .with_context(|| format!("loading checkpoints from {}", models.display()))?;
            let clips = load_dataset(data)?;
            evaluate_models(&m, &clips, args.stride)?
        }
        _ => anyhow::bail!("eval needs --data and --models, or --fixture"),
    };
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    Output::new(&report, render(&report))
}
