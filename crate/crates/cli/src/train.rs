use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use lens_core::fusion::{save_svm, SvmConfig, SvmSidecar, Trial};
use lens_core::pipeline::{
    stream_accuracy, train_fusion, train_streams, training_flows, TrainPlan, FUSION_FILE,
    SPATIAL_FILE, TEMPORAL_FILE,
};
use lens_core::streams::{
    load_model, load_sidecar, save_model, EpochMetrics, ModelSidecar, StreamKind,
};
use lens_core::videoio::{Clip, Dataset};
use serde::{Deserialize, Serialize};

use crate::{read_toml, write_json, Output};

pub const STREAMS_REPORT: &str = "train_streams.json";
pub const SVM_REPORT: &str = "train_svm.json";

/// Overrides applied on top of the desk-scale plan for the given seed.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    pub epochs: Option<usize>,
    pub spatial_epochs: Option<usize>,
    pub temporal_epochs: Option<usize>,
    pub batch: Option<usize>,
    pub lr0: Option<f64>,
    pub stack_len: Option<usize>,
    pub svm_folds: Option<usize>,
    pub svm_frame_stride: Option<usize>,
    pub cv_folds: Option<usize>,
    pub search_trials: Option<usize>,
}

impl PlanFile {
    pub fn apply(&self, mut plan: TrainPlan) -> TrainPlan {
        if let Some(e) = self.epochs {
            plan = plan.with_epochs(e);
        }
        for (cfg, epochs) in [
            (&mut plan.spatial, self.spatial_epochs),
            (&mut plan.temporal, self.temporal_epochs),
        ] {
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            if let Some(b) = self.batch {
                cfg.batch = b;
            }
            if let Some(lr) = self.lr0 {
                cfg.lr0 = lr;
            }
        }
        let fields = [
            (&mut plan.stack_len, self.stack_len),
            (&mut plan.svm_folds, self.svm_folds),
            (&mut plan.svm_frame_stride, self.svm_frame_stride),
            (&mut plan.cv_folds, self.cv_folds),
            (&mut plan.search_trials, self.search_trials),
        ];
        for (slot, v) in fields {
            if let Some(v) = v {
                *slot = v;
            }
        }
        plan
    }
}

pub fn load_plan(seed: u64, config: Option<&Path>) -> anyhow::Result<TrainPlan> {
    let file: PlanFile = match config {
        Some(p) => read_toml(p)?,
        None => PlanFile::default(),
    };
    let plan = file.apply(TrainPlan::desk(seed));
    plan.validate()?;
    Ok(plan)
}

pub fn load_dataset(root: &Path) -> anyhow::Result<Vec<Clip>> {
    let clips = Dataset::open(root)
        .and_then(|d| d.load_all())
        .with_context(|| format!("loading dataset {}", root.display()))?;
    anyhow::ensure!(!clips.is_empty(), "dataset {} has no clips", root.display());
    Ok(clips)
}

#[derive(Debug, Args)]
pub struct TrainStreamsArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Epochs for both streams; 0 writes the initialised models.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamsReport {
    pub clips: usize,
    pub plan: TrainPlan,
    pub spatial_history: Vec<EpochMetrics>,
    pub temporal_history: Vec<EpochMetrics>,
    pub spatial_train_accuracy: f64,
    pub temporal_train_accuracy: f64,
}

pub fn train_streams_cmd(
    args: &TrainStreamsArgs,
    seed: u64,
    config: Option<&Path>,
) -> anyhow::Result<Output> {
    let mut plan = load_plan(seed, config)?;
    if let Some(e) = args.epochs {
        plan = plan.with_epochs(e);
    }
    if plan.spatial.epochs == 0 || plan.temporal.epochs == 0 {
        tracing::warn!("zero epochs: writing initialised stream checkpoints");
    }
    let clips = load_dataset(&args.data)?;
    let flows = training_flows(&clips)?;
    tracing::info!("training streams on {} clips", clips.len());
    let trained = train_streams(&clips, &flows, &plan)?;
    let (sa, ta) = stream_accuracy(&trained.spatial, &trained.temporal, &clips, &flows)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let sidecar = |kind, config, history: &[EpochMetrics]| ModelSidecar {
        kind,
        config: Some(config),
        history: history.to_vec(),
    };
    save_model(
        &trained.spatial,
        args.out.join(SPATIAL_FILE),
        Some(&sidecar(
            StreamKind::Spatial,
            plan.spatial,
            &trained.spatial_history,
        )),
    )?;
    save_model(
        &trained.temporal,
        args.out.join(TEMPORAL_FILE),
        Some(&sidecar(
            StreamKind::Temporal,
            plan.temporal,
            &trained.temporal_history,
        )),
    )?;
    let report = StreamsReport {
        clips: clips.len(),
        plan,
        spatial_history: trained.spatial_history,
        temporal_history: trained.temporal_history,
        spatial_train_accuracy: sa,
        temporal_train_accuracy: ta,
    };
    write_json(&args.out.join(STREAMS_REPORT), &report)?;
    let text = format!(
        "streams trained on {} clips: spatial {:.3}, temporal {:.3} train accuracy\ncheckpoints in {}",
        report.clips,
        sa,
        ta,
        args.out.display()
    );
    Output::new(&report, text)
}

#[derive(Debug, Args)]
pub struct TrainSvmArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Directory holding the stream checkpoints; the SVM is written there too.
    #[arg(long)]
    pub models: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmReport {
    pub clips: usize,
    pub samples: usize,
    pub best: SvmConfig,
    pub cv_accuracy: f64,
    pub trials: Vec<Trial>,
}

pub fn train_svm_cmd(
    args: &TrainSvmArgs,
    seed: u64,
    config: Option<&Path>,
) -> anyhow::Result<Output> {
    let mut plan = load_plan(seed, config)?;
    let (sp, tp) = (
        args.models.join(SPATIAL_FILE),
        args.models.join(TEMPORAL_FILE),
    );
    let spatial = load_model(&sp).with_context(|| format!("loading {}", sp.display()))?;
    let temporal = load_model(&tp).with_context(|| format!("loading {}", tp.display()))?;
    // fold models must be trained exactly as the full streams were
    for (path, cfg) in [(&sp, &mut plan.spatial), (&tp, &mut plan.temporal)] {
        if let Ok(ModelSidecar {
            config: Some(c), ..
        }) = load_sidecar(path)
        {
            *cfg = c;
        }
    }
    plan.stack_len = temporal.stack_len();
    let clips = load_dataset(&args.data)?;
    let flows = training_flows(&clips)?;
    tracing::info!(
        "fitting fusion on {} clips with {} held-out folds",
        clips.len(),
        plan.svm_folds
    );
    let (svm, fusion) = train_fusion(&clips, &flows, &spatial, &temporal, &plan)?;
    let search = fusion.search;
    let cv = search
        .trials
        .iter()
        .find(|t| t.config == search.best)
        .map(|t| t.cv.clone());
    save_svm(
        &svm,
        args.models.join(FUSION_FILE),
        Some(&SvmSidecar {
            config: search.best,
            cv,
            trials: search.trials.clone(),
        }),
    )?;
    let report = SvmReport {
        clips: clips.len(),
        samples: fusion.features.len(),
        best: search.best,
        cv_accuracy: search.best_score,
        trials: search.trials,
    };
    write_json(&args.models.join(SVM_REPORT), &report)?;
    let b = &report.best;
    let text = format!(
        "fusion SVM on {} samples: cv accuracy {:.3} (degree {}, gamma {:.4}, coef0 {}, C {:.3})",
        report.samples, report.cv_accuracy, b.degree, b.gamma, b.coef0, b.c
    );
    Output::new(&report, text)
}
