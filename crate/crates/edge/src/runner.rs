//! The live pipeline: ingest → (skip) → score → detect, each stage on its
//! own thread joined by bounded queues, plus the async agent wrapper that
//! queues detections for delivery.

use std::sync::Arc;
use std::time::{Duration, Instant};

use lens_core::event::CrimeEvent;
use lens_core::pipeline::{
    assemble_event, DetectionState, EventSource, FrameProcessor, FrameScorer, FrameScores, Models,
};
use lens_core::videoio::{
    encode_clip, generate_clip, load_clip, timestamp_for, Clip, Extracted, Frame, RingBuffer,
    SynthParams,
};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use tokio::sync::mpsc;

use crate::config::{EdgeConfig, Mode, SourceConfig};
use crate::outbox::Outbox;
use crate::queue::{self, Overflow};
use crate::transmit::{TransmitStats, Transmitter};
use crate::{cloud, EdgeError};

pub enum Inference {
    /// Score on this device.
    Local(Box<dyn FrameScorer>),
    /// Stream frames to the relay's inference listener.
    Remote { addr: String },
}

impl Inference {
    /// What `config.mode` asks for, with local models from `models` or the
    /// configured checkpoint directory.
    pub fn for_config(config: &EdgeConfig, models: Option<Arc<Models>>) -> Result<Self, EdgeError> {
        match config.mode {
            Mode::Cloud => Ok(Inference::Remote {
                addr: config
                    .infer_addr
                    .clone()
                    .ok_or_else(|| EdgeError::Config("cloud mode needs infer_addr".into()))?,
            }),
            Mode::Edge => {
                let models = match (models, &config.models) {
                    (Some(m), _) => m,
                    (None, Some(dir)) => Arc::new(Models::load(dir)?),
                    (None, None) => {
                        return Err(EdgeError::Config(
                            "edge mode needs a models directory".into(),
                        ))
                    }
                };
                Ok(Inference::Local(Box::new(FrameProcessor::new(
                    models,
                    config.reduced,
                ))))
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    /// Frames read from the source.
    pub frames_in: u64,
    pub frames_scored: u64,
    /// Frames discarded by the drop-oldest send queue.
    pub dropped: u64,
    pub scores: Vec<FrameScores>,
    pub events: Vec<CrimeEvent>,
    pub wall_ms: f64,
}

fn epoch_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

/// Runs `frames` through the pipeline. Detection time is stream time: event
/// timestamps are the run's start plus each frame's offset, so the cooldown
/// behaves the same whether a recording is replayed in real time or not.
pub fn run_pipeline<I>(
    frames: I,
    fps: u16,
    config: &EdgeConfig,
    inference: Inference,
    mut on_event: impl FnMut(&CrimeEvent, &Extracted) -> Result<(), EdgeError>,
) -> Result<PipelineReport, EdgeError>
where
    I: IntoIterator<Item = Frame>,
    I::IntoIter: Send,
{
    config.validate()?;
    let started = Instant::now();
    let overflow = if config.realtime {
        Overflow::DropOldest
    } else {
        Overflow::Block
    };
    let (frame_tx, frame_rx) = queue::bounded::<Frame>(config.queue_capacity, overflow);
    let (score_tx, score_rx) =
        queue::bounded::<FrameScores>(config.queue_capacity, Overflow::Block);
    let drops = frame_tx.counter();
    let ring = Mutex::new(RingBuffer::new(config.ring_capacity, fps)?);
    let mut state = DetectionState::new(config.debounce, config.cooldown_ms)?;
    let source = EventSource {
        camera_id: config.camera_id.clone(),
        gps: config.gps,
    };
    let epoch0 = epoch_ms();
    let (skip, realtime) = (config.skip, config.realtime);
    let frames = frames.into_iter();

    let mut report = std::thread::scope(|s| -> Result<PipelineReport, EdgeError> {
        let ring = &ring;
        let ingest = s.spawn(move || {
            let mut n = 0u64;
            for (pos, frame) in frames.enumerate() {
                if realtime {
                    let due = Duration::from_millis(u64::from(frame.timestamp_ms));
                    if let Some(wait) = due.checked_sub(started.elapsed()) {
                        std::thread::sleep(wait);
                    }
                }
                n += 1;
                ring.lock().push(frame.clone());
                if skip.keeps(pos) && !frame_tx.send(frame) {
                    break;
                }
            }
            n
        });
        let camera = config.camera_id.clone();
        let retry = config.retry;
        let scorer = s.spawn(move || -> Result<(), EdgeError> {
            match inference {
                Inference::Local(mut scorer) => {
                    for frame in frame_rx {
                        if !score_tx.send(scorer.score(&frame)?) {
                            break;
                        }
                    }
                    Ok(())
                }
                Inference::Remote { addr } => {
                    let sock = cloud::connect(&addr, &camera, &retry)?;
                    cloud::stream(sock, frame_rx, |scores| score_tx.send(scores)).map(|_| ())
                }
            }
        });

        let mut report = PipelineReport::default();
        for scores in score_rx {
            let now = epoch0 + u64::from(timestamp_for(scores.frame_index, fps));
            if let Some(d) = state.detect(&scores.fused, config.threshold, now) {
                let (event, clip) = assemble_event(&d, &scores, &ring.lock(), &source)?;
                tracing::info!(
                    "{} detected at frame {} ({:.3}), event {}",
                    event.label.name(),
                    scores.frame_index,
                    event.confidence,
                    event.event_id
                );
                on_event(&event, &clip)?;
                report.events.push(event);
            }
            report.scores.push(scores);
        }
        scorer
            .join()
            .map_err(|_| EdgeError::Stream("scoring thread panicked".into()))??;
        report.frames_in = ingest
            .join()
            .map_err(|_| EdgeError::Stream("ingest thread panicked".into()))?;
        Ok(report)
    })?;
    report.frames_scored = report.scores.len() as u64;
    report.dropped = drops.get();
    report.wall_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(report)
}

pub fn load_source(source: &SourceConfig) -> Result<Clip, EdgeError> {
    match source {
        SourceConfig::Clip { path } => Ok(load_clip(path)?),
        &SourceConfig::Synthetic {
            seed,
            label,
            group,
            clip,
        } => {
            let params = SynthParams::new(seed, group + 1, clip + 1);
            Ok(generate_clip(&params, label, group, clip)?)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentReport {
    pub pipeline: PipelineReport,
    pub transmit: TransmitStats,
    /// Events still on disk when the agent stopped.
    pub pending: usize,
}

/// Runs the pipeline over `clip` and delivers every detection (clip first,
/// then event) before returning. Events survive in the on-disk queue if the
/// relay cannot be reached within the retry policy.
pub async fn run_agent(
    config: EdgeConfig,
    clip: Clip,
    inference: Inference,
) -> Result<AgentReport, EdgeError> {
    config.validate()?;
    let outbox = Arc::new(Outbox::open(&config.queue_dir)?);
    let transmitter = Transmitter::new(&config.relay_url, &config.token, config.retry)?;
    let (wake_tx, wake_rx) = mpsc::channel(1);
    let sender = tokio::spawn(transmitter.run(outbox.clone(), wake_rx));
    let ob = outbox.clone();
    let pipeline = tokio::task::spawn_blocking(move || {
        run_pipeline(
            clip.frames,
            clip.fps,
            &config,
            inference,
            |event, extracted| {
                ob.enqueue(event, Some(&encode_clip(&extracted.clip)?))?;
                let _ = wake_tx.try_send(());
                Ok(())
            },
        )
    })
    .await
    .map_err(|e| EdgeError::Stream(format!("pipeline task failed: {e}")))?;
    let delivered = sender
        .await
        .map_err(|e| EdgeError::Stream(format!("transmitter task failed: {e}")))?;
    let pipeline = pipeline?;
    let transmit = match delivered {
        Ok(stats) => stats,
        Err(EdgeError::Unreachable(reason)) => {
            tracing::warn!("relay unreachable, events left queued: {reason}");
            TransmitStats::default()
        }
        Err(e) => return Err(e),
    };
    Ok(AgentReport {
        pipeline,
        transmit,
        pending: outbox.len()?,
    })
}
