use std::sync::Arc;

use lens_core::event::Gps;
use lens_core::fusion::{svm_fit, SvmConfig};
use lens_core::pipeline::{score_clip_offline, FrameScorer, FrameScores, Models, SyntheticScorer};
use lens_core::streams::{ClassScores, ModelShape, StreamKind, StreamModel};
use lens_core::videoio::{
    decode_clip, generate_clip, timestamp_for, ActionLabel, Clip, Frame, SkipPolicy, SynthParams,
    SyntheticCost,
};
use lens_edge::{run_agent, run_pipeline, EdgeConfig, Inference, Mode, RetryPolicy};
use lens_relay::{model_factory, start, RelayConfig, RelayHandle, Role, ScorerFactory};

/// Fixed fused output per frame, regardless of the pixels.
struct Scripted(fn(u32) -> ClassScores);

impl FrameScorer for Scripted {
    fn score(&mut self, frame: &Frame) -> lens_core::Result<FrameScores> {
        let s = (self.0)(frame.index);
        Ok(FrameScores {
            frame_index: frame.index,
            spatial: s,
            temporal: s,
            fused: s,
        })
    }
}

fn peaked(label: ActionLabel, conf: f64) -> ClassScores {
    let mut probs = [(1.0 - conf) / 3.0; 4];
    probs[label.index()] = conf;
    ClassScores { probs }
}

fn config(queue: &std::path::Path) -> EdgeConfig {
    let mut c = EdgeConfig::new(
        "cam-7",
        Gps {
            lat: 42.34,
            lon: -71.09,
        },
        "http://127.0.0.1:9",
        "edge-token",
        queue,
    );
    c.retry = RetryPolicy {
        base_ms: 20,
        cap_ms: 200,
        max_attempts: Some(20),
    };
    c
}

/// A seeded clip looped and renumbered to exactly `frames` frames.
fn clip(label: ActionLabel, frames: usize) -> Clip {
    let c = generate_clip(&SynthParams::new(7, 1, 1), label, 0, 0).unwrap();
    let looped = c
        .frames
        .iter()
        .cycle()
        .take(frames)
        .enumerate()
        .map(|(i, f)| {
            let mut f = f.clone();
            f.index = i as u32;
            f.timestamp_ms = timestamp_for(f.index, c.fps);
            f
        })
        .collect();
    Clip::new(looped, c.fps).unwrap()
}

fn random_models(seed: u64) -> Arc<Models> {
    let spatial = StreamModel::init(StreamKind::Spatial, ModelShape::spatial(), seed).unwrap();
    let temporal =
        StreamModel::init(StreamKind::Temporal, ModelShape::temporal(4), seed + 1).unwrap();
    let xs: Vec<[f64; 8]> = ActionLabel::ALL
        .iter()
        .map(|l| {
            let mut x = [0.0; 8];
            x[l.index()] = 1.0;
            x[4 + l.index()] = 1.0;
            x
        })
        .collect();
    let svm = svm_fit(&xs, &ActionLabel::ALL, &SvmConfig::default()).unwrap();
    Arc::new(Models::new(spatial, temporal, svm).unwrap())
}

async fn inference_relay(dir: &std::path::Path, factory: ScorerFactory) -> RelayHandle {
    let mut cfg = RelayConfig::new(dir).with_token("edge-token", "cam-7", Role::Edge);
    cfg.infer_bind = Some("127.0.0.1:0".parse().unwrap());
    start(cfg, Some(factory)).await.unwrap()
}

#[test]
fn sustained_crime_scores_fire_once_per_cooldown() {
    let dir = tempfile::tempdir().unwrap();
    let c = clip(ActionLabel::Shooting, 120);
    let mut seen = Vec::new();
    let report = run_pipeline(
        c.frames.clone(),
        c.fps,
        &config(dir.path()),
        Inference::Local(Box::new(Scripted(|_| peaked(ActionLabel::Shooting, 0.9)))),
        |e, clip| {
            seen.push((e.event_id, clip.clip.len(), clip.short));
            Ok(())
        },
    )
    .unwrap();
    assert_eq!(report.frames_in, 120);
    assert_eq!(report.frames_scored, 120);
    assert_eq!(report.events.len(), 1);
    let e = &report.events[0];
    assert_eq!(e.label, ActionLabel::Shooting);
    assert_eq!(e.camera_id, "cam-7");
    assert_eq!(
        e.gps,
        Gps {
            lat: 42.34,
            lon: -71.09
        }
    );
    assert!(e.confidence >= 0.5);
    // fires on the third agreeing frame; only three frames of history exist
    assert_eq!(seen, vec![(e.event_id, 3, true)]);
    assert!(e.short);
}

#[test]
fn quiet_scenes_and_high_thresholds_raise_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let c = clip(ActionLabel::NoAction, 60);
    let quiet = run_pipeline(
        c.frames.clone(),
        c.fps,
        &config(dir.path()),
        Inference::Local(Box::new(Scripted(|_| peaked(ActionLabel::NoAction, 0.99)))),
        |_, _| Ok(()),
    )
    .unwrap();
    assert!(quiet.events.is_empty());
    let mut strict = config(dir.path());
    strict.threshold = 1.0;
    let high = run_pipeline(
        c.frames.clone(),
        c.fps,
        &strict,
        Inference::Local(Box::new(Scripted(|_| peaked(ActionLabel::Theft, 0.99)))),
        |_, _| Ok(()),
    )
    .unwrap();
    assert!(high.events.is_empty());
}

#[test]
fn events_carry_the_four_seconds_before_detection() {
    let dir = tempfile::tempdir().unwrap();
    let c = clip(ActionLabel::Shooting, 360);
    let frames = c.frames.clone();
    let mut clips = Vec::new();
    let report = run_pipeline(
        frames,
        c.fps,
        &config(dir.path()),
        Inference::Local(Box::new(Scripted(|i| {
            if (148..=150).contains(&i) {
                peaked(ActionLabel::Assault, 0.8)
            } else {
                peaked(ActionLabel::NoAction, 0.8)
            }
        }))),
        |_, x| {
            clips.push(x.clone());
            Ok(())
        },
    )
    .unwrap();
    assert_eq!(report.events.len(), 1);
    let x = &clips[0];
    assert!(!x.short);
    let idx: Vec<u32> = x.clip.frames.iter().map(|f| f.index).collect();
    assert_eq!(idx, (31..=150).collect::<Vec<_>>());
}

#[test]
fn skipped_frames_are_never_scored() {
    let dir = tempfile::tempdir().unwrap();
    let c = clip(ActionLabel::Theft, 12);
    let mut cfg = config(dir.path());
    cfg.skip = SkipPolicy::new(2).unwrap();
    let r = run_pipeline(
        c.frames.clone(),
        c.fps,
        &cfg,
        Inference::Local(Box::new(Scripted(|_| peaked(ActionLabel::NoAction, 0.9)))),
        |_, _| Ok(()),
    )
    .unwrap();
    assert_eq!(r.frames_in, 12);
    let idx: Vec<u32> = r.scores.iter().map(|s| s.frame_index).collect();
    assert_eq!(idx, vec![0, 3, 6, 9]);
}

fn close(a: &ClassScores, b: &ClassScores) -> bool {
    a.probs
        .iter()
        .zip(&b.probs)
        .all(|(x, y)| (x - y).abs() <= 1e-5)
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn live_scores_match_offline_scores_in_both_modes() {
    let dir = tempfile::tempdir().unwrap();
    let models = random_models(21);
    for (skip, reduced) in [(0, false), (1, true)] {
        let relay = inference_relay(
            &dir.path().join(format!("r{skip}")),
            model_factory(models.clone(), reduced),
        )
        .await;
        let c = clip(ActionLabel::Assault, 30);
        let policy = SkipPolicy::new(skip).unwrap();
        let offline = score_clip_offline(&models, &c, policy, reduced).unwrap();
        for mode in [Mode::Edge, Mode::Cloud] {
            let mut cfg = config(dir.path());
            cfg.skip = policy;
            cfg.reduced = reduced;
            cfg.mode = mode;
            cfg.infer_addr = Some(relay.infer_addr.unwrap().to_string());
            let inference = Inference::for_config(&cfg, Some(models.clone())).unwrap();
            let frames = c.frames.clone();
            let fps = c.fps;
            let live = tokio::task::spawn_blocking(move || {
                run_pipeline(frames, fps, &cfg, inference, |_, _| Ok(()))
            })
            .await
            .unwrap()
            .unwrap();
            assert_eq!(live.scores.len(), offline.len(), "{mode:?}");
            for (a, b) in live.scores.iter().zip(&offline) {
                assert_eq!(a.frame_index, b.frame_index);
                assert!(
                    close(&a.fused, &b.fused)
                        && close(&a.spatial, &b.spatial)
                        && close(&a.temporal, &b.temporal)
                );
            }
        }
        relay.shutdown();
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn cloud_stream_delivers_every_frame_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let free: ScorerFactory = Arc::new(|_| {
        Ok(Box::new(SyntheticScorer {
            cost: SyntheticCost::from_millis(0.0),
        }) as Box<dyn FrameScorer>)
    });
    let relay = inference_relay(dir.path(), free).await;
    let c = clip(ActionLabel::Theft, 90);
    let mut cfg = config(dir.path());
    cfg.mode = Mode::Cloud;
    cfg.infer_addr = Some(relay.infer_addr.unwrap().to_string());
    let r = tokio::task::spawn_blocking(move || {
        run_pipeline(
            c.frames,
            c.fps,
            &cfg,
            Inference::for_config(&cfg, None).unwrap(),
            |_, _| Ok(()),
        )
    })
    .await
    .unwrap()
    .unwrap();
    let idx: Vec<u32> = r.scores.iter().map(|s| s.frame_index).collect();
    assert_eq!(idx, (0..90).collect::<Vec<_>>());
    assert_eq!(r.dropped, 0);
    relay.shutdown();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn slow_relay_drops_the_oldest_live_frames() {
    let dir = tempfile::tempdir().unwrap();
    let slow: ScorerFactory = Arc::new(|_| {
        Ok(Box::new(SyntheticScorer {
            cost: SyntheticCost::from_millis(100.0),
        }) as Box<dyn FrameScorer>)
    });
    let relay = inference_relay(dir.path(), slow).await;
    let c = clip(ActionLabel::Theft, 60);
    let mut cfg = config(dir.path());
    cfg.mode = Mode::Cloud;
    cfg.realtime = true;
    cfg.infer_addr = Some(relay.infer_addr.unwrap().to_string());
    let r = tokio::task::spawn_blocking(move || {
        run_pipeline(
            c.frames,
            c.fps,
            &cfg,
            Inference::for_config(&cfg, None).unwrap(),
            |_, _| Ok(()),
        )
    })
    .await
    .unwrap()
    .unwrap();
    assert!(r.dropped > 0);
    assert_eq!(r.frames_in, 60);
    assert_eq!(r.dropped + r.frames_scored, 60);
    assert!(r
        .scores
        .windows(2)
        .all(|w| w[0].frame_index < w[1].frame_index));
    assert_eq!(r.scores.last().unwrap().frame_index, 59);
    relay.shutdown();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn agent_delivers_detections_with_their_clips() {
    let dir = tempfile::tempdir().unwrap();
    let relay = start(
        RelayConfig::new(dir.path().join("relay"))
            .with_token("edge-token", "cam-7", Role::Edge)
            .with_token("chief", "chief", Role::Authority),
        None,
    )
    .await
    .unwrap();
    let mut cfg = config(&dir.path().join("queue"));
    cfg.relay_url = relay.url();
    let c = clip(ActionLabel::Shooting, 120);
    let report = run_agent(
        cfg,
        c,
        Inference::Local(Box::new(Scripted(|_| peaked(ActionLabel::Shooting, 0.9)))),
    )
    .await
    .unwrap();
    assert_eq!(report.pipeline.events.len(), 1);
    assert_eq!(report.transmit.delivered, 1);
    assert_eq!(report.pending, 0);
    let rows: Vec<serde_json::Value> = reqwest::Client::new()
        .get(format!("{}/v1/crimes", relay.url()))
        .bearer_auth("chief")
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(
        rows[0]["event_id"],
        report.pipeline.events[0].event_id.to_string()
    );
    let stored = relay
        .store
        .get_clip(rows[0]["clip_ref"].as_str().unwrap())
        .unwrap()
        .unwrap();
    assert_eq!(decode_clip(&stored).unwrap().len(), 3);
    relay.shutdown();
}
