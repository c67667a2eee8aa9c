//! Acceptance suite. Runs every criterion in sequence (timing criteria must
//! not share the CPU with training), prints one PASS/FAIL line each and exits
//! non-zero if any failed.

use std::net::SocketAddr;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use anyhow::{ensure, Context, Result};
use axum::body::Bytes;
use axum::extract::{Request, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use lens_cli::bench::{run_bench, BenchConfig, BenchRow};
use lens_cli::data::{gen_data, GenDataArgs};
use lens_cli::eval::{complementary_report, eval_cmd, EvalArgs};
use lens_cli::train::{train_streams_cmd, train_svm_cmd, TrainStreamsArgs, TrainSvmArgs};
use lens_core::event::Gps;
use lens_core::fusion::{
    complementary_confusion_set, kfold_cv, kkt_violation, percent_change, poly_kernel, pr_points,
    svm_fit, svm_predict, SvmConfig,
};
use lens_core::optflow::{endpoint_error, tvl1_flow, FlowField, Tvl1Params};
use lens_core::pipeline::{
    score_clip_offline, DetectionState, FrameProcessor, FrameScores, Models,
};
use lens_core::streams::{
    cross_modality_init, gradient_check_with, GradCheckConfig, ModelShape, ParamGroup,
    PlateauScheduler, Sgd, StreamKind, StreamModel, Tensor,
};
use lens_core::videoio::{
    generate_clip, measure_throughput, timestamp_for, ActionLabel, Clip, Frame, SkipPolicy,
    SynthParams,
};
use lens_edge::{
    load_source, run_agent, run_pipeline, EdgeConfig, Inference, Mode, RetryPolicy, SourceConfig,
};
use lens_relay::{model_factory, start, RelayConfig, RelayHandle, Role};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use sha2::{Digest, Sha256};

const EDGE: &str = "edge-token";
const CHIEF: &str = "chief-token";
const CIVIL: &str = "civil-token";

struct Suite {
    failed: usize,
    total: usize,
}

impl Suite {
    fn check(&mut self, name: &str, f: impl FnOnce() -> Result<String>) {
        self.total += 1;
        let started = Instant::now();
        let outcome = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(Ok(detail)) => Ok(detail),
            Ok(Err(e)) => Err(format!("{e:#}")),
            Err(p) => Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into())),
        };
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS  {name} ({secs:.1} s): {d}"),
            Err(d) => {
                self.failed += 1;
                println!("FAIL  {name} ({secs:.1} s): {d}");
            }
        }
    }
}

// ---- flow ---------------------------------------------------------------

/// Sum of sinusoids with whole cycle counts, so a wrapped integer shift is an
/// exact translation.
fn texture(n: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<[f32; 4]> = (0..12)
        .map(|_| {
            let sign = |r: &mut ChaCha8Rng| if r.random_bool(0.5) { 1.0 } else { -1.0 };
            let kx = rng.random_range(1..6) as f32 * sign(&mut rng);
            let ky = rng.random_range(1..6) as f32 * sign(&mut rng);
            [
                kx,
                ky,
                rng.random_range(0.0..std::f32::consts::TAU),
                rng.random_range(0.5..1.0),
            ]
        })
        .collect();
    let norm: f32 = waves.iter().map(|w| w[3]).sum();
    let mut out = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let acc: f32 = waves
                .iter()
                .map(|&[kx, ky, ph, a]| {
                    a * (std::f32::consts::TAU * (kx * x as f32 + ky * y as f32) / n as f32 + ph)
                        .sin()
                })
                .sum();
            out.push(0.5 + 0.5 * acc / norm);
        }
    }
    out
}

fn gray(n: usize, plane: &[f32], sx: i32, sy: i32, index: u32) -> Frame {
    let mut pixels = Vec::with_capacity(n * n * 3);
    for y in 0..n as i32 {
        for x in 0..n as i32 {
            let xs = (x - sx).rem_euclid(n as i32) as usize;
            let ys = (y - sy).rem_euclid(n as i32) as usize;
            let b = (plane[ys * n + xs].clamp(0.0, 1.0) * 255.0).round() as u8;
            pixels.extend([b, b, b]);
        }
    }
    Frame::at(n, n, pixels, index, 30).unwrap()
}

fn flow_accuracy() -> Result<String> {
    let shifts = [
        (1, 0),
        (0, -1),
        (-2, 3),
        (4, -4),
        (-4, 0),
        (3, 3),
        (-1, -4),
        (2, -2),
    ];
    let params = Tvl1Params::default();
    let (mut epes, mut slowest) = (Vec::new(), 0.0f64);
    for (i, &(sx, sy)) in shifts.iter().enumerate() {
        let plane = texture(64, 40 + i as u64);
        let (a, b) = (gray(64, &plane, 0, 0, 0), gray(64, &plane, sx, sy, 1));
        let t = Instant::now();
        let flow = tvl1_flow(&a, &b, &params)?;
        slowest = slowest.max(t.elapsed().as_secs_f64());
        epes.push(endpoint_error(
            &flow,
            &FlowField::uniform(64, 64, sx as f32, sy as f32),
        )?);
    }
    let mean = epes.iter().sum::<f64>() / epes.len() as f64;
    let worst = epes.iter().cloned().fold(0.0, f64::max);
    let still = gray(64, &texture(64, 99), 0, 0, 0);
    let zero = tvl1_flow(&still, &still, &params)?.max_magnitude();
    ensure!(mean < 0.5, "mean EPE {mean:.4} px");
    ensure!(zero < 1e-3, "identical frames gave {zero} px");
    ensure!(slowest < 5.0, "slowest pair took {slowest:.2} s");
    Ok(format!(
        "mean EPE {mean:.4} px (worst {worst:.4}) over {} shifts, identical pair max {zero:.1e} px, slowest {slowest:.2} s",
        epes.len()
    ))
}

// ---- gradients and training mechanics -------------------------------------

fn random_input(shape: &ModelShape, rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = Tensor::zeros(shape.input_channels, shape.input_height, shape.input_width);
    t.data
        .iter_mut()
        .for_each(|x| *x = rng.random_range(-1.0..1.0));
    t
}

fn gradient_correctness() -> Result<String> {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for seed in 0..5u64 {
        for (kind, shape) in [
            (StreamKind::Spatial, ModelShape::spatial()),
            (StreamKind::Temporal, ModelShape::temporal(10)),
        ] {
            let model = StreamModel::init(kind, shape, seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let inputs: Vec<Tensor> = (0..3).map(|_| random_input(&shape, &mut rng)).collect();
            let cfg = GradCheckConfig {
                samples: 100,
                seed,
                ..GradCheckConfig::default()
            };
            let label = ActionLabel::ALL[seed as usize % 4];
            let r = gradient_check_with(&model, &inputs, label, &cfg)?;
            ensure!(r.checked >= 100, "only {} parameters checked", r.checked);
            ensure!(
                r.max_rel_error < 1e-4,
                "seed {seed} {kind:?}: relative error {:.2e}",
                r.max_rel_error
            );
            worst = worst.max(r.max_rel_error);
            checked += r.checked;
        }
    }
    Ok(format!(
        "max relative error {worst:.2e} over {checked} parameters, seeds 0-4, both streams"
    ))
}

fn training_mechanics() -> Result<String> {
    // momentum on L(θ) = θ², θ0 = 1, lr 0.1, momentum 0.9; by hand:
    // v1 = -0.2, θ1 = 0.8; v2 = -0.34, θ2 = 0.46; v3 = -0.398, θ3 = 0.062
    let mut sgd = Sgd::new(0.1, 0.9, 1)?;
    let mut theta = [1.0];
    let mut got = Vec::new();
    for _ in 0..3 {
        let g = [2.0 * theta[0]];
        sgd.step(&mut theta, &g);
        got.push(theta[0]);
    }
    for (g, want) in got.iter().zip([0.8, 0.46, 0.062]) {
        ensure!((g - want).abs() < 1e-12, "momentum trajectory {got:?}");
    }
    // 40 further steps against powers of the recurrence matrix on (θ, v)
    let a = DMatrix::from_row_slice(2, 2, &[1.0 - 0.2, 0.9, -0.2, 0.9]);
    let state = DMatrix::from_column_slice(2, 1, &[got[2], sgd.velocity()[0]]);
    for _ in 0..40 {
        let g = [2.0 * theta[0]];
        sgd.step(&mut theta, &g);
    }
    let want = a.pow(40) * state;
    ensure!(
        (theta[0] - want[0]).abs() < 1e-12,
        "after 43 steps {} vs {}",
        theta[0],
        want[0]
    );

    let decays = |seq: &[f64], patience| -> Result<Vec<usize>> {
        let mut s = PlateauScheduler::new(1.0, 0.5, patience)?;
        Ok(seq
            .iter()
            .enumerate()
            .filter(|(_, &m)| s.step(m))
            .map(|(i, _)| i)
            .collect())
    };
    let scripts: [(&[f64], usize, Vec<usize>); 3] = [
        (&[0.5, 0.5, 0.5], 1, vec![2]),
        (&[0.5, 0.5, 0.5, 0.5, 0.5], 1, vec![2, 4]),
        (
            &[0.1, 0.2, 0.2, 0.2, 0.2, 0.3, 0.3, 0.3, 0.3, 0.3],
            3,
            vec![9],
        ),
    ];
    for (seq, patience, want) in &scripts {
        let got = decays(seq, *patience)?;
        ensure!(
            &got == want,
            "scheduler on {seq:?} (patience {patience}) decayed at {got:?}, expected {want:?}"
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (f, k, c) = (8, 3, 20);
    let rgb: Vec<f64> = (0..f * 3 * k * k)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let out = cross_modality_init(&rgb, f, k, c)?;
    ensure!(
        out.len() == f * c * k * k,
        "output has {} weights",
        out.len()
    );
    let mut max_spread: f64 = 0.0;
    for fi in 0..f {
        for pos in 0..k * k {
            let vals: Vec<f64> = (0..c).map(|ch| out[(fi * c + ch) * k * k + pos]).collect();
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            max_spread = max_spread.max(hi - lo);
        }
    }
    ensure!(max_spread == 0.0, "cross-channel spread {max_spread:e}");
    let spatial = StreamModel::init(StreamKind::Spatial, ModelShape::spatial(), 3)?;
    let temporal = StreamModel::temporal_from_spatial(&spatial, 10)?;
    let w = &temporal.params[temporal.group_range(ParamGroup::ConvWeight)];
    let (tc, kk) = (
        temporal.shape.input_channels,
        temporal.shape.kernel * temporal.shape.kernel,
    );
    for fi in 0..temporal.shape.filters {
        let filt = &w[fi * tc * kk..(fi + 1) * tc * kk];
        ensure!(
            filt.chunks(kk).all(|ch| ch == &filt[..kk]),
            "temporal filter {fi} differs across channels"
        );
    }
    Ok(format!(
        "momentum matches by hand and over 43 steps to 1e-12; {} scheduler scripts exact; identical channels",
        scripts.len()
    ))
}

// ---- fusion and SVM ----------------------------------------------------------

fn fusion_property() -> Result<String> {
    let r = complementary_report(7, 60)?;
    let (s, t, f) = (r.spatial.accuracy, r.temporal.accuracy, r.fused.accuracy);
    ensure!(
        f > s && f > t,
        "fused {f:.3} spatial {s:.3} temporal {t:.3}"
    );
    let inf = percent_change(&[0, 10, 5, 0], &[12, 10, 10, 0])?;
    ensure!(
        inf[0].is_infinite(),
        "0 → 12 should be infinite, got {}",
        inf[0]
    );
    ensure!(
        inf[1].0 == 0.0 && inf[2].0 == 100.0 && inf[3].0 == 0.0,
        "changes {inf:?}"
    );
    let json = serde_json::to_string(&inf[0])?;
    ensure!(json == "\"inf\"", "infinite change serialised as {json}");
    let spatial_zero = r
        .spatial
        .confusion
        .per_class_correct()
        .iter()
        .position(|&c| c == 0);
    if let Some(k) = spatial_zero {
        ensure!(
            r.spatial_to_fused[k].is_infinite() || r.fused.confusion.per_class_correct()[k] == 0
        );
    }
    Ok(format!(
        "fused {f:.3} > spatial {s:.3}, temporal {t:.3}; spatial→fused change {}",
        r.spatial_to_fused
            .iter()
            .map(|p| p.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    ))
}

fn svm_correctness() -> Result<String> {
    let cfg = SvmConfig {
        gamma: 2.0,
        c: 10.0,
        ..SvmConfig::default()
    };
    let mut worst_kkt: f64 = 0.0;
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for label in ActionLabel::ALL {
            for _ in 0..15 {
                let mut x = [0.0; 8];
                x.iter_mut().for_each(|v| *v = rng.random_range(0.0..0.05));
                x[label.index()] += 0.8;
                x[4 + label.index()] += 0.8;
                xs.push(x);
                ys.push(label);
            }
        }
        let m = svm_fit(&xs, &ys, &cfg)?;
        for (x, y) in xs.iter().zip(&ys) {
            ensure!(
                svm_predict(&m, x)?.0 == *y,
                "separable set {seed} misclassified"
            );
        }
        ensure!(m.converged(), "SMO did not converge on set {seed}");
        let kkt = kkt_violation(&m, &xs, &ys)?;
        ensure!(
            kkt <= cfg.tol,
            "set {seed}: KKT violation {kkt:e} > tol {}",
            cfg.tol
        );
        worst_kkt = worst_kkt.max(kkt);
    }

    let mut min_eig = f64::INFINITY;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..8).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        for coef0 in [0.0, 1.0] {
            let c = SvmConfig {
                gamma: rng.random_range(0.01..2.0),
                coef0,
                ..SvmConfig::default()
            };
            let gram = DMatrix::from_fn(xs.len(), xs.len(), |i, j| {
                poly_kernel(&xs[i], &xs[j], &c).unwrap()
            });
            let scale = gram.diagonal().max().max(1.0);
            let e = (gram / scale).symmetric_eigenvalues().min();
            ensure!(e >= -1e-8, "seed {seed}: min eigenvalue {e:e}");
            min_eig = min_eig.min(e);
        }
    }

    let (xs, ys) = complementary_confusion_set(5, 50);
    let mut means = Vec::new();
    for seed in 0..10u64 {
        let mut shuffled = ys.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(100 + seed));
        let r = kfold_cv(&xs, &shuffled, &cfg, 5, seed)?;
        ensure!(
            (r.mean - 0.25).abs() <= 0.1,
            "shuffled seed {seed}: cv {:.3}",
            r.mean
        );
        means.push(r.mean);
    }
    let lo = means.iter().cloned().fold(1.0, f64::min);
    let hi = means.iter().cloned().fold(0.0, f64::max);
    Ok(format!(
        "separable sets 100%, worst KKT {worst_kkt:.1e} ≤ tol; min scaled Gram eigenvalue {min_eig:.1e}; shuffled CV in [{lo:.3}, {hi:.3}]"
    ))
}

// ---- throughput ----------------------------------------------------------------

fn throughput() -> Result<String> {
    let started = Instant::now();
    let mut lines = Vec::new();
    for (skip, want) in [(1u32, 2.0), (3, 4.0)] {
        let cfg = BenchConfig {
            cost_ms: 100.0,
            window_s: 1.0,
            skip,
            ..BenchConfig::default()
        };
        let rows = run_bench(&cfg, 7)?;
        let skip_rows: Vec<&BenchRow> = rows.iter().filter(|r| r.name == "+skip").collect();
        ensure!(skip_rows.len() == 2, "expected a +skip row per mode");
        for r in skip_rows {
            ensure!(
                (r.ratio - want).abs() <= 0.05 * want,
                "skip {skip} {:?}: ratio {:.3}, expected {want} ± 5%",
                r.mode,
                r.ratio
            );
            lines.push(format!("skip {skip} {:?} {:.3}", r.mode, r.ratio));
        }
        let base = rows
            .iter()
            .find(|r| r.name == "baseline")
            .map_or(0.0, |r| r.ratio);
        ensure!(base == 1.0, "baseline ratio {base}");
    }
    let frame = Frame::blank(8, 8, 0, 30);
    for skip in [1u32, 3] {
        let policy = SkipPolicy::new(skip)?;
        let r = measure_throughput(
            std::iter::repeat(frame.clone()),
            |_| {},
            policy,
            Duration::from_secs(1),
        )?;
        ensure!(
            r.frames_covered == r.frames_processed * u64::from(skip + 1),
            "cost-free counts {r:?}"
        );
        ensure!(
            r.effective_fps / r.processing_fps == f64::from(skip + 1),
            "cost-free ratio {r:?}"
        );
    }
    let secs = started.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "bench took {secs:.1} s");
    Ok(format!(
        "{}; cost-free ratios exact; {secs:.1} s",
        lines.join(", ")
    ))
}

// ---- trained models --------------------------------------------------------------

struct Trained {
    dir: PathBuf,
    models: Arc<Models>,
}

fn train_desk(root: &Path) -> Result<Trained> {
    let data = root.join("data");
    let dir = root.join("models");
    gen_data(
        &GenDataArgs {
            out: data.clone(),
            groups: 4,
            clips: 6,
            width: 64,
            height: 64,
        },
        7,
    )?;
    let t = Instant::now();
    let streams = train_streams_cmd(
        &TrainStreamsArgs {
            data: data.clone(),
            out: dir.clone(),
            epochs: None,
        },
        7,
        None,
    )?;
    let svm = train_svm_cmd(
        &TrainSvmArgs {
            data: data.clone(),
            models: dir.clone(),
        },
        7,
        None,
    )?;
    println!(
        "      {} ({:.0} s)",
        streams.text.replace('\n', "; "),
        t.elapsed().as_secs_f64()
    );
    println!("      {}", svm.text);
    let test = root.join("test");
    gen_data(
        &GenDataArgs {
            out: test.clone(),
            groups: 1,
            clips: 3,
            width: 64,
            height: 64,
        },
        8,
    )?;
    let eval = eval_cmd(
        &EvalArgs {
            data: Some(test),
            models: Some(dir.clone()),
            stride: 5,
            out: None,
            fixture: None,
            per_class: 0,
        },
        7,
    )?;
    let acc = |k: &str| eval.json[k]["accuracy"].as_f64().unwrap_or(f64::NAN);
    println!(
        "      held-out clips: spatial {:.3}, temporal {:.3}, fused {:.3}; fused per frame {:.3}",
        acc("spatial"),
        acc("temporal"),
        acc("fused"),
        eval.json["fused_frame_accuracy"]
            .as_f64()
            .unwrap_or(f64::NAN)
    );
    Ok(Trained {
        models: Arc::new(Models::load(&dir)?),
        dir,
    })
}

fn relay_config(dir: &Path) -> RelayConfig {
    RelayConfig::new(dir)
        .with_token(EDGE, "cam-7", Role::Edge)
        .with_token(CHIEF, "chief", Role::Authority)
        .with_token(CIVIL, "jo", Role::Civilian)
}

fn max_diff(a: &FrameScores, b: &FrameScores) -> f64 {
    [
        (&a.spatial, &b.spatial),
        (&a.temporal, &b.temporal),
        (&a.fused, &b.fused),
    ]
    .iter()
    .flat_map(|(x, y)| x.probs.iter().zip(y.probs).map(|(p, q)| (p - q).abs()))
    .fold(0.0, f64::max)
}

fn equivalence_clips() -> Result<Vec<Clip>> {
    (0..10u64)
        .map(|i| {
            Ok(generate_clip(
                &SynthParams::new(200 + i, 1, 1),
                ActionLabel::ALL[i as usize % 4],
                0,
                0,
            )?)
        })
        .collect()
}

fn streaming_equivalence(
    rt: &tokio::runtime::Runtime,
    t: &Trained,
    clips: &[Clip],
) -> Result<String> {
    let tmp = tempfile::tempdir()?;
    let mut rc = relay_config(&tmp.path().join("relay"));
    rc.infer_bind = Some("127.0.0.1:0".parse()?);
    let relay = rt.block_on(start(rc, Some(model_factory(t.models.clone(), false))))?;
    let relay_reduced = {
        let mut rc = relay_config(&tmp.path().join("relay2"));
        rc.infer_bind = Some("127.0.0.1:0".parse()?);
        rt.block_on(start(rc, Some(model_factory(t.models.clone(), true))))?
    };
    let mut worst: f64 = 0.0;
    let mut frames = 0;
    for (i, clip) in clips.iter().enumerate() {
        let (skip, reduced) = if i % 2 == 0 { (0, false) } else { (1, true) };
        let policy = SkipPolicy::new(skip)?;
        let offline = score_clip_offline(&t.models, clip, policy, reduced)?;
        for mode in [Mode::Edge, Mode::Cloud] {
            let mut cfg = EdgeConfig::new(
                "cam-eq",
                Gps { lat: 1.0, lon: 1.0 },
                "http://127.0.0.1:9",
                EDGE,
                tmp.path(),
            );
            cfg.skip = policy;
            cfg.reduced = reduced;
            let inference = match mode {
                Mode::Edge => {
                    Inference::Local(Box::new(FrameProcessor::new(t.models.clone(), reduced)))
                }
                Mode::Cloud => {
                    let r = if reduced { &relay_reduced } else { &relay };
                    let addr = r.infer_addr.context("inference listener")?.to_string();
                    cfg.mode = Mode::Cloud;
                    cfg.infer_addr = Some(addr.clone());
                    Inference::Remote { addr }
                }
            };
            let live = run_pipeline(
                clip.frames.clone(),
                clip.fps,
                &cfg,
                inference,
                |_, _| Ok(()),
            )?;
            ensure!(
                live.scores.len() == offline.len(),
                "clip {i} {mode:?}: {} live scores vs {} offline",
                live.scores.len(),
                offline.len()
            );
            for (a, b) in live.scores.iter().zip(&offline) {
                ensure!(
                    a.frame_index == b.frame_index,
                    "clip {i} {mode:?}: frame order differs"
                );
                let d = max_diff(a, b);
                ensure!(
                    d <= 1e-5,
                    "clip {i} {mode:?} frame {}: difference {d:e}",
                    a.frame_index
                );
                worst = worst.max(d);
            }
            frames += live.scores.len();
        }
    }
    relay.shutdown();
    relay_reduced.shutdown();
    Ok(format!(
        "{} clips, {frames} frames over edge and cloud modes, max difference {worst:.1e}",
        clips.len()
    ))
}

// ---- loopback integration ----------------------------------------------------------

#[derive(Clone)]
struct Proxy {
    upstream: String,
    lose_acks: Arc<AtomicUsize>,
    uploads: Arc<Mutex<Vec<String>>>,
    client: reqwest::Client,
}

/// Forwards to the relay. Records the checksum of every clip upload and
/// answers 503 to the first few event posts after the relay stored them.
async fn forward(State(p): State<Proxy>, req: Request) -> Response {
    let (parts, body) = req.into_parts();
    let body: Bytes = axum::body::to_bytes(body, usize::MAX).await.unwrap();
    if parts.uri.path() == "/v1/clips" {
        p.uploads
            .lock()
            .unwrap()
            .push(hex::encode(Sha256::digest(&body)));
    }
    let mut out = p
        .client
        .request(parts.method.clone(), format!("{}{}", p.upstream, parts.uri))
        .body(body.to_vec());
    for name in ["authorization", "content-type"] {
        if let Some(v) = parts.headers.get(name) {
            out = out.header(name, v.to_str().unwrap());
        }
    }
    let resp = match out.send().await {
        Ok(r) => r,
        Err(_) => return StatusCode::BAD_GATEWAY.into_response(),
    };
    let status = StatusCode::from_u16(resp.status().as_u16()).unwrap();
    let bytes = resp.bytes().await.unwrap_or_default();
    let lose = parts.uri.path() == "/v1/events"
        && p.lose_acks
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok();
    if lose {
        return StatusCode::SERVICE_UNAVAILABLE.into_response();
    }
    (status, bytes.to_vec()).into_response()
}

async fn flaky_proxy(upstream: String, lose: usize) -> (SocketAddr, Proxy) {
    let state = Proxy {
        upstream,
        lose_acks: Arc::new(AtomicUsize::new(lose)),
        uploads: Arc::default(),
        client: reqwest::Client::new(),
    };
    let app = axum::Router::new()
        .fallback(forward)
        .with_state(state.clone());
    let l = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = l.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(l, app).await.unwrap() });
    (addr, state)
}

async fn get_json(url: String, token: &str) -> Result<(u16, Value)> {
    let r = reqwest::Client::new()
        .get(url)
        .bearer_auth(token)
        .send()
        .await?;
    let status = r.status().as_u16();
    let text = r.text().await?;
    Ok((
        status,
        serde_json::from_str(&text).unwrap_or(Value::String(text)),
    ))
}

fn e2e_clip() -> Result<Clip> {
    Ok(load_source(&SourceConfig::Synthetic {
        seed: 7,
        label: ActionLabel::Shooting,
        group: 0,
        clip: 6,
    })?)
}

fn loopback(
    rt: &tokio::runtime::Runtime,
    t: &Trained,
    relay: &RelayHandle,
    queue: &Path,
) -> Result<String> {
    let gps = Gps {
        lat: 42.3601,
        lon: -71.0589,
    };
    let clip = e2e_clip()?;
    let started = Instant::now();
    let (proxy, state) = rt.block_on(flaky_proxy(relay.url(), 3));
    let mut cfg = EdgeConfig::new("cam-7", gps, &format!("http://{proxy}"), EDGE, queue);
    cfg.models = Some(t.dir.clone());
    cfg.retry = RetryPolicy {
        base_ms: 20,
        cap_ms: 200,
        max_attempts: Some(50),
    };
    let inference = Inference::for_config(&cfg, None)?;
    let report = rt.block_on(run_agent(cfg, clip, inference))?;
    ensure!(
        report.pipeline.events.len() == 1,
        "{} events detected",
        report.pipeline.events.len()
    );
    ensure!(
        report.transmit.retries >= 3,
        "only {} retries",
        report.transmit.retries
    );
    ensure!(
        report.transmit.delivered == 1 && report.pending == 0,
        "delivery {:?}",
        report.transmit
    );
    let sent = &report.pipeline.events[0];

    let (status, rows) = rt.block_on(get_json(format!("{}/v1/crimes", relay.url()), CHIEF))?;
    ensure!(status == 200, "authority query returned {status}");
    let rows = rows.as_array().context("crime list")?;
    ensure!(rows.len() == 1, "relay stored {} events", rows.len());
    let row = &rows[0];
    ensure!(
        row["event_id"] == sent.event_id.to_string(),
        "stored a different event"
    );
    ensure!(row["camera_id"] == "cam-7", "camera {}", row["camera_id"]);
    ensure!(
        row["gps"]["lat"] == 42.3601 && row["gps"]["lon"] == -71.0589,
        "gps {}",
        row["gps"]
    );
    ensure!(
        row["label"] == serde_json::to_value(ActionLabel::Shooting)?,
        "label {}",
        row["label"]
    );

    let id = sent.event_id;
    let bytes = rt.block_on(async {
        let r = reqwest::Client::new()
            .get(format!("{}/v1/crimes/{id}/clip", relay.url()))
            .bearer_auth(CHIEF)
            .send()
            .await?;
        ensure!(r.status() == 200, "clip fetch returned {}", r.status());
        Ok(r.bytes().await?)
    })?;
    let fetched = hex::encode(Sha256::digest(&bytes));
    let uploads = state.uploads.lock().unwrap().clone();
    ensure!(
        !uploads.is_empty() && uploads.iter().all(|u| *u == fetched),
        "uploaded {uploads:?}, fetched {fetched}"
    );
    let secs = started.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1} s");
    Ok(format!(
        "1 Shooting event ({:.3}) stored under {} retries, {} frames, clip sha256 {}…, {secs:.1} s",
        sent.confidence,
        report.transmit.retries,
        report.pipeline.frames_scored,
        &fetched[..12]
    ))
}

// ---- threshold sweep ------------------------------------------------------------------

fn threshold_monotonicity(t: &Trained, clips: &[Clip]) -> Result<String> {
    let mut recorded: Vec<(ActionLabel, Vec<FrameScores>, u16)> = Vec::new();
    for clip in clips.iter().cloned().chain([e2e_clip()?]) {
        let label = clip.label.context("labeled clip")?;
        recorded.push((
            label,
            score_clip_offline(&t.models, &clip, SkipPolicy::none(), false)?,
            clip.fps,
        ));
    }
    let crime_clips = recorded.iter().filter(|(l, _, _)| l.is_crime()).count();
    let frames: Vec<(f64, bool)> = recorded
        .iter()
        .flat_map(|(l, s, _)| {
            s.iter().map(move |f| {
                let p = f.fused.argmax();
                (
                    if p.is_crime() { f.fused.get(p) } else { 0.0 },
                    l.is_crime(),
                )
            })
        })
        .collect();
    let thresholds: Vec<f64> = (0..=20).map(|i| f64::from(i) * 0.05).collect();
    let pr = pr_points(&frames, &thresholds)?;
    let mut prev: Option<(usize, f64, usize, f64)> = None;
    let mut table = Vec::new();
    for (&th, p) in thresholds.iter().zip(&pr) {
        let (mut alerts, mut hit) = (0, 0);
        for (label, scores, fps) in &recorded {
            let mut d = DetectionState::new(3, 5000)?;
            let n = scores
                .iter()
                .filter(|s| {
                    d.detect(&s.fused, th, u64::from(timestamp_for(s.frame_index, *fps)))
                        .is_some()
                })
                .count();
            alerts += n;
            if label.is_crime() && n > 0 {
                hit += 1;
            }
        }
        let recall = hit as f64 / crime_clips as f64;
        if let Some((a, r, fa, fr)) = prev {
            ensure!(
                alerts <= a && recall <= r,
                "threshold {th:.2}: alerts {a}→{alerts}, recall {r:.3}→{recall:.3}"
            );
            ensure!(
                p.alerts <= fa && p.recall <= fr,
                "threshold {th:.2}: frame alerts or recall rose"
            );
        }
        prev = Some((alerts, recall, p.alerts, p.recall));
        if [0.0, 0.5, 0.95, 1.0].iter().any(|x| (x - th).abs() < 1e-9) {
            table.push(format!("{th:.2}: {alerts} alerts, recall {recall:.2}"));
        }
    }
    Ok(format!(
        "{} clips, 21 thresholds; {}",
        recorded.len(),
        table.join("; ")
    ))
}

// ---- privilege scan ----------------------------------------------------------------------

fn contains_key(v: &Value, key: &str) -> bool {
    match v {
        Value::Object(m) => m.contains_key(key) || m.values().any(|x| contains_key(x, key)),
        Value::Array(a) => a.iter().any(|x| contains_key(x, key)),
        _ => false,
    }
}

/// No civilian response may name a clip or carry a score vector.
fn leaks(body: &str, clip_refs: &[String]) -> Option<String> {
    let v: Value = serde_json::from_str(body).unwrap_or(Value::Null);
    for key in ["clip_ref", "scores", "spatial", "temporal", "fused"] {
        if contains_key(&v, key) || body.contains(&format!("\"{key}\"")) {
            return Some(format!("key {key}"));
        }
    }
    clip_refs
        .iter()
        .find(|r| body.contains(r.as_str()))
        .map(|r| format!("clip ref {r}"))
}

async fn sse_blocks(url: String, want: usize) -> Result<Vec<String>> {
    let mut resp = reqwest::Client::new().get(url).send().await?;
    ensure!(resp.status() == 200, "alerts returned {}", resp.status());
    let mut buf = String::new();
    while buf.matches("\n\n").count() < want {
        match tokio::time::timeout(Duration::from_secs(5), resp.chunk()).await {
            Ok(Ok(Some(c))) => buf.push_str(&String::from_utf8_lossy(&c)),
            _ => break,
        }
    }
    Ok(buf
        .split("\n\n")
        .filter(|b| !b.trim().is_empty())
        .map(str::to_string)
        .collect())
}

fn privilege_safety(rt: &tokio::runtime::Runtime, relay: &RelayHandle) -> Result<String> {
    let base = relay.url();
    rt.block_on(async {
        let c = reqwest::Client::new();
        let (_, all) = get_json(format!("{base}/v1/crimes"), CHIEF).await?;
        let rows = all.as_array().context("crime list")?.clone();
        ensure!(!rows.is_empty(), "nothing stored to scan");
        let refs: Vec<String> = rows.iter().filter_map(|r| r["clip_ref"].as_str().map(str::to_string)).collect();
        ensure!(!refs.is_empty(), "authority view has no clip_ref to hide");
        let b = c
            .post(format!("{base}/v1/broadcasts"))
            .bearer_auth(CHIEF)
            .json(&serde_json::json!({ "message": "avoid the square", "center": { "lat": 42.36, "lon": -71.06 }, "radius_m": 5000.0 }))
            .send()
            .await?;
        ensure!(b.status().is_success(), "broadcast returned {}", b.status());

        let mut bodies: Vec<(String, String)> = Vec::new();
        let mut fetch = |name: String, body: String| bodies.push((name, body));
        let id = rows[0]["event_id"].as_str().context("event id")?.to_string();
        for path in [
            "/v1/crimes".to_string(),
            "/v1/crimes?limit=1".into(),
            "/v1/crimes?label=shooting".into(),
            format!("/v1/crimes/{id}/clip"),
            "/v1/config/threshold".into(),
        ] {
            let r = c.get(format!("{base}{path}")).bearer_auth(CIVIL).send().await?;
            let status = r.status();
            fetch(format!("GET {path} ({status})"), r.text().await?);
        }
        for (path, body) in [
            ("/v1/events", serde_json::to_value(&rows[0])?),
            ("/v1/broadcasts", serde_json::json!({ "message": "x", "center": { "lat": 0, "lon": 0 }, "radius_m": 1 })),
            ("/v1/users", serde_json::json!({ "role": "civilian", "location": { "lat": 42.36, "lon": -71.06 } })),
        ] {
            let r = c.post(format!("{base}{path}")).bearer_auth(CIVIL).json(&body).send().await?;
            let status = r.status();
            fetch(format!("POST {path} ({status})"), r.text().await?);
        }
        let r = c
            .put(format!("{base}/v1/config/threshold"))
            .bearer_auth(CIVIL)
            .json(&serde_json::json!({ "value": 0.1 }))
            .send()
            .await?;
        let status = r.status();
        fetch(format!("PUT /v1/config/threshold ({status})"), r.text().await?);
        let blocks = sse_blocks(format!("{base}/v1/alerts?token={CIVIL}&last_event_id=0"), 2).await?;
        ensure!(!blocks.is_empty(), "civilian alert stream was empty");
        for (i, b) in blocks.iter().enumerate() {
            let data: String = b.lines().filter_map(|l| l.strip_prefix("data:")).map(str::trim).collect();
            fetch(format!("SSE #{i}"), data);
        }
        let n = bodies.len();
        for (name, body) in &bodies {
            if let Some(what) = leaks(body, &refs) {
                anyhow::bail!("{name} leaked {what}");
            }
        }
        Ok(format!("{n} civilian responses scanned (REST and SSE), no clip_ref or score vectors"))
    })
}

fn main() {
    let mut suite = Suite {
        failed: 0,
        total: 0,
    };
    println!("acceptance suite");
    suite.check("flow accuracy", flow_accuracy);
    suite.check("gradient correctness", gradient_correctness);
    suite.check("training mechanics", training_mechanics);
    suite.check("fusion property", fusion_property);
    suite.check("svm correctness", svm_correctness);
    suite.check("throughput", throughput);

    let rt = tokio::runtime::Runtime::new().expect("runtime");
    let root = tempfile::tempdir().expect("temp dir");
    println!("      training desk-scale models (seed 7, 24 clips per class)");
    let trained = match train_desk(root.path()) {
        Ok(t) => Some(t),
        Err(e) => {
            println!("      training failed: {e:#}");
            None
        }
    };
    let need = |t: &Option<Trained>| -> Result<()> {
        ensure!(t.is_some(), "no trained models");
        Ok(())
    };
    let clips = equivalence_clips().expect("clips");
    suite.check("streaming/batch equivalence", || {
        need(&trained)?;
        streaming_equivalence(&rt, trained.as_ref().unwrap(), &clips)
    });
    let relay = rt
        .block_on(start(relay_config(&root.path().join("relay")), None))
        .expect("relay");
    suite.check("end-to-end loopback", || {
        need(&trained)?;
        loopback(
            &rt,
            trained.as_ref().unwrap(),
            &relay,
            &root.path().join("queue"),
        )
    });
    suite.check("threshold monotonicity", || {
        need(&trained)?;
        threshold_monotonicity(trained.as_ref().unwrap(), &clips)
    });
    suite.check("privilege safety", || privilege_safety(&rt, &relay));
    relay.shutdown();
    println!(
        "{} of {} criteria passed",
        suite.total - suite.failed,
        suite.total
    );
    if suite.failed > 0 {
        std::process::exit(1);
    }
}
