//! Synthetic low-light action clips.
//!
//! Every clip is a dark, textured, noisy scene with two actors rendered as
//! additive light blobs. Each action has its own motion program and its own
//! appearance cue:
//!
//! | action    | motion                                   | appearance            |
//! |-----------|------------------------------------------|-----------------------|
//! | theft     | converge, then one actor leaves fast     | bright carried object |
//! | assault   | sustained oscillating contact            | overlapping actors    |
//! | shooting  | shooter static, victim drops             | gun glint, 2-frame flash |
//! | no action | independent slow random walks            | none                  |

use std::f32::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{DatasetEntry, DatasetManifest};
use super::{lclip, ActionLabel, Clip, Frame, DATASET_FPS};
use crate::error::{Error, Result};

/// Standard deviation of the per-pixel sensor noise, in 8-bit levels.
pub const NOISE_SIGMA: f32 = 8.0;
const MIN_FRAMES: usize = 3 * DATASET_FPS as usize;
const MAX_FRAMES: usize = 4 * DATASET_FPS as usize;

const ACTOR_A: [f32; 3] = [72.0, 46.0, 40.0];
const ACTOR_B: [f32; 3] = [40.0, 46.0, 74.0];
const OBJECT: [f32; 3] = [190.0, 160.0, 50.0];
const GLINT: [f32; 3] = [170.0, 170.0, 170.0];
const FLASH: [f32; 3] = [255.0, 235.0, 170.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthParams {
    pub seed: u64,
    pub groups_per_action: u32,
    pub clips_per_group: u32,
    pub width: usize,
    pub height: usize,
}

impl SynthParams {
    pub fn new(seed: u64, groups_per_action: u32, clips_per_group: u32) -> Self {
        Self {
            seed,
            groups_per_action,
            clips_per_group,
            width: 64,
            height: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 32 || self.height < 32 {
            return Err(Error::invalid(format!(
                "generated clips must be at least 32x32, got {}x{}",
                self.width, self.height
            )));
        }
        if self.width > u16::MAX as usize || self.height > u16::MAX as usize {
            return Err(Error::invalid(
                "dimensions exceed the clip container limits",
            ));
        }
        if self.groups_per_action == 0 || self.clips_per_group == 0 {
            return Err(Error::invalid(
                "groups and clips per group must be positive",
            ));
        }
        if self.groups_per_action > 256 || self.clips_per_group > u16::MAX as u32 {
            return Err(Error::invalid(
                "group or clip ids exceed their on-disk width",
            ));
        }
        Ok(())
    }

    pub fn clip_count(&self) -> usize {
        ActionLabel::COUNT * self.groups_per_action as usize * self.clips_per_group as usize
    }
}

fn mix(mut z: u64) -> u64 {
    // splitmix64 finaliser
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn rng_for(parts: &[u64]) -> ChaCha8Rng {
    let seed = parts
        .iter()
        .fold(0x4C45_4E53u64, |acc, &p| mix(acc ^ mix(p)));
    ChaCha8Rng::seed_from_u64(seed)
}

/// Static background shared by all clips of a group.
struct Scene {
    width: usize,
    height: usize,
    base: Vec<[f32; 3]>,
}

impl Scene {
    fn new(seed: u64, group: u32, width: usize, height: usize) -> Self {
        let mut rng = rng_for(&[seed, 0x5CE7E, group as u64]);
        let waves: Vec<(f32, f32, f32, f32)> = (0..6)
            .map(|_| {
                let fx = rng.random_range(0.5f32..4.0) * 2.0 * PI / width as f32;
                let fy = rng.random_range(0.5f32..4.0) * 2.0 * PI / height as f32;
                let phase = rng.random_range(0.0f32..2.0 * PI);
                let amp = rng.random_range(1.5f32..3.0);
                (fx, fy, phase, amp)
            })
            .collect();
        let tint = [
            rng.random_range(0.85f32..1.15),
            rng.random_range(0.85f32..1.15),
            rng.random_range(0.85f32..1.15),
        ];
        let level = rng.random_range(11.0f32..15.0);
        let mut base = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let t: f32 = waves
                    .iter()
                    .map(|&(fx, fy, ph, a)| a * (fx * x as f32 + fy * y as f32 + ph).sin())
                    .sum();
                let v = (level + t).max(0.0);
                base.push([v * tint[0], v * tint[1], v * tint[2]]);
            }
        }
        Self {
            width,
            height,
            base,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Blob {
    cx: f32,
    cy: f32,
    rx: f32,
    ry: f32,
    color: [f32; 3],
}

struct Canvas {
    width: usize,
    height: usize,
    acc: Vec<[f32; 3]>,
}

impl Canvas {
    fn from_scene(scene: &Scene) -> Self {
        Self {
            width: scene.width,
            height: scene.height,
            acc: scene.base.clone(),
        }
    }

    /// Adds light in a filled ellipse.
    fn add(&mut self, b: Blob) {
        let x0 = (b.cx - b.rx).floor().max(0.0) as usize;
        let x1 = ((b.cx + b.rx).ceil() as isize).clamp(0, self.width as isize - 1) as usize;
        let y0 = (b.cy - b.ry).floor().max(0.0) as usize;
        let y1 = ((b.cy + b.ry).ceil() as isize).clamp(0, self.height as isize - 1) as usize;
        if b.cx + b.rx < 0.0 || b.cy + b.ry < 0.0 {
            return;
        }
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dx = (x as f32 + 0.5 - b.cx) / b.rx;
                let dy = (y as f32 + 0.5 - b.cy) / b.ry;
                if dx * dx + dy * dy <= 1.0 {
                    let p = &mut self.acc[y * self.width + x];
                    for c in 0..3 {
                        p[c] += b.color[c];
                    }
                }
            }
        }
    }

    fn finish(self, rng: &mut ChaCha8Rng, index: u32) -> Frame {
        let noise = Normal::new(0.0f32, NOISE_SIGMA).expect("valid sigma");
        let mut pixels = Vec::with_capacity(self.width * self.height * 3);
        for p in &self.acc {
            for &v in p {
                let n = noise.sample(rng);
                pixels.push((v + n).round().clamp(0.0, 255.0) as u8);
            }
        }
        Frame {
            width: self.width,
            height: self.height,
            pixels,
            index,
            timestamp_ms: super::timestamp_for(index, DATASET_FPS),
        }
    }
}

/// Per-frame actor layout produced by a motion program.
struct Layout {
    blobs: Vec<Blob>,
}

fn upright(cx: f32, cy: f32, s: f32, color: [f32; 3]) -> Blob {
    Blob {
        cx,
        cy,
        rx: 3.5 * s,
        ry: 6.0 * s,
        color,
    }
}

struct Program {
    layouts: Vec<Layout>,
}

fn clampf(v: f32, lo: f32, hi: f32) -> f32 {
    v.max(lo).min(hi)
}

fn theft(rng: &mut ChaCha8Rng, w: f32, h: f32, s: f32, n: usize) -> Program {
    let margin = 8.0 * s;
    let meet = (
        rng.random_range(0.35 * w..0.65 * w),
        rng.random_range(0.4 * h..0.6 * h),
    );
    let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let a_start = (
        meet.0 - side * rng.random_range(10.0..16.0) * s,
        meet.1 + rng.random_range(-4.0..4.0) * s,
    );
    let b_start = (
        meet.0 + side * rng.random_range(12.0..20.0) * s,
        meet.1 + rng.random_range(-4.0..4.0) * s,
    );
    let t_meet = (n as f32 * rng.random_range(0.3..0.4)) as usize;
    let t_grab = t_meet + rng.random_range(8..14);
    let flee_dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let flee_speed = rng.random_range(2.2..3.2) * s;
    let flee_vy = rng.random_range(-0.5..0.5) * s;

    let a_meet = (meet.0 - side * 3.0 * s, meet.1);
    let b_meet = (meet.0 + side * 3.0 * s, meet.1);
    let mut layouts = Vec::with_capacity(n);
    let mut b_flee = b_meet;
    for t in 0..n {
        let (a, b, obj_on_b);
        if t < t_meet {
            let k = t as f32 / t_meet as f32;
            a = (
                a_start.0 + (a_meet.0 - a_start.0) * k,
                a_start.1 + (a_meet.1 - a_start.1) * k,
            );
            b = (
                b_start.0 + (b_meet.0 - b_start.0) * k,
                b_start.1 + (b_meet.1 - b_start.1) * k,
            );
            obj_on_b = false;
        } else if t < t_grab {
            a = a_meet;
            b = b_meet;
            obj_on_b = false;
        } else {
            b_flee.0 = clampf(b_flee.0 + flee_dir * flee_speed, -margin, w + margin);
            b_flee.1 = clampf(b_flee.1 + flee_vy, margin, h - margin);
            a = a_meet;
            b = b_flee;
            obj_on_b = true;
        }
        let carrier = if obj_on_b { b } else { a };
        let obj = Blob {
            cx: carrier.0 + 4.0 * s,
            cy: carrier.1 + 1.0 * s,
            rx: 2.5 * s,
            ry: 2.5 * s,
            color: OBJECT,
        };
        layouts.push(Layout {
            blobs: vec![
                upright(a.0, a.1, s, ACTOR_A),
                upright(b.0, b.1, s, ACTOR_B),
                obj,
            ],
        });
    }
    Program { layouts }
}

fn assault(rng: &mut ChaCha8Rng, w: f32, h: f32, s: f32, n: usize) -> Program {
    let c = (
        rng.random_range(0.35 * w..0.65 * w),
        rng.random_range(0.4 * h..0.6 * h),
    );
    let period = rng.random_range(8.0..14.0);
    let amp = rng.random_range(2.0..3.0) * s;
    let phase = rng.random_range(0.0..2.0 * PI);
    let drift = (
        rng.random_range(-0.15..0.15) * s,
        rng.random_range(-0.1..0.1) * s,
    );
    let mut layouts = Vec::with_capacity(n);
    for t in 0..n {
        let tf = t as f32;
        let osc = (2.0 * PI * tf / period + phase).sin();
        let cx = c.0 + drift.0 * tf;
        let cy = c.1 + drift.1 * tf;
        // separation stays below the sum of radii so the actors always overlap
        let gap = 4.0 * s + amp * osc;
        let bob = 1.5 * s * (2.0 * PI * tf / period + phase + 1.0).cos();
        layouts.push(Layout {
            blobs: vec![
                upright(cx - gap / 2.0, cy - bob / 2.0, s, ACTOR_A),
                upright(cx + gap / 2.0, cy + bob / 2.0, s, ACTOR_B),
            ],
        });
    }
    Program { layouts }
}

fn shooting(rng: &mut ChaCha8Rng, w: f32, h: f32, s: f32, n: usize) -> Program {
    let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let shooter = (
        w / 2.0 - side * rng.random_range(0.2 * w..0.3 * w),
        rng.random_range(0.35 * h..0.65 * h),
    );
    let mut victim = (
        w / 2.0 + side * rng.random_range(0.15 * w..0.3 * w),
        rng.random_range(0.35 * h..0.6 * h),
    );
    let walk = (
        rng.random_range(-0.2..0.2) * s,
        rng.random_range(-0.2..0.2) * s,
    );
    let t_shot = (n as f32 * rng.random_range(0.3..0.5)) as usize;
    let fall = 6usize;
    let mut layouts = Vec::with_capacity(n);
    for t in 0..n {
        let gun = Blob {
            cx: shooter.0 + side * 5.0 * s,
            cy: shooter.1 - 1.0 * s,
            rx: 2.0 * s,
            ry: 1.5 * s,
            color: GLINT,
        };
        let mut blobs = vec![upright(shooter.0, shooter.1, s, ACTOR_A), gun];
        if t < t_shot {
            victim.0 += walk.0;
            victim.1 += walk.1;
            blobs.push(upright(victim.0, victim.1, s, ACTOR_B));
        } else {
            let k = ((t - t_shot) as f32 / fall as f32).min(1.0);
            blobs.push(Blob {
                cx: victim.0,
                cy: victim.1 + 3.0 * s * k,
                rx: (3.5 + 2.5 * k) * s,
                ry: (6.0 - 3.0 * k) * s,
                color: ACTOR_B,
            });
        }
        if t == t_shot || t == t_shot + 1 {
            blobs.push(Blob {
                cx: shooter.0 + side * 8.0 * s,
                cy: shooter.1 - 1.0 * s,
                rx: 4.0 * s,
                ry: 3.0 * s,
                color: FLASH,
            });
        }
        layouts.push(Layout { blobs });
    }
    Program { layouts }
}

fn no_action(rng: &mut ChaCha8Rng, w: f32, h: f32, s: f32, n: usize) -> Program {
    let margin = 7.0 * s;
    // each actor walks in its own half so the two never touch
    let halves = [(margin, w / 2.0 - 4.0 * s), (w / 2.0 + 4.0 * s, w - margin)];
    let mut pos: Vec<(f32, f32)> = halves
        .iter()
        .map(|&(lo, hi)| {
            (
                rng.random_range(lo..hi),
                rng.random_range(margin..h - margin),
            )
        })
        .collect();
    let mut vel: Vec<(f32, f32)> = (0..2)
        .map(|_| {
            (
                rng.random_range(-0.5..0.5) * s,
                rng.random_range(-0.5..0.5) * s,
            )
        })
        .collect();
    let mut layouts = Vec::with_capacity(n);
    for _ in 0..n {
        for i in 0..2 {
            vel[i].0 = clampf(
                vel[i].0 + rng.random_range(-0.1..0.1) * s,
                -0.6 * s,
                0.6 * s,
            );
            vel[i].1 = clampf(
                vel[i].1 + rng.random_range(-0.1..0.1) * s,
                -0.6 * s,
                0.6 * s,
            );
            let (lo, hi) = halves[i];
            pos[i].0 += vel[i].0;
            pos[i].1 += vel[i].1;
            if pos[i].0 < lo || pos[i].0 > hi {
                vel[i].0 = -vel[i].0;
                pos[i].0 = clampf(pos[i].0, lo, hi);
            }
            if pos[i].1 < margin || pos[i].1 > h - margin {
                vel[i].1 = -vel[i].1;
                pos[i].1 = clampf(pos[i].1, margin, h - margin);
            }
        }
        layouts.push(Layout {
            blobs: vec![
                upright(pos[0].0, pos[0].1, s, ACTOR_A),
                upright(pos[1].0, pos[1].1, s, ACTOR_B),
            ],
        });
    }
    Program { layouts }
}

/// Generates one clip. The output is a pure function of its arguments.
pub fn generate_clip(
    params: &SynthParams,
    action: ActionLabel,
    group: u32,
    clip: u32,
) -> Result<Clip> {
    params.validate()?;
    let scene = Scene::new(params.seed, group, params.width, params.height);
    Ok(render(params, &scene, action, group, clip))
}

fn render(params: &SynthParams, scene: &Scene, action: ActionLabel, group: u32, clip: u32) -> Clip {
    let mut rng = rng_for(&[
        params.seed,
        action.index() as u64,
        group as u64,
        clip as u64,
    ]);
    let n = rng.random_range(MIN_FRAMES..=MAX_FRAMES);
    let (w, h) = (params.width as f32, params.height as f32);
    let s = params.width.min(params.height) as f32 / 64.0;
    let program = match action {
        ActionLabel::Theft => theft(&mut rng, w, h, s, n),
        ActionLabel::Assault => assault(&mut rng, w, h, s, n),
        ActionLabel::Shooting => shooting(&mut rng, w, h, s, n),
        ActionLabel::NoAction => no_action(&mut rng, w, h, s, n),
    };
    let frames = program
        .layouts
        .into_iter()
        .enumerate()
        .map(|(i, layout)| {
            let mut canvas = Canvas::from_scene(scene);
            for b in layout.blobs {
                canvas.add(b);
            }
            canvas.finish(&mut rng, i as u32)
        })
        .collect();
    Clip {
        frames,
        fps: DATASET_FPS,
        label: Some(action),
        group_id: group as u8,
        clip_id: clip as u16,
    }
}

pub(super) fn clip_relpath(action: ActionLabel, group: u32, clip: u32) -> String {
    format!("{}/g{group:02}_c{clip:02}.lclip", action.name())
}

/// Writes `<action>/g<group>_c<clip>.lclip` for every clip plus a
/// `dataset.json` manifest at the root.
pub fn generate_synthetic_dataset(
    root: impl AsRef<Path>,
    params: &SynthParams,
) -> Result<DatasetManifest> {
    params.validate()?;
    let root = root.as_ref();
    for action in ActionLabel::ALL {
        let dir = root.join(action.name());
        fs::create_dir_all(&dir).map_err(|e| Error::at_path(&dir, e))?;
    }
    let scenes: Vec<Scene> = (0..params.groups_per_action)
        .map(|g| Scene::new(params.seed, g, params.width, params.height))
        .collect();
    let jobs: Vec<(ActionLabel, u32, u32)> = ActionLabel::ALL
        .into_iter()
        .flat_map(|a| {
            (0..params.groups_per_action)
                .flat_map(move |g| (0..params.clips_per_group).map(move |c| (a, g, c)))
        })
        .collect();
    let entries = jobs
        .par_iter()
        .map(|&(action, group, clip)| {
            let c = render(params, &scenes[group as usize], action, group, clip);
            let rel = clip_relpath(action, group, clip);
            lclip::save_clip(&c, root.join(&rel))?;
            Ok(DatasetEntry {
                path: rel,
                label: action,
                group,
                clip,
                frames: c.frames.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        seed: params.seed,
        groups_per_action: params.groups_per_action,
        clips_per_group: params.clips_per_group,
        width: params.width,
        height: params.height,
        fps: DATASET_FPS,
        clip_count: entries.len(),
        clips: entries,
    };
    manifest.write(root)?;
    Ok(manifest)
}
