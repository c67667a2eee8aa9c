//! Duality-based TV-L1 optical flow.
//!
//! Coarse-to-fine over a Gaussian pyramid. At each level the second image is
//! warped towards the first several times; around every warp the linearised
//! data term and the total-variation term are decoupled through an auxiliary
//! field and solved by alternating a pointwise thresholding step with
//! Chambolle's dual projection. A 3x3 median filter runs after each warp.

use serde::{Deserialize, Serialize};

use super::plane::Plane;
use super::FlowField;
use crate::error::{Error, Result};
use crate::videoio::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tvl1Params {
    pub lambda: f32,
    pub theta: f32,
    pub tau: f32,
    pub warps: usize,
    pub iters: usize,
    pub pyramid_scale: f32,
    /// Pyramid depth; `None` picks `floor(log2(min_dim / 16))`, at least 1.
    pub levels: Option<usize>,
}

impl Default for Tvl1Params {
    fn default() -> Self {
        Self {
            lambda: 0.15,
            theta: 0.3,
            tau: 0.25,
            warps: 5,
            iters: 30,
            pyramid_scale: 0.5,
            levels: None,
        }
    }
}

impl Tvl1Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 0.25) {
            return Err(Error::invalid(format!(
                "tau {} must lie in (0, 0.25]",
                self.tau
            )));
        }
        if !(self.pyramid_scale > 0.0 && self.pyramid_scale < 1.0) {
            return Err(Error::invalid(format!(
                "pyramid_scale {} must lie in (0, 1)",
                self.pyramid_scale
            )));
        }
        if !(self.lambda > 0.0 && self.theta > 0.0) {
            return Err(Error::invalid("lambda and theta must be positive"));
        }
        if self.warps == 0 || self.iters == 0 || self.levels == Some(0) {
            return Err(Error::invalid("warps, iters and levels must be at least 1"));
        }
        Ok(())
    }

    pub fn levels_for(&self, width: usize, height: usize) -> usize {
        self.levels.unwrap_or_else(|| {
            let m = width.min(height) as f64 / 16.0;
            if m < 2.0 {
                1
            } else {
                m.log2().floor() as usize
            }
        })
    }
}

/// Per-warp objective values at the finest level, for diagnostics.
#[derive(Debug, Clone, Default)]
pub struct Tvl1Report {
    pub levels: usize,
    pub finest_energies: Vec<f64>,
}

/// Flow from `prev` to `next`: `prev(x) ≈ next(x + flow(x))`.
pub fn tvl1_flow(prev: &Frame, next: &Frame, params: &Tvl1Params) -> Result<FlowField> {
    tvl1_flow_detailed(prev, next, params).map(|(f, _)| f)
}

pub fn tvl1_flow_detailed(
    prev: &Frame,
    next: &Frame,
    params: &Tvl1Params,
) -> Result<(FlowField, Tvl1Report)> {
    if prev.width != next.width || prev.height != next.height {
        return Err(Error::dim(format!(
            "frames are {}x{} and {}x{}",
            prev.width, prev.height, next.width, next.height
        )));
    }
    solve(
        prev.width,
        prev.height,
        &prev.luma(),
        &next.luma(),
        params,
        true,
    )
}

/// Same as [`tvl1_flow`] on pre-computed `[0, 1]` luminance planes.
pub fn tvl1_flow_luma(
    width: usize,
    height: usize,
    prev: &[f32],
    next: &[f32],
    params: &Tvl1Params,
) -> Result<FlowField> {
    solve(width, height, prev, next, params, false).map(|(f, _)| f)
}

fn solve(
    width: usize,
    height: usize,
    prev: &[f32],
    next: &[f32],
    params: &Tvl1Params,
    track: bool,
) -> Result<(FlowField, Tvl1Report)> {
    params.validate()?;
    if prev.len() != width * height || next.len() != width * height {
        return Err(Error::dim("luminance planes do not match the stated size"));
    }
    let levels = params.levels_for(width, height);
    if width.min(height) < (1usize << levels) {
        return Err(Error::invalid(format!(
            "{width}x{height} is too small for a {levels}-level pyramid"
        )));
    }

    let (i0, i1) = match normalize_pair(prev, next) {
        Some(pair) => pair,
        None => {
            return Ok((
                FlowField::zeros(width, height),
                Tvl1Report {
                    levels,
                    finest_energies: vec![0.0; params.warps],
                },
            ))
        }
    };
    let p0 = pyramid(
        Plane::from_vec(width, height, i0),
        levels,
        params.pyramid_scale,
    );
    let p1 = pyramid(
        Plane::from_vec(width, height, i1),
        levels,
        params.pyramid_scale,
    );

    let coarsest = &p0[levels - 1];
    let mut u = Plane::zeros(coarsest.w, coarsest.h);
    let mut v = Plane::zeros(coarsest.w, coarsest.h);
    let mut report = Tvl1Report {
        levels,
        finest_energies: Vec::new(),
    };
    for level in (0..levels).rev() {
        let (a, b) = (&p0[level], &p1[level]);
        if u.w != a.w || u.h != a.h {
            let sx = a.w as f32 / u.w as f32;
            let sy = a.h as f32 / u.h as f32;
            u = u.resize(a.w, a.h).scaled(sx);
            v = v.resize(a.w, a.h).scaled(sy);
        }
        let energies = solve_level(a, b, &mut u, &mut v, params, track && level == 0);
        if level == 0 {
            report.finest_energies = energies;
        }
    }
    Ok((
        FlowField {
            width,
            height,
            u: u.data,
            v: v.data,
        },
        report,
    ))
}

/// Rescales both images jointly onto `[0, 255]`. `None` when both are flat.
fn normalize_pair(a: &[f32], b: &[f32]) -> Option<(Vec<f32>, Vec<f32>)> {
    let (lo, hi) = a
        .iter()
        .chain(b)
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    if !(hi - lo > 1e-6) {
        return None;
    }
    let k = 255.0 / (hi - lo);
    Some((
        a.iter().map(|&x| (x - lo) * k).collect(),
        b.iter().map(|&x| (x - lo) * k).collect(),
    ))
}

fn pyramid(base: Plane, levels: usize, scale: f32) -> Vec<Plane> {
    let sigma = 0.6 * (1.0 / (scale * scale) - 1.0).sqrt();
    let mut out = vec![base];
    for _ in 1..levels {
        let prev = out.last().expect("non-empty");
        let w = ((prev.w as f32 * scale).ceil() as usize).max(1);
        let h = ((prev.h as f32 * scale).ceil() as usize).max(1);
        out.push(prev.gaussian_blur(sigma).resize(w, h));
    }
    out
}

fn solve_level(
    i0: &Plane,
    i1: &Plane,
    u: &mut Plane,
    v: &mut Plane,
    params: &Tvl1Params,
    track: bool,
) -> Vec<f64> {
    let (w, h) = (i0.w, i0.h);
    let n = w * h;
    let lt = params.lambda * params.theta;
    let taut = params.tau / params.theta;
    let (i1x, i1y) = i1.gradient();

    // dual variables for the two flow components
    let mut p = [vec![0f32; n], vec![0f32; n], vec![0f32; n], vec![0f32; n]];
    let mut energies = Vec::new();

    for _ in 0..params.warps {
        let i1w = i1.warp(u, v);
        let mut gx = i1x.warp(u, v);
        let mut gy = i1y.warp(u, v);
        let inside = inside_mask(w, h, u, v);
        // pixels warped off the image carry no data term; only TV acts there
        for i in 0..n {
            if !inside[i] {
                gx.data[i] = 0.0;
                gy.data[i] = 0.0;
            }
        }
        let grad: Vec<f32> = gx
            .data
            .iter()
            .zip(&gy.data)
            .map(|(a, b)| a * a + b * b)
            .collect();
        let rho_c: Vec<f32> = (0..n)
            .map(|i| {
                if inside[i] {
                    i1w.data[i] - gx.data[i] * u.data[i] - gy.data[i] * v.data[i] - i0.data[i]
                } else {
                    0.0
                }
            })
            .collect();

        let mut vx = vec![0f32; n];
        let mut vy = vec![0f32; n];
        for _ in 0..params.iters {
            let (gxd, gyd) = (&gx.data[..n], &gy.data[..n]);
            let (ud, vd) = (&u.data[..n], &v.data[..n]);
            for i in 0..n {
                let (a, b, g) = (gxd[i], gyd[i], grad[i]);
                let rho = rho_c[i] + a * ud[i] + b * vd[i];
                let k = if rho < -lt * g {
                    lt
                } else if rho > lt * g {
                    -lt
                } else if g > 1e-10 {
                    -rho / g
                } else {
                    0.0
                };
                vx[i] = ud[i] + k * a;
                vy[i] = vd[i] + k * b;
            }
            let (p0, rest) = p.split_at_mut(1);
            let (p1, rest) = rest.split_at_mut(1);
            let (p2, p3) = rest.split_at_mut(1);
            tv_step(
                w,
                h,
                &vx,
                &mut u.data,
                &mut p0[0],
                &mut p1[0],
                params.theta,
                taut,
            );
            tv_step(
                w,
                h,
                &vy,
                &mut v.data,
                &mut p2[0],
                &mut p3[0],
                params.theta,
                taut,
            );
        }
        *u = u.median3();
        *v = v.median3();
        if track {
            energies.push(energy(i0, i1, u, v, params.lambda));
        }
    }
    energies
}

fn inside_mask(w: usize, h: usize, u: &Plane, v: &Plane) -> Vec<bool> {
    let (xmax, ymax) = ((w - 1) as f32, (h - 1) as f32);
    (0..w * h)
        .map(|i| {
            let x = (i % w) as f32 + u.data[i];
            let y = (i / w) as f32 + v.data[i];
            (0.0..=xmax).contains(&x) && (0.0..=ymax).contains(&y)
        })
        .collect()
}

/// `u = v + theta * div(p)` followed by one projected dual ascent step on `p`.
#[allow(clippy::too_many_arguments)]
fn tv_step(
    w: usize,
    h: usize,
    v: &[f32],
    u: &mut [f32],
    px: &mut [f32],
    py: &mut [f32],
    theta: f32,
    taut: f32,
) {
    for y in 0..h {
        let row = y * w;
        let pxr = &px[row..row + w];
        for x in 0..w {
            let dx = match x {
                0 => pxr[0],
                _ if x == w - 1 => -pxr[x - 1],
                _ => pxr[x] - pxr[x - 1],
            };
            let i = row + x;
            let dy = if y == 0 {
                py[i]
            } else if y == h - 1 {
                -py[i - w]
            } else {
                py[i] - py[i - w]
            };
            u[i] = v[i] + theta * (dx + dy);
        }
    }
    for y in 0..h {
        let row = y * w;
        let has_below = y + 1 < h;
        for x in 0..w {
            let i = row + x;
            let ui = u[i];
            let gx = if x + 1 < w { u[i + 1] - ui } else { 0.0 };
            let gy = if has_below { u[i + w] - ui } else { 0.0 };
            let norm = 1.0 + taut * (gx * gx + gy * gy).sqrt();
            px[i] = (px[i] + taut * gx) / norm;
            py[i] = (py[i] + taut * gy) / norm;
        }
    }
}

/// TV-L1 objective with the exact (non-linearised) warped residual.
fn energy(i0: &Plane, i1: &Plane, u: &Plane, v: &Plane, lambda: f32) -> f64 {
    let (w, h) = (i0.w, i0.h);
    let warped = i1.warp(u, v);
    let inside = inside_mask(w, h, u, v);
    let mut tv = 0f64;
    let mut data = 0f64;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            for f in [u, v] {
                let gx = if x + 1 < w {
                    f.data[i + 1] - f.data[i]
                } else {
                    0.0
                };
                let gy = if y + 1 < h {
                    f.data[i + w] - f.data[i]
                } else {
                    0.0
                };
                tv += gx.hypot(gy) as f64;
            }
            if inside[i] {
                data += (warped.data[i] - i0.data[i]).abs() as f64;
            }
        }
    }
    tv + lambda as f64 * data
}
