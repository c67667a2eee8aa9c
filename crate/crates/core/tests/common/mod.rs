//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use lens_core::videoio::Frame;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Periodic texture: a sum of sinusoids with integer cycle counts, so a
/// wrapped integer shift is an exact translation.
pub fn textured(width: usize, height: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(f32, f32, f32, f32)> = (0..12)
        .map(|_| {
            let kx = rng.random_range(1..6) as f32 * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let ky = rng.random_range(1..6) as f32 * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            (
                kx,
                ky,
                rng.random_range(0.0..std::f32::consts::TAU),
                rng.random_range(0.5..1.0),
            )
        })
        .collect();
    let norm: f32 = waves.iter().map(|w| w.3).sum();
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for &(kx, ky, ph, a) in &waves {
                let t = std::f32::consts::TAU
                    * (kx * x as f32 / width as f32 + ky * y as f32 / height as f32)
                    + ph;
                acc += a * t.sin();
            }
            out.push(0.5 + 0.5 * acc / norm);
        }
    }
    out
}

/// `out(x) = src(x - shift)` with wraparound, so the flow from `src` to `out`
/// is exactly `shift` everywhere.
pub fn shifted(src: &[f32], width: usize, height: usize, sx: i32, sy: i32) -> Vec<f32> {
    let mut out = vec![0.0; src.len()];
    for y in 0..height as i32 {
        for x in 0..width as i32 {
            let xs = (x - sx).rem_euclid(width as i32) as usize;
            let ys = (y - sy).rem_euclid(height as i32) as usize;
            out[y as usize * width + x as usize] = src[ys * width + xs];
        }
    }
    out
}

pub fn gray_frame(width: usize, height: usize, plane: &[f32], index: u32) -> Frame {
    let pixels = plane
        .iter()
        .flat_map(|&v| {
            let b = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            [b, b, b]
        })
        .collect();
    Frame::at(width, height, pixels, index, 30).unwrap()
}
