//! Middlebury colour-wheel rendering of flow fields.
//!
//! Direction picks a position on the 55-entry wheel (red at 0°, going through
//! yellow, green, cyan, blue and magenta), magnitude blends from white at
//! rest to the full wheel colour at the normalisation magnitude.

use std::f32::consts::PI;

use super::FlowField;
use crate::videoio::Frame;

const SEGMENTS: [(usize, [u8; 3], [u8; 3]); 6] = [
    (15, [255, 0, 0], [255, 255, 0]),
    (6, [255, 255, 0], [0, 255, 0]),
    (4, [0, 255, 0], [0, 255, 255]),
    (11, [0, 255, 255], [0, 0, 255]),
    (13, [0, 0, 255], [255, 0, 255]),
    (6, [255, 0, 255], [255, 0, 0]),
];

fn wheel() -> Vec<[f32; 3]> {
    let mut out = Vec::with_capacity(55);
    for (n, from, to) in SEGMENTS {
        for i in 0..n {
            let t = i as f32 / n as f32;
            out.push([0, 1, 2].map(|c| from[c] as f32 + (to[c] as f32 - from[c] as f32) * t));
        }
    }
    out
}

/// Flow direction in degrees, `atan2(v, u)` mapped onto `[0, 360)`.
pub fn hue_degrees(u: f32, v: f32) -> f32 {
    let d = v.atan2(u).to_degrees();
    if d < 0.0 {
        d + 360.0
    } else {
        d
    }
}

/// 99th percentile of the per-pixel magnitude.
pub fn normalization_magnitude(flow: &FlowField) -> f32 {
    let mut mags: Vec<f32> = (0..flow.u.len())
        .map(|i| flow.magnitude(i))
        .filter(|m| m.is_finite())
        .collect();
    if mags.is_empty() {
        return 0.0;
    }
    mags.sort_unstable_by(f32::total_cmp);
    let rank = ((mags.len() - 1) as f32 * 0.99).round() as usize;
    mags[rank]
}

pub fn flow_colorize(flow: &FlowField) -> Frame {
    flow_colorize_with_scale(flow, normalization_magnitude(flow))
}

pub fn flow_colorize_with_scale(flow: &FlowField, max_magnitude: f32) -> Frame {
    let wheel = wheel();
    let ncols = wheel.len() as f32;
    let mut pixels = Vec::with_capacity(flow.u.len() * 3);
    for i in 0..flow.u.len() {
        let (u, v) = (flow.u[i], flow.v[i]);
        let mag = flow.magnitude(i);
        if !(max_magnitude > 0.0) || !mag.is_finite() || mag == 0.0 {
            pixels.extend_from_slice(&[255, 255, 255]);
            continue;
        }
        let rad = (mag / max_magnitude).min(1.0);
        let pos = v.atan2(u).rem_euclid(2.0 * PI) / (2.0 * PI) * ncols;
        let k0 = (pos.floor() as usize) % wheel.len();
        let k1 = (k0 + 1) % wheel.len();
        let f = pos - pos.floor();
        for c in 0..3 {
            let col = ((1.0 - f) * wheel[k0][c] + f * wheel[k1][c]) / 255.0;
            let col = 1.0 - rad * (1.0 - col);
            pixels.push((col * 255.0).round() as u8);
        }
    }
    Frame {
        width: flow.width,
        height: flow.height,
        pixels,
        index: 0,
        timestamp_ms: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_flow_is_white() {
        let img = flow_colorize(&FlowField::zeros(6, 4));
        assert!(img.pixels.iter().all(|&p| p == 255));
    }

    #[test]
    fn uniform_rightward_flow_is_saturated_red() {
        let m = 3.5;
        let img = flow_colorize(&FlowField::uniform(5, 5, m, 0.0));
        assert!(img.pixels.chunks_exact(3).all(|p| p == [255, 0, 0]));
        assert_eq!(hue_degrees(m, 0.0), 0.0);
    }

    #[test]
    fn opposite_vertical_flows_are_half_a_wheel_apart() {
        let m = 2.0;
        let down = hue_degrees(0.0, m);
        let up = hue_degrees(0.0, -m);
        assert_eq!(down, 90.0);
        assert_eq!((up - down).abs(), 180.0);
        let a = flow_colorize(&FlowField::uniform(2, 2, 0.0, m));
        let b = flow_colorize(&FlowField::uniform(2, 2, 0.0, -m));
        assert_ne!(a.pixel(0, 0), b.pixel(0, 0));
    }

    #[test]
    fn scaling_the_field_does_not_change_the_image() {
        let mut f = FlowField::zeros(8, 8);
        for i in 0..64 {
            let t = i as f32 * 0.37;
            f.u[i] = t.cos() * (1.0 + (i % 5) as f32);
            f.v[i] = t.sin() * (1.0 + (i % 3) as f32);
        }
        let g = FlowField {
            u: f.u.iter().map(|x| x * 4.0).collect(),
            v: f.v.iter().map(|x| x * 4.0).collect(),
            ..f.clone()
        };
        let (a, b) = (flow_colorize(&f), flow_colorize(&g));
        let max_diff = a
            .pixels
            .iter()
            .zip(&b.pixels)
            .map(|(x, y)| x.abs_diff(*y))
            .max()
            .unwrap();
        assert!(max_diff <= 1);
    }

    #[test]
    fn wheel_has_55_entries() {
        assert_eq!(wheel().len(), 55);
    }
}
