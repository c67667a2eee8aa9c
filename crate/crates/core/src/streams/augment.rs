use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::videoio::Frame;

/// Per-channel normalisation used for RGB input unless overridden.
pub const SPATIAL_MEAN: [f64; 3] = [16.0, 16.0, 16.0];
pub const SPATIAL_STD: [f64; 3] = [16.0, 16.0, 16.0];

/// Random crop, scale/aspect jitter, resize and per-channel normalisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Crop side as a fraction of the frame side, drawn uniformly.
    pub crop_fraction: (f64, f64),
    pub output_width: usize,
    pub output_height: usize,
    pub mean: [f64; 3],
    pub std: [f64; 3],
    /// Multiplier on both crop sides.
    pub scale_jitter: (f64, f64),
    /// Width/height ratio multiplier.
    pub aspect_jitter: (f64, f64),
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            crop_fraction: (0.8, 1.0),
            output_width: 32,
            output_height: 32,
            mean: SPATIAL_MEAN,
            std: SPATIAL_STD,
            scale_jitter: (0.9, 1.1),
            aspect_jitter: (0.9, 1.1),
            seed: 0,
        }
    }
}

impl AugmentConfig {
    /// Default augmentation producing `width` x `height` inputs.
    pub fn for_input(width: usize, height: usize) -> Self {
        Self {
            output_width: width,
            output_height: height,
            ..Self::default()
        }
    }

    /// Resize and normalise only.
    pub fn identity(width: usize, height: usize) -> Self {
        Self {
            crop_fraction: (1.0, 1.0),
            output_width: width,
            output_height: height,
            scale_jitter: (1.0, 1.0),
            aspect_jitter: (1.0, 1.0),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.crop_fraction;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::invalid(format!(
                "crop fractions {:?} must satisfy 0 < lo <= hi <= 1",
                self.crop_fraction
            )));
        }
        for (name, (a, b)) in [("scale", self.scale_jitter), ("aspect", self.aspect_jitter)] {
            if !(a > 0.0 && a <= b) {
                return Err(Error::invalid(format!(
                    "{name} jitter range ({a}, {b}) is invalid"
                )));
            }
        }
        if self.std.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::invalid("normalisation std must be positive"));
        }
        if self.output_width == 0 || self.output_height == 0 {
            return Err(Error::invalid("output size must be positive"));
        }
        Ok(())
    }
}

fn draw<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

pub fn augment<R: Rng + ?Sized>(
    frame: &Frame,
    config: &AugmentConfig,
    rng: &mut R,
) -> Result<Tensor> {
    config.validate()?;
    let (fw, fh) = (frame.width as f64, frame.height as f64);
    let frac = draw(rng, config.crop_fraction);
    let scale = draw(rng, config.scale_jitter);
    let aspect = draw(rng, config.aspect_jitter).sqrt();
    let cw = (fw * frac * scale * aspect).min(fw);
    let ch = (fh * frac * scale / aspect).min(fh);
    if cw < 2.0 || ch < 2.0 {
        return Err(Error::invalid(format!(
            "crop of {cw:.1}x{ch:.1} px from {fw}x{fh} is degenerate"
        )));
    }
    let x0 = draw(rng, (0.0, fw - cw));
    let y0 = draw(rng, (0.0, fh - ch));
    Ok(crop_resize(frame, (x0, y0, cw, ch), config))
}

/// Deterministic test-time transform: a centred crop at the mean training
/// crop fraction, resized and normalised as in training.
pub fn eval_transform(frame: &Frame, config: &AugmentConfig) -> Result<Tensor> {
    config.validate()?;
    let frac = (config.crop_fraction.0 + config.crop_fraction.1) / 2.0;
    let (fw, fh) = (frame.width as f64, frame.height as f64);
    let (cw, ch) = (fw * frac, fh * frac);
    if cw < 2.0 || ch < 2.0 {
        return Err(Error::invalid(format!(
            "crop of {cw:.1}x{ch:.1} px from {fw}x{fh} is degenerate"
        )));
    }
    Ok(crop_resize(
        frame,
        ((fw - cw) / 2.0, (fh - ch) / 2.0, cw, ch),
        config,
    ))
}

fn crop_resize(
    frame: &Frame,
    (x0, y0, cw, ch): (f64, f64, f64, f64),
    config: &AugmentConfig,
) -> Tensor {
    let (ow, oh) = (config.output_width, config.output_height);
    let mut t = Tensor::zeros(3, oh, ow);
    let sx = cw / ow as f64;
    let sy = ch / oh as f64;
    let xmax = (frame.width - 1) as f64;
    let ymax = (frame.height - 1) as f64;
    for oy in 0..oh {
        let y = (y0 + (oy as f64 + 0.5) * sy - 0.5).clamp(0.0, ymax);
        let yi = y.floor() as usize;
        let fy = y - yi as f64;
        let yj = (yi + 1).min(frame.height - 1);
        for ox in 0..ow {
            let x = (x0 + (ox as f64 + 0.5) * sx - 0.5).clamp(0.0, xmax);
            let xi = x.floor() as usize;
            let fx = x - xi as f64;
            let xj = (xi + 1).min(frame.width - 1);
            let (a, b, c, d) = (
                frame.pixel(xi, yi),
                frame.pixel(xj, yi),
                frame.pixel(xi, yj),
                frame.pixel(xj, yj),
            );
            for k in 0..3 {
                let v = (a[k] as f64 * (1.0 - fx) + b[k] as f64 * fx) * (1.0 - fy)
                    + (c[k] as f64 * (1.0 - fx) + d[k] as f64 * fx) * fy;
                t.data[(k * oh + oy) * ow + ox] = (v - config.mean[k]) / config.std[k];
            }
        }
    }
    t
}
