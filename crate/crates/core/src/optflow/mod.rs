//! Dense optical flow for the temporal stream.

mod colorize;
mod lflo;
mod plane;
mod tvl1;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use colorize::{flow_colorize, flow_colorize_with_scale, hue_degrees, normalization_magnitude};
pub use lflo::{decode_lflo, encode_lflo, load_lflo, save_lflo};
pub use tvl1::{tvl1_flow, tvl1_flow_detailed, tvl1_flow_luma, Tvl1Params, Tvl1Report};

/// Default number of flow fields in a temporal-stream stack.
pub const DEFAULT_STACK_LEN: usize = 10;
/// Flow components are clamped to this many pixels before discretisation.
pub const FLOW_CLAMP: f32 = 20.0;

/// Per-pixel displacement from one frame to the next, in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
        }
    }

    pub fn uniform(width: usize, height: usize, u: f32, v: f32) -> Self {
        Self {
            width,
            height,
            u: vec![u; width * height],
            v: vec![v; width * height],
        }
    }

    pub fn new(width: usize, height: usize, u: Vec<f32>, v: Vec<f32>) -> Result<Self> {
        if u.len() != width * height || v.len() != width * height {
            return Err(Error::dim(format!(
                "flow planes must hold {} values, got {} and {}",
                width * height,
                u.len(),
                v.len()
            )));
        }
        Ok(Self {
            width,
            height,
            u,
            v,
        })
    }

    pub fn same_dims(&self, other: &FlowField) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn magnitude(&self, i: usize) -> f32 {
        self.u[i].hypot(self.v[i])
    }

    pub fn max_magnitude(&self) -> f32 {
        (0..self.u.len())
            .map(|i| self.magnitude(i))
            .fold(0.0, f32::max)
    }

    pub fn mean(&self) -> (f64, f64) {
        let n = self.u.len().max(1) as f64;
        (
            self.u.iter().map(|&x| x as f64).sum::<f64>() / n,
            self.v.iter().map(|&x| x as f64).sum::<f64>() / n,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }

    pub fn negated(&self) -> FlowField {
        FlowField {
            width: self.width,
            height: self.height,
            u: self.u.iter().map(|x| -x).collect(),
            v: self.v.iter().map(|x| -x).collect(),
        }
    }
}

/// `2L` planes interleaved as `u1, v1, u2, v2, ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedFlow {
    pub width: usize,
    pub height: usize,
    pub channels: Vec<Vec<f32>>,
}

impl StackedFlow {
    pub fn len(&self) -> usize {
        self.channels.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    /// Inverse of [`stack_flows`].
    pub fn split(&self) -> Vec<FlowField> {
        self.channels
            .chunks_exact(2)
            .map(|c| FlowField {
                width: self.width,
                height: self.height,
                u: c[0].clone(),
                v: c[1].clone(),
            })
            .collect()
    }

    /// Clamps to ±[`FLOW_CLAMP`] and maps onto `[0, 255]`, the quantised form
    /// the temporal stream is trained on.
    pub fn discretize(&self) -> Vec<Vec<u8>> {
        self.channels
            .iter()
            .map(|plane| plane.iter().map(|&x| discretize_component(x)).collect())
            .collect()
    }
}

pub fn discretize_component(x: f32) -> u8 {
    let c = x.clamp(-FLOW_CLAMP, FLOW_CLAMP);
    ((c + FLOW_CLAMP) * 255.0 / (2.0 * FLOW_CLAMP)).round() as u8
}

pub fn stack_flows<F: std::borrow::Borrow<FlowField>>(flows: &[F]) -> Result<StackedFlow> {
    let first = flows
        .first()
        .ok_or(Error::Empty("flow stack needs at least one field"))?
        .borrow();
    let mut channels = Vec::with_capacity(2 * flows.len());
    for f in flows {
        let f = f.borrow();
        if !f.same_dims(first) {
            return Err(Error::dim(format!(
                "flow {}x{} does not match stack {}x{}",
                f.width, f.height, first.width, first.height
            )));
        }
        channels.push(f.u.clone());
        channels.push(f.v.clone());
    }
    Ok(StackedFlow {
        width: first.width,
        height: first.height,
        channels,
    })
}

/// Mean end-point error between two flow fields, in pixels.
pub fn endpoint_error(estimate: &FlowField, truth: &FlowField) -> Result<f64> {
    if !estimate.same_dims(truth) {
        return Err(Error::dim(format!(
            "estimate is {}x{}, truth is {}x{}",
            estimate.width, estimate.height, truth.width, truth.height
        )));
    }
    let n = estimate.u.len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = (0..n)
        .map(|i| {
            let du = (estimate.u[i] - truth.u[i]) as f64;
            let dv = (estimate.v[i] - truth.v[i]) as f64;
            du.hypot(dv)
        })
        .sum();
    Ok(sum / n as f64)
}
