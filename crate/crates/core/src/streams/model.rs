use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::sources::flow_tensor;
use super::tensor::Tensor;
use super::{eval_transform, AugmentConfig, ClassScores};
use crate::error::{Error, Result};
use crate::optflow::StackedFlow;
use crate::videoio::{ActionLabel, Frame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    Spatial,
    Temporal,
}

impl StreamKind {
    pub fn name(self) -> &'static str {
        match self {
            StreamKind::Spatial => "spatial",
            StreamKind::Temporal => "temporal",
        }
    }
}

/// Layer sizes. `input_channels` is 3 for the spatial stream and `2L` for a
/// temporal stream over `L` stacked flows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub input_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
    pub kernel: usize,
    pub filters: usize,
    pub hidden: usize,
}

impl ModelShape {
    pub fn spatial() -> Self {
        Self {
            input_channels: 3,
            input_height: 32,
            input_width: 32,
            kernel: 5,
            filters: 8,
            hidden: 16,
        }
    }

    pub fn temporal(stack_len: usize) -> Self {
        Self {
            input_channels: 2 * stack_len,
            ..Self::spatial()
        }
    }

    fn conv_out(&self) -> (usize, usize) {
        (
            self.input_height + 1 - self.kernel,
            self.input_width + 1 - self.kernel,
        )
    }

    fn validate(&self) -> Result<()> {
        if self.input_channels == 0 || self.kernel == 0 || self.filters == 0 || self.hidden == 0 {
            return Err(Error::invalid(format!("degenerate model shape {self:?}")));
        }
        if self.kernel > self.input_height || self.kernel > self.input_width {
            return Err(Error::invalid(format!(
                "kernel {} larger than the input",
                self.kernel
            )));
        }
        Ok(())
    }
}

/// The six parameter blocks, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    ConvWeight,
    ConvBias,
    Fc1Weight,
    Fc1Bias,
    Fc2Weight,
    Fc2Bias,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 6] = [
        ParamGroup::ConvWeight,
        ParamGroup::ConvBias,
        ParamGroup::Fc1Weight,
        ParamGroup::Fc1Bias,
        ParamGroup::Fc2Weight,
        ParamGroup::Fc2Bias,
    ];
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamModel {
    pub kind: StreamKind,
    pub shape: ModelShape,
    /// All parameters, laid out as the [`ParamGroup`] blocks in order.
    pub params: Vec<f64>,
}

pub(crate) struct ForwardCache {
    act: Vec<f64>,
    pooled: Vec<f64>,
    hidden: Vec<f64>,
    pub probs: ClassScores,
}

/// Either a frame for the spatial stream or a flow stack for the temporal one.
#[derive(Debug, Clone, Copy)]
pub enum StreamInput<'a> {
    Frame(&'a Frame),
    Flow(&'a StackedFlow),
}

impl StreamModel {
    pub fn zeros(kind: StreamKind, shape: ModelShape) -> Result<Self> {
        shape.validate()?;
        if kind == StreamKind::Spatial && shape.input_channels != 3 {
            return Err(Error::invalid("spatial stream takes 3 input channels"));
        }
        if kind == StreamKind::Temporal && shape.input_channels % 2 != 0 {
            return Err(Error::invalid(
                "temporal stream takes an even (2L) channel count",
            ));
        }
        let n = Self::group_range_for(&shape, ParamGroup::Fc2Bias).end;
        Ok(Self {
            kind,
            shape,
            params: vec![0.0; n],
        })
    }

    /// Gaussian weights with standard deviation `sqrt(2 / fan_in)`, zero biases.
    pub fn init(kind: StreamKind, shape: ModelShape, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(kind, shape)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fans = [
            (
                ParamGroup::ConvWeight,
                shape.input_channels * shape.kernel * shape.kernel,
            ),
            (ParamGroup::Fc1Weight, shape.filters),
            (ParamGroup::Fc2Weight, shape.hidden),
        ];
        for (group, fan_in) in fans {
            let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            let r = m.group_range(group);
            for p in &mut m.params[r] {
                *p = dist.sample(&mut rng);
            }
        }
        Ok(m)
    }

    pub fn stack_len(&self) -> usize {
        self.shape.input_channels / 2
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn group_range_for(s: &ModelShape, group: ParamGroup) -> Range<usize> {
        let sizes = [
            s.filters * s.input_channels * s.kernel * s.kernel,
            s.filters,
            s.hidden * s.filters,
            s.hidden,
            ActionLabel::COUNT * s.hidden,
            ActionLabel::COUNT,
        ];
        let idx = ParamGroup::ALL
            .iter()
            .position(|g| *g == group)
            .expect("known group");
        let start: usize = sizes[..idx].iter().sum();
        start..start + sizes[idx]
    }

    pub fn group_range(&self, group: ParamGroup) -> Range<usize> {
        Self::group_range_for(&self.shape, group)
    }

    pub fn group(&self, group: ParamGroup) -> &[f64] {
        &self.params[self.group_range(group)]
    }

    pub fn group_mut(&mut self, group: ParamGroup) -> &mut [f64] {
        let r = self.group_range(group);
        &mut self.params[r]
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Turns a raw input into the normalised tensor this stream expects.
    pub fn prepare(&self, input: StreamInput<'_>) -> Result<Tensor> {
        let t = match (self.kind, input) {
            (StreamKind::Spatial, StreamInput::Frame(f)) => eval_transform(
                f,
                &AugmentConfig::for_input(self.shape.input_width, self.shape.input_height),
            )?,
            (StreamKind::Temporal, StreamInput::Flow(s)) => {
                if s.channel_count() != self.shape.input_channels {
                    return Err(Error::dim(format!(
                        "temporal stream expects {} channels, stack has {}",
                        self.shape.input_channels,
                        s.channel_count()
                    )));
                }
                flow_tensor(s)
            }
            (StreamKind::Spatial, StreamInput::Flow(s)) => {
                return Err(Error::dim(format!(
                    "spatial stream expects an RGB frame, got a {}-channel flow stack",
                    s.channel_count()
                )))
            }
            (StreamKind::Temporal, StreamInput::Frame(_)) => {
                return Err(Error::dim(
                    "temporal stream expects a flow stack, got an RGB frame",
                ))
            }
        };
        Ok(t)
    }

    pub fn forward(&self, input: StreamInput<'_>) -> Result<ClassScores> {
        let t = self.prepare(input)?;
        self.forward_tensor(&t)
    }

    pub fn forward_tensor(&self, x: &Tensor) -> Result<ClassScores> {
        Ok(self.forward_cached(x)?.probs)
    }

    pub(crate) fn forward_cached(&self, x: &Tensor) -> Result<ForwardCache> {
        let s = &self.shape;
        if x.channels != s.input_channels || x.height != s.input_height || x.width != s.input_width
        {
            return Err(Error::dim(format!(
                "input {}x{}x{} does not match model {}x{}x{}",
                x.channels, x.height, x.width, s.input_channels, s.input_height, s.input_width
            )));
        }
        let (oh, ow) = s.conv_out();
        let k = s.kernel;
        let cw = self.group(ParamGroup::ConvWeight);
        let cb = self.group(ParamGroup::ConvBias);

        let mut act = vec![0.0; s.filters * oh * ow];
        for f in 0..s.filters {
            let out = &mut act[f * oh * ow..(f + 1) * oh * ow];
            out.iter_mut().for_each(|o| *o = cb[f]);
            for c in 0..s.input_channels {
                let plane = x.plane(c);
                for ky in 0..k {
                    for kx in 0..k {
                        let wgt = cw[((f * s.input_channels + c) * k + ky) * k + kx];
                        if wgt == 0.0 {
                            continue;
                        }
                        for y in 0..oh {
                            let row = &plane[(y + ky) * x.width + kx..(y + ky) * x.width + kx + ow];
                            let o = &mut out[y * ow..(y + 1) * ow];
                            for (oo, &xv) in o.iter_mut().zip(row) {
                                *oo += wgt * xv;
                            }
                        }
                    }
                }
            }
            out.iter_mut().for_each(|o| *o = softplus(*o));
        }
        let area = (oh * ow) as f64;
        let pooled: Vec<f64> = act
            .chunks_exact(oh * ow)
            .map(|c| c.iter().sum::<f64>() / area)
            .collect();

        let w1 = self.group(ParamGroup::Fc1Weight);
        let b1 = self.group(ParamGroup::Fc1Bias);
        let hidden: Vec<f64> = (0..s.hidden)
            .map(|j| {
                let z: f64 = b1[j]
                    + (0..s.filters)
                        .map(|f| w1[j * s.filters + f] * pooled[f])
                        .sum::<f64>();
                z.tanh()
            })
            .collect();

        let w2 = self.group(ParamGroup::Fc2Weight);
        let b2 = self.group(ParamGroup::Fc2Bias);
        let mut logits = [0.0; 4];
        for (c, l) in logits.iter_mut().enumerate() {
            *l = b2[c]
                + (0..s.hidden)
                    .map(|j| w2[c * s.hidden + j] * hidden[j])
                    .sum::<f64>();
        }
        let probs = ClassScores::softmax(&logits)?;
        Ok(ForwardCache {
            act,
            pooled,
            hidden,
            probs,
        })
    }

    /// Accumulates `dL/dθ` into `grads` given `dL/dlogits` for one cached
    /// forward pass over `x`.
    pub(crate) fn backward(
        &self,
        x: &Tensor,
        cache: &ForwardCache,
        dlogits: &[f64; 4],
        grads: &mut [f64],
    ) {
        debug_assert_eq!(grads.len(), self.params.len());
        let s = &self.shape;
        let (oh, ow) = s.conv_out();
        let k = s.kernel;

        let r2w = self.group_range(ParamGroup::Fc2Weight);
        let r2b = self.group_range(ParamGroup::Fc2Bias);
        let w2 = &self.params[r2w.clone()];
        let mut dhidden = vec![0.0; s.hidden];
        for c in 0..4 {
            grads[r2b.start + c] += dlogits[c];
            for j in 0..s.hidden {
                grads[r2w.start + c * s.hidden + j] += dlogits[c] * cache.hidden[j];
                dhidden[j] += w2[c * s.hidden + j] * dlogits[c];
            }
        }

        let r1w = self.group_range(ParamGroup::Fc1Weight);
        let r1b = self.group_range(ParamGroup::Fc1Bias);
        let w1 = &self.params[r1w.clone()];
        let mut dpooled = vec![0.0; s.filters];
        for j in 0..s.hidden {
            let dz = dhidden[j] * (1.0 - cache.hidden[j] * cache.hidden[j]);
            grads[r1b.start + j] += dz;
            for f in 0..s.filters {
                grads[r1w.start + j * s.filters + f] += dz * cache.pooled[f];
                dpooled[f] += w1[j * s.filters + f] * dz;
            }
        }

        let rcw = self.group_range(ParamGroup::ConvWeight);
        let rcb = self.group_range(ParamGroup::ConvBias);
        let area = (oh * ow) as f64;
        let mut dz = vec![0.0; oh * ow];
        for f in 0..s.filters {
            if dpooled[f] == 0.0 {
                continue;
            }
            let a = &cache.act[f * oh * ow..(f + 1) * oh * ow];
            let g = dpooled[f] / area;
            for (d, &av) in dz.iter_mut().zip(a) {
                // softplus' = sigmoid = 1 - exp(-softplus)
                *d = g * -(-av).exp_m1();
            }
            grads[rcb.start + f] += dz.iter().sum::<f64>();
            for c in 0..s.input_channels {
                let plane = x.plane(c);
                for ky in 0..k {
                    for kx in 0..k {
                        let mut acc = 0.0;
                        for y in 0..oh {
                            let row = &plane[(y + ky) * x.width + kx..(y + ky) * x.width + kx + ow];
                            let d = &dz[y * ow..(y + 1) * ow];
                            acc += row.iter().zip(d).map(|(a, b)| a * b).sum::<f64>();
                        }
                        grads[rcw.start + ((f * s.input_channels + c) * k + ky) * k + kx] += acc;
                    }
                }
            }
        }
    }

    /// A temporal model initialised from a spatial one: the first layer via
    /// [`cross_modality_init`], every later layer copied unchanged.
    pub fn temporal_from_spatial(spatial: &StreamModel, stack_len: usize) -> Result<StreamModel> {
        if spatial.kind != StreamKind::Spatial {
            return Err(Error::invalid(
                "cross-modality initialisation needs a spatial model",
            ));
        }
        let shape = ModelShape {
            input_channels: 2 * stack_len,
            ..spatial.shape
        };
        let mut t = StreamModel::zeros(StreamKind::Temporal, shape)?;
        let conv = cross_modality_init(
            spatial.group(ParamGroup::ConvWeight),
            spatial.shape.filters,
            spatial.shape.kernel,
            2 * stack_len,
        )?;
        t.group_mut(ParamGroup::ConvWeight).copy_from_slice(&conv);
        for g in &ParamGroup::ALL[1..] {
            t.group_mut(*g).copy_from_slice(spatial.group(*g));
        }
        Ok(t)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Maps `[F, 3, k, k]` RGB filters to `[F, target_channels, k, k]` by averaging
/// each filter over its colour channels and replicating the mean.
pub fn cross_modality_init(
    spatial: &[f64],
    filters: usize,
    kernel: usize,
    target_channels: usize,
) -> Result<Vec<f64>> {
    let kk = kernel * kernel;
    if filters == 0 || kernel == 0 || target_channels == 0 {
        return Err(Error::invalid(
            "filters, kernel and target channels must be positive",
        ));
    }
    if spatial.len() != filters * 3 * kk {
        return Err(Error::dim(format!(
            "expected {} weights for [{filters}, 3, {kernel}, {kernel}], got {}",
            filters * 3 * kk,
            spatial.len()
        )));
    }
    let mut out = Vec::with_capacity(filters * target_channels * kk);
    for f in 0..filters {
        let base = &spatial[f * 3 * kk..(f + 1) * 3 * kk];
        let mean: Vec<f64> = (0..kk)
            .map(|i| (base[i] + base[kk + i] + base[2 * kk + i]) / 3.0)
            .collect();
        for _ in 0..target_channels {
            out.extend_from_slice(&mean);
        }
    }
    Ok(out)
}
