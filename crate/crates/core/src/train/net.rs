//! Small dilated encoder with a pluggable decoder.
//!
//! Encoder: `log2(d)` stride-2 3x3 convolutions, then one 3x3 convolution per
//! dilation rate at stride 1 with resolution-preserving padding, each followed
//! by ReLU. Decoders:
//!
//! * `Duc`: 3x3 conv to `(d / cell)^2 * L` channels, then channel-to-space.
//! * `Bilinear`: 3x3 conv to `L` channels, then fixed bilinear upsampling by `d`.
//! * `Deconv`: transposed conv x2 (ReLU), then x`d/2` to `L` channels.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::conv::{
    conv2d_backward, conv2d_forward, transposed_conv_backward, transposed_conv_forward, ConvLayer, ConvSpec,
    TransposedConv,
};
use crate::error::{Error, Result};
use crate::hdc::DilationSchedule;
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::train::data::LabelMap;
use crate::train::loss::argmax_labels;
use crate::upsample::{bilinear_backward, bilinear_upsample, duc_rearrange, duc_rearrange_inverse, DucSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DecoderKind {
    Duc,
    Bilinear,
    Deconv,
}

impl DecoderKind {
    pub fn name(&self) -> &'static str {
        match self {
            DecoderKind::Duc => "duc",
            DecoderKind::Bilinear => "bilinear",
            DecoderKind::Deconv => "deconv",
        }
    }
}

impl core::str::FromStr for DecoderKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "duc" => Ok(DecoderKind::Duc),
            "bilinear" => Ok(DecoderKind::Bilinear),
            "deconv" | "transposed" => Ok(DecoderKind::Deconv),
            other => Err(Error::InvalidConfig(format!("unknown decoder {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ToyNetConfig {
    pub in_channels: usize,
    pub width: usize,
    /// Total downsampling factor of the encoder; a power of two.
    pub d: usize,
    pub rates: Vec<usize>,
    pub kernel: usize,
    pub classes: usize,
    pub decoder: DecoderKind,
    /// DUC cell size; must be 1 for the other decoders.
    pub cell: usize,
}

impl Default for ToyNetConfig {
    fn default() -> Self {
        ToyNetConfig {
            in_channels: 1,
            width: 16,
            d: 4,
            rates: vec![1, 2, 3],
            kernel: 3,
            classes: 3,
            decoder: DecoderKind::Duc,
            cell: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv { layer: ConvLayer, relu: bool },
    Deconv { layer: TransposedConv, relu: bool },
    Shuffle(DucSpec),
    Bilinear(usize),
}

impl Layer {
    fn relu(&self) -> bool {
        match self {
            Layer::Conv { relu, .. } | Layer::Deconv { relu, .. } => *relu,
            _ => false,
        }
    }

    fn params(&self) -> Option<(&Tensor, &Vec<f64>)> {
        match self {
            Layer::Conv { layer, .. } => Some((&layer.weights, &layer.bias)),
            Layer::Deconv { layer, .. } => Some((&layer.weights, &layer.bias)),
            _ => None,
        }
    }

    fn params_mut(&mut self) -> Option<(&mut Tensor, &mut Vec<f64>)> {
        match self {
            Layer::Conv { layer, .. } => Some((&mut layer.weights, &mut layer.bias)),
            Layer::Deconv { layer, .. } => Some((&mut layer.weights, &mut layer.bias)),
            _ => None,
        }
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut y = match self {
            Layer::Conv { layer, .. } => conv2d_forward(x, layer)?,
            Layer::Deconv { layer, .. } => transposed_conv_forward(x, layer)?,
            Layer::Shuffle(spec) => duc_rearrange(x, spec)?,
            Layer::Bilinear(f) => bilinear_upsample(x, *f)?,
        };
        if self.relu() {
            y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        }
        Ok(y)
    }
}

/// Gradients for one parametric layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

/// Activations kept from a forward pass; `activations[0]` is the input.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Tensor>,
}

impl ForwardCache {
    pub fn output(&self) -> &Tensor {
        self.activations.last().expect("cache holds the input at least")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyNet {
    config: ToyNetConfig,
    schedule: DilationSchedule,
    layers: Vec<Layer>,
}

impl ToyNet {
    pub fn new(config: ToyNetConfig, rng: &mut Rng) -> Result<Self> {
        let c = &config;
        if c.d == 0 || !c.d.is_power_of_two() {
            return Err(Error::InvalidConfig(format!("d must be a power of two, got {}", c.d)));
        }
        if c.width == 0 || c.in_channels == 0 || c.classes < 2 {
            return Err(Error::InvalidConfig("need width >= 1, in_channels >= 1, classes >= 2".into()));
        }
        if c.decoder != DecoderKind::Duc && c.cell != 1 {
            return Err(Error::InvalidConfig("cell > 1 is only defined for the DUC decoder".into()));
        }
        let schedule = DilationSchedule::new(c.rates.clone(), c.kernel)?;
        let mut layers = Vec::new();
        let mut ch = c.in_channels;
        for _ in 0..c.d.trailing_zeros() {
            let spec = ConvSpec::new(3, 1, 2, 1, ch, c.width)?;
            layers.push(Layer::Conv { layer: ConvLayer::he(spec, rng), relu: true });
            ch = c.width;
        }
        for &r in schedule.rates() {
            let spec = ConvSpec::same(c.kernel, r, ch, c.width)?;
            layers.push(Layer::Conv { layer: ConvLayer::he(spec, rng), relu: true });
            ch = c.width;
        }
        match c.decoder {
            DecoderKind::Duc => {
                let duc = DucSpec::new(c.d, c.classes, c.cell)?;
                let spec = ConvSpec::same(3, 1, ch, duc.channels())?;
                layers.push(Layer::Conv { layer: ConvLayer::he(spec, rng), relu: false });
                layers.push(Layer::Shuffle(duc));
            }
            DecoderKind::Bilinear => {
                let spec = ConvSpec::same(3, 1, ch, c.classes)?;
                layers.push(Layer::Conv { layer: ConvLayer::he(spec, rng), relu: false });
                if c.d > 1 {
                    layers.push(Layer::Bilinear(c.d));
                }
            }
            DecoderKind::Deconv => {
                let factors: Vec<usize> = [2, c.d / 2].into_iter().filter(|&f| f > 1 && f <= c.d).collect();
                if factors.is_empty() {
                    let spec = ConvSpec::same(3, 1, ch, c.classes)?;
                    layers.push(Layer::Conv { layer: ConvLayer::he(spec, rng), relu: false });
                }
                for (i, &f) in factors.iter().enumerate() {
                    let last = i + 1 == factors.len();
                    let out = if last { c.classes } else { c.width };
                    let spec = ConvSpec::new(2 * f, 1, f, f / 2, ch, out)?;
                    layers.push(Layer::Deconv { layer: TransposedConv::he(spec, rng), relu: !last });
                    ch = out;
                }
            }
        }
        Ok(ToyNet { config, schedule, layers })
    }

    pub fn config(&self) -> &ToyNetConfig {
        &self.config
    }

    /// The dilation schedule carried by the encoder's stride-1 layers.
    pub fn schedule(&self) -> &DilationSchedule {
        &self.schedule
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Downsampling factor of the network output relative to the input.
    pub fn output_cell(&self) -> usize {
        self.config.cell
    }

    /// Labels at the resolution the network predicts.
    pub fn target_labels(&self, labels: &LabelMap) -> Result<LabelMap> {
        if self.config.cell == 1 {
            Ok(labels.clone())
        } else {
            labels.downsample_majority(self.config.cell, self.config.classes)
        }
    }

    pub fn check_input(&self, h: usize, w: usize) -> Result<()> {
        let d = self.config.d;
        if !h.is_multiple_of(d) || !w.is_multiple_of(d) {
            return Err(Error::InvalidConfig(format!("input {h}x{w} not divisible by d = {d}")));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<ForwardCache> {
        self.check_input(x.shape().h, x.shape().w)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.clone());
        for layer in &self.layers {
            let y = layer.forward(activations.last().expect("nonempty"))?;
            activations.push(y);
        }
        Ok(ForwardCache { activations })
    }

    /// Encoder output (the feature map the decoder consumes).
    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        let cache = self.forward(x)?;
        let depth = self.config.d.trailing_zeros() as usize + self.schedule.len();
        Ok(cache.activations[depth].clone())
    }

    /// Parameter gradients (in [`ToyNet::params`] order) given the gradient
    /// of the loss with respect to the network output.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Tensor) -> Result<Vec<ParamGrads>> {
        cache.output().check_same_shape(grad_out)?;
        let mut grads = Vec::new();
        let mut g = grad_out.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.activations[i];
            if layer.relu() {
                let out = &cache.activations[i + 1];
                for (gv, &ov) in g.data_mut().iter_mut().zip(out.data()) {
                    if ov <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            g = match layer {
                Layer::Conv { layer, .. } => {
                    let cg = conv2d_backward(input, layer, &g)?;
                    grads.push(ParamGrads { weights: cg.weights, bias: cg.bias });
                    cg.input
                }
                Layer::Deconv { layer, .. } => {
                    let cg = transposed_conv_backward(input, layer, &g)?;
                    grads.push(ParamGrads { weights: cg.weights, bias: cg.bias });
                    cg.input
                }
                Layer::Shuffle(spec) => duc_rearrange_inverse(&g, spec)?,
                Layer::Bilinear(f) => bilinear_backward(&g, *f)?,
            };
        }
        grads.reverse();
        Ok(grads)
    }

    /// Weight and bias buffers of every parametric layer, input to output.
    pub fn params(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .filter_map(Layer::params)
            .flat_map(|(w, b)| [w.data(), b.as_slice()])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .filter_map(Layer::params_mut)
            .flat_map(|(w, b)| [w.data_mut(), b.as_mut_slice()])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params().concat()
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} parameters", self.param_count()),
                got: format!("{}", values.len()),
            });
        }
        let mut rest = values;
        for p in self.params_mut() {
            let (head, tail) = rest.split_at(p.len());
            p.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    /// Mutable access to one parameter by flat index.
    pub fn param_mut(&mut self, index: usize) -> Option<&mut f64> {
        let mut i = index;
        for p in self.params_mut() {
            if i < p.len() {
                return Some(&mut p[i]);
            }
            i -= p.len();
        }
        None
    }

    /// Per-pixel class prediction at full input resolution for each batch entry.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<LabelMap>> {
        let cache = self.forward(x)?;
        let out = cache.output();
        Ok((0..out.shape().n)
            .map(|n| {
                let m = argmax_labels(out, n);
                if self.config.cell > 1 {
                    m.upsample_nearest(self.config.cell)
                } else {
                    m
                }
            })
            .collect())
    }

    /// Human-readable layer list.
    pub fn describe(&self) -> Vec<String> {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Conv { layer, relu } => {
                    let s = layer.spec;
                    format!("conv k={} r={} stride={} pad={} {}->{}{}", s.k, s.r, s.stride, s.pad, s.c_in, s.c_out, if *relu { " relu" } else { "" })
                }
                Layer::Deconv { layer, relu } => {
                    let s = layer.spec;
                    format!("deconv k={} stride={} pad={} {}->{}{}", s.k, s.stride, s.pad, s.c_in, s.c_out, if *relu { " relu" } else { "" })
                }
                Layer::Shuffle(spec) => format!("duc-rearrange d={} cell={} classes={}", spec.d, spec.cell, spec.classes),
                Layer::Bilinear(f) => format!("bilinear x{f}"),
            })
            .collect()
    }
}
