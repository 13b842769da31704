//! Dilated 2-D cross-correlation with hand-derived gradients, and the
//! 1-D dilated reference form.
//!
//! Output element `(n, co, oy, ox)` is
//!
//! ```text
//! bias[co] + sum_{ci, ky, kx} w[co, ci, ky, kx] * x[n, ci, oy*s + ky*r - pad, ox*s + kx*r - pad]
//! ```
//!
//! with out-of-range input positions reading as zero. Contributions to one
//! output element are always accumulated in `(ci, ky, kx)` order and the bias
//! is added last, so the direct loop, the naive reference and the
//! mask-expanded kernel agree bit for bit.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{he_init, Shape, Tensor};

/// Spatial extent of a `k`-tap kernel with dilation `r`.
pub fn dilated_kernel_size(k: usize, r: usize) -> usize {
    k + (k - 1) * (r - 1)
}

/// Zero padding that keeps the spatial size unchanged at stride 1 (odd `k`).
pub fn same_padding(k: usize, r: usize) -> usize {
    r * (k - 1) / 2
}

/// Output length along one axis, or `None` when it would be < 1.
pub fn conv_output_len(input: usize, k: usize, r: usize, stride: usize, pad: usize) -> Option<usize> {
    let kd = dilated_kernel_size(k, r);
    let padded = input + 2 * pad;
    if padded < kd {
        return None;
    }
    Some((padded - kd) / stride + 1)
}

/// 1-D dilated filtering in its literal indexed form:
/// `g[i] = sum_{l=1..L} f[i + r*l] * h[l]`, valid outputs only.
///
/// `h[l]` for `l = 1..L` is stored at `filter[l - 1]`. Because the tap index
/// starts at 1, output `i` reads `f[i + r] .. f[i + r*L]`; sample `f[i]` itself
/// is never used. The 2-D convolution instead centres its kernel.
pub fn conv1d_dilated(signal: &[f64], filter: &[f64], r: usize) -> Result<Vec<f64>> {
    if filter.is_empty() || r == 0 {
        return Err(Error::InvalidConfig("filter must be nonempty and r >= 1".into()));
    }
    let reach = r * filter.len();
    if signal.len() < reach + 1 {
        return Err(Error::SequenceTooShort {
            need: reach + 1,
            got: signal.len(),
        });
    }
    Ok((0..signal.len() - reach)
        .map(|i| {
            filter
                .iter()
                .enumerate()
                .map(|(l0, h)| signal[i + r * (l0 + 1)] * h)
                .sum()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub k: usize,
    pub r: usize,
    pub stride: usize,
    pub pad: usize,
    pub c_in: usize,
    pub c_out: usize,
}

impl ConvSpec {
    pub fn new(k: usize, r: usize, stride: usize, pad: usize, c_in: usize, c_out: usize) -> Result<Self> {
        if k == 0 || r == 0 || stride == 0 || c_in == 0 || c_out == 0 {
            return Err(Error::InvalidConfig(format!(
                "conv spec needs k, r, stride, c_in, c_out >= 1 (got k={k} r={r} stride={stride} c_in={c_in} c_out={c_out})"
            )));
        }
        Ok(ConvSpec { k, r, stride, pad, c_in, c_out })
    }

    /// Stride-1 layer whose output has the same spatial size as its input.
    pub fn same(k: usize, r: usize, c_in: usize, c_out: usize) -> Result<Self> {
        if k.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!("same padding needs odd k, got {k}")));
        }
        ConvSpec::new(k, r, 1, same_padding(k, r), c_in, c_out)
    }

    pub fn dilated_k(&self) -> usize {
        dilated_kernel_size(self.k, self.r)
    }

    pub fn weight_shape(&self) -> Shape {
        Shape { n: self.c_out, c: self.c_in, h: self.k, w: self.k }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let oh = conv_output_len(h, self.k, self.r, self.stride, self.pad);
        let ow = conv_output_len(w, self.k, self.r, self.stride, self.pad);
        match (oh, ow) {
            (Some(oh), Some(ow)) => Ok((oh, ow)),
            _ => Err(Error::EmptyOutput {
                input: h.min(w),
                pad: self.pad,
                kernel: self.dilated_k(),
                stride: self.stride,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub spec: ConvSpec,
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn new(spec: ConvSpec, weights: Tensor, bias: Vec<f64>) -> Result<Self> {
        if weights.shape() != spec.weight_shape() {
            return Err(Error::ShapeMismatch {
                expected: format!("weights {}", spec.weight_shape()),
                got: format!("{}", weights.shape()),
            });
        }
        if bias.len() != spec.c_out {
            return Err(Error::ShapeMismatch {
                expected: format!("{} bias values", spec.c_out),
                got: format!("{}", bias.len()),
            });
        }
        Ok(ConvLayer { spec, weights, bias })
    }

    pub fn zeros(spec: ConvSpec) -> Self {
        ConvLayer {
            spec,
            weights: Tensor::zeros(spec.weight_shape()),
            bias: vec![0.0; spec.c_out],
        }
    }

    /// He-normal weights (fan-in `c_in * k * k`), zero bias.
    pub fn he(spec: ConvSpec, rng: &mut Rng) -> Self {
        let fan_in = spec.c_in * spec.k * spec.k;
        let weights = he_init(spec.weight_shape(), fan_in, rng).expect("spec dims are >= 1");
        ConvLayer { spec, weights, bias: vec![0.0; spec.c_out] }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

/// Output positions `o` in `0..out_len` for which `o * stride + offset` lands
/// in `0..in_len`, as a half-open range.
#[inline]
pub(crate) fn valid_range(out_len: usize, in_len: usize, stride: usize, offset: isize) -> (usize, usize) {
    let s = stride as isize;
    let start = if offset >= 0 { 0 } else { ((-offset) + s - 1) / s };
    let last_in = in_len as isize - 1 - offset;
    let end = if last_in < 0 { 0 } else { last_in / s + 1 };
    let start = start as usize;
    let end = (end as usize).min(out_len);
    (start, end.max(start))
}

#[inline]
pub(crate) fn tap_offset(tap: usize, r: usize, pad: usize) -> isize {
    (tap * r) as isize - pad as isize
}

fn check_input(x: &Tensor, spec: &ConvSpec) -> Result<(usize, usize)> {
    let s = x.shape();
    if s.c != spec.c_in {
        return Err(Error::ShapeMismatch {
            expected: format!("{} input channels", spec.c_in),
            got: format!("{}", s.c),
        });
    }
    spec.output_hw(s.h, s.w)
}

/// Raw cross-correlation without bias; shared by the forward pass and the
/// transposed-convolution input gradient.
fn correlate(x: &Tensor, weights: &Tensor, spec: &ConvSpec, oh: usize, ow: usize) -> Tensor {
    let xs = x.shape();
    let out_shape = Shape { n: xs.n, c: spec.c_out, h: oh, w: ow };
    let mut out = Tensor::zeros(out_shape);
    let k = spec.k;
    let xd = x.data();
    let wd = weights.data();
    let od = out.data_mut();
    for n in 0..xs.n {
        for co in 0..spec.c_out {
            let obase = out_shape.offset(n, co, 0, 0);
            for ci in 0..spec.c_in {
                let xbase = xs.offset(n, ci, 0, 0);
                for ky in 0..k {
                    let offy = tap_offset(ky, spec.r, spec.pad);
                    let (oy0, oy1) = valid_range(oh, xs.h, spec.stride, offy);
                    for kx in 0..k {
                        let wv = wd[((co * spec.c_in + ci) * k + ky) * k + kx];
                        let offx = tap_offset(kx, spec.r, spec.pad);
                        let (ox0, ox1) = valid_range(ow, xs.w, spec.stride, offx);
                        for oy in oy0..oy1 {
                            let iy = (oy * spec.stride) as isize + offy;
                            let xrow = xbase + iy as usize * xs.w;
                            let orow = obase + oy * ow;
                            for ox in ox0..ox1 {
                                let ix = (ox * spec.stride) as isize + offx;
                                od[orow + ox] += wv * xd[xrow + ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`correlate`] with respect to its input: scatters `g` back
/// through the kernel. Shared by the conv input gradient and transposed conv.
fn scatter(g: &Tensor, weights: &Tensor, spec: &ConvSpec, in_h: usize, in_w: usize) -> Tensor {
    let gs = g.shape();
    let in_shape = Shape { n: gs.n, c: spec.c_in, h: in_h, w: in_w };
    let mut gx = Tensor::zeros(in_shape);
    let k = spec.k;
    let gd = g.data();
    let wd = weights.data();
    let xd = gx.data_mut();
    for n in 0..gs.n {
        for co in 0..spec.c_out {
            let gbase = gs.offset(n, co, 0, 0);
            for ci in 0..spec.c_in {
                let xbase = in_shape.offset(n, ci, 0, 0);
                for ky in 0..k {
                    let offy = tap_offset(ky, spec.r, spec.pad);
                    let (oy0, oy1) = valid_range(gs.h, in_h, spec.stride, offy);
                    for kx in 0..k {
                        let wv = wd[((co * spec.c_in + ci) * k + ky) * k + kx];
                        let offx = tap_offset(kx, spec.r, spec.pad);
                        let (ox0, ox1) = valid_range(gs.w, in_w, spec.stride, offx);
                        for oy in oy0..oy1 {
                            let iy = (oy * spec.stride) as isize + offy;
                            let xrow = xbase + iy as usize * in_w;
                            let grow = gbase + oy * gs.w;
                            for ox in ox0..ox1 {
                                let ix = (ox * spec.stride) as isize + offx;
                                xd[xrow + ix as usize] += gd[grow + ox] * wv;
                            }
                        }
                    }
                }
            }
        }
    }
    gx
}

/// Weight gradient `sum_{n,oy,ox} g[n,co,oy,ox] * x[n,ci,iy,ix]` per tap.
fn weight_grad(x: &Tensor, g: &Tensor, spec: &ConvSpec) -> Tensor {
    let xs = x.shape();
    let gs = g.shape();
    let k = spec.k;
    let mut gw = Tensor::zeros(spec.weight_shape());
    let xd = x.data();
    let gd = g.data();
    let wd = gw.data_mut();
    for n in 0..xs.n {
        for co in 0..spec.c_out {
            let gbase = gs.offset(n, co, 0, 0);
            for ci in 0..spec.c_in {
                let xbase = xs.offset(n, ci, 0, 0);
                for ky in 0..k {
                    let offy = tap_offset(ky, spec.r, spec.pad);
                    let (oy0, oy1) = valid_range(gs.h, xs.h, spec.stride, offy);
                    for kx in 0..k {
                        let offx = tap_offset(kx, spec.r, spec.pad);
                        let (ox0, ox1) = valid_range(gs.w, xs.w, spec.stride, offx);
                        let mut acc = 0.0;
                        for oy in oy0..oy1 {
                            let iy = (oy * spec.stride) as isize + offy;
                            let xrow = xbase + iy as usize * xs.w;
                            let grow = gbase + oy * gs.w;
                            for ox in ox0..ox1 {
                                let ix = (ox * spec.stride) as isize + offx;
                                acc += gd[grow + ox] * xd[xrow + ix as usize];
                            }
                        }
                        wd[((co * spec.c_in + ci) * k + ky) * k + kx] += acc;
                    }
                }
            }
        }
    }
    gw
}

fn channel_sums(g: &Tensor) -> Vec<f64> {
    let s = g.shape();
    let mut sums = vec![0.0; s.c];
    for n in 0..s.n {
        for (c, sum) in sums.iter_mut().enumerate() {
            *sum += g.plane(n, c).iter().sum::<f64>();
        }
    }
    sums
}

fn add_bias(out: &mut Tensor, bias: &[f64]) {
    let s = out.shape();
    let plane = s.plane();
    for (i, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
        let b = bias[i % s.c];
        for v in chunk {
            *v += b;
        }
    }
}

pub fn conv2d_forward(x: &Tensor, layer: &ConvLayer) -> Result<Tensor> {
    let (oh, ow) = check_input(x, &layer.spec)?;
    let mut out = correlate(x, &layer.weights, &layer.spec, oh, ow);
    add_bias(&mut out, &layer.bias);
    Ok(out)
}

/// Gradients of `sum(grad_out * conv2d_forward(x, layer))` with respect to
/// the input, the weights and the bias.
pub fn conv2d_backward(x: &Tensor, layer: &ConvLayer, grad_out: &Tensor) -> Result<ConvGrads> {
    let (oh, ow) = check_input(x, &layer.spec)?;
    let xs = x.shape();
    let expected = Shape { n: xs.n, c: layer.spec.c_out, h: oh, w: ow };
    if grad_out.shape() != expected {
        return Err(Error::ShapeMismatch {
            expected: format!("grad_out {expected}"),
            got: format!("{}", grad_out.shape()),
        });
    }
    Ok(ConvGrads {
        input: scatter(grad_out, &layer.weights, &layer.spec, xs.h, xs.w),
        weights: weight_grad(x, grad_out, &layer.spec),
        bias: channel_sums(grad_out),
    })
}

/// Kernel with `r - 1` zeros inserted between taps, shape
/// `(c_out, c_in, k_d, k_d)`. Convolving with it at dilation 1 equals
/// convolving with the original at dilation `r`.
pub fn expand_dilated_kernel(weights: &Tensor, r: usize) -> Tensor {
    let s = weights.shape();
    let kd = dilated_kernel_size(s.h, r);
    let mut out = Tensor::zeros(Shape { n: s.n, c: s.c, h: kd, w: kd });
    for co in 0..s.n {
        for ci in 0..s.c {
            for ky in 0..s.h {
                for kx in 0..s.w {
                    *out.at_mut(co, ci, ky * r, kx * r) = weights.at(co, ci, ky, kx);
                }
            }
        }
    }
    out
}

/// Fractionally strided (transposed) convolution.
///
/// `spec.c_in`/`spec.c_out` are the channels consumed/produced by the
/// transposed op, `spec.stride` is the upsampling factor, and the weights have
/// shape `(c_in, c_out, k, k)`. It is the adjoint of a [`conv2d_forward`]
/// whose weights are the same tensor read as `(c_out_conv = c_in, c_in_conv = c_out, k, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransposedConv {
    pub spec: ConvSpec,
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

impl TransposedConv {
    pub fn new(spec: ConvSpec, weights: Tensor, bias: Vec<f64>) -> Result<Self> {
        let expected = Shape { n: spec.c_in, c: spec.c_out, h: spec.k, w: spec.k };
        if weights.shape() != expected {
            return Err(Error::ShapeMismatch {
                expected: format!("weights {expected}"),
                got: format!("{}", weights.shape()),
            });
        }
        if bias.len() != spec.c_out {
            return Err(Error::ShapeMismatch {
                expected: format!("{} bias values", spec.c_out),
                got: format!("{}", bias.len()),
            });
        }
        Ok(TransposedConv { spec, weights, bias })
    }

    pub fn he(spec: ConvSpec, rng: &mut Rng) -> Self {
        let shape = Shape { n: spec.c_in, c: spec.c_out, h: spec.k, w: spec.k };
        // each output sees about c_in * (k / stride)^2 taps
        let per_axis = spec.k.div_ceil(spec.stride);
        let fan_in = spec.c_in * per_axis * per_axis;
        let weights = he_init(shape, fan_in, rng).expect("spec dims are >= 1");
        TransposedConv { spec, weights, bias: vec![0.0; spec.c_out] }
    }

    /// The forward convolution this op is the adjoint of (no bias).
    pub fn adjoint_spec(&self) -> ConvSpec {
        ConvSpec { c_in: self.spec.c_out, c_out: self.spec.c_in, ..self.spec }
    }

    /// `(in - 1) * stride - 2 * pad + k_d` per axis.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let len = |i: usize| -> Option<usize> {
            ((i - 1) * self.spec.stride + self.spec.dilated_k()).checked_sub(2 * self.spec.pad).filter(|&v| v >= 1)
        };
        match (len(h), len(w)) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(Error::EmptyOutput {
                input: h.min(w),
                pad: self.spec.pad,
                kernel: self.spec.dilated_k(),
                stride: self.spec.stride,
            }),
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize)> {
        if x.shape().c != self.spec.c_in {
            return Err(Error::ShapeMismatch {
                expected: format!("{} input channels", self.spec.c_in),
                got: format!("{}", x.shape().c),
            });
        }
        self.output_hw(x.shape().h, x.shape().w)
    }
}

pub fn transposed_conv_forward(x: &Tensor, layer: &TransposedConv) -> Result<Tensor> {
    let (oh, ow) = layer.check_input(x)?;
    let mut out = scatter(x, &layer.weights, &layer.adjoint_spec(), oh, ow);
    add_bias(&mut out, &layer.bias);
    Ok(out)
}

pub fn transposed_conv_backward(x: &Tensor, layer: &TransposedConv, grad_out: &Tensor) -> Result<ConvGrads> {
    let (oh, ow) = layer.check_input(x)?;
    let xs = x.shape();
    let expected = Shape { n: xs.n, c: layer.spec.c_out, h: oh, w: ow };
    if grad_out.shape() != expected {
        return Err(Error::ShapeMismatch {
            expected: format!("grad_out {expected}"),
            got: format!("{}", grad_out.shape()),
        });
    }
    let adj = layer.adjoint_spec();
    Ok(ConvGrads {
        input: correlate(grad_out, &layer.weights, &adj, xs.h, xs.w),
        // out = scatter(x, W) is linear in W with the same pairing as the
        // adjoint conv's weight gradient, inputs swapped.
        weights: weight_grad(grad_out, x, &adj),
        bias: channel_sums(grad_out),
    })
}
