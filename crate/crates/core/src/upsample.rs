//! Decoders from a low-resolution feature map to a dense class map.
//!
//! * DUC: a convolution predicts `s^2 * L` channels at low resolution
//!   (`s = d / cell`), and a channel-to-space rearrangement turns them into
//!   `L` class maps `s` times larger on each axis.
//! * Bilinear: fixed, non-learnable interpolation (align-corners = false).
//! * Transposed convolution: lives in [`crate::conv`]; this module adds the
//!   exact mapping from non-overlapping transposed convs to DUC weights.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::conv::{conv2d_backward, conv2d_forward, ConvGrads, ConvLayer, ConvSpec, TransposedConv};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Geometry of a DUC decoder.
///
/// Channel layout before rearrangement is class-major:
/// `chan(l, dy, dx) = l * s^2 + dy * s + dx` with `s = d / cell`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DucSpec {
    pub d: usize,
    pub classes: usize,
    pub cell: usize,
}

impl DucSpec {
    pub fn new(d: usize, classes: usize, cell: usize) -> Result<Self> {
        if d == 0 || classes == 0 || cell == 0 {
            return Err(Error::InvalidConfig("d, classes and cell must be >= 1".into()));
        }
        if !d.is_multiple_of(cell) {
            return Err(Error::InvalidConfig(format!("d = {d} is not divisible by cell = {cell}")));
        }
        Ok(DucSpec { d, classes, cell })
    }

    /// Upscale factor of the rearrangement, `d / cell`.
    pub fn scale(&self) -> usize {
        self.d / self.cell
    }

    pub fn channels(&self) -> usize {
        self.scale() * self.scale() * self.classes
    }

    #[inline]
    pub fn channel(&self, class: usize, dy: usize, dx: usize) -> usize {
        let s = self.scale();
        class * s * s + dy * s + dx
    }
}

/// Channel-to-space rearrangement:
/// `out[n, l, y*s + dy, x*s + dx] = x[n, chan(l, dy, dx), y, x]`.
pub fn duc_rearrange(x: &Tensor, spec: &DucSpec) -> Result<Tensor> {
    let xs = x.shape();
    if xs.c != spec.channels() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} channels for {spec:?}", spec.channels()),
            got: format!("{}", xs.c),
        });
    }
    let s = spec.scale();
    let out_shape = Shape { n: xs.n, c: spec.classes, h: xs.h * s, w: xs.w * s };
    let mut out = Tensor::zeros(out_shape);
    for n in 0..xs.n {
        for l in 0..spec.classes {
            for dy in 0..s {
                for dx in 0..s {
                    let src = x.plane(n, spec.channel(l, dy, dx));
                    for y in 0..xs.h {
                        for xx in 0..xs.w {
                            *out.at_mut(n, l, y * s + dy, xx * s + dx) = src[y * xs.w + xx];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`duc_rearrange`]; also its adjoint, so it routes gradients.
pub fn duc_rearrange_inverse(y: &Tensor, spec: &DucSpec) -> Result<Tensor> {
    let ys = y.shape();
    let s = spec.scale();
    if ys.c != spec.classes || !ys.h.is_multiple_of(s) || !ys.w.is_multiple_of(s) {
        return Err(Error::ShapeMismatch {
            expected: format!("{} classes with sides divisible by {s}", spec.classes),
            got: format!("{ys}"),
        });
    }
    let (h, w) = (ys.h / s, ys.w / s);
    let mut out = Tensor::zeros(Shape { n: ys.n, c: spec.channels(), h, w });
    for n in 0..ys.n {
        for l in 0..spec.classes {
            for dy in 0..s {
                for dx in 0..s {
                    let c = spec.channel(l, dy, dx);
                    for yy in 0..h {
                        for xx in 0..w {
                            *out.at_mut(n, c, yy, xx) = y.at(n, l, yy * s + dy, xx * s + dx);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn check_duc_conv(layer: &ConvLayer, spec: &DucSpec) -> Result<()> {
    if layer.spec.c_out != spec.channels() {
        return Err(Error::ShapeMismatch {
            expected: format!("DUC conv with {} output channels", spec.channels()),
            got: format!("{}", layer.spec.c_out),
        });
    }
    Ok(())
}

/// Convolution to `s^2 * L` channels followed by [`duc_rearrange`].
pub fn duc_forward(features: &Tensor, layer: &ConvLayer, spec: &DucSpec) -> Result<Tensor> {
    check_duc_conv(layer, spec)?;
    duc_rearrange(&conv2d_forward(features, layer)?, spec)
}

pub fn duc_backward(features: &Tensor, layer: &ConvLayer, spec: &DucSpec, grad_out: &Tensor) -> Result<ConvGrads> {
    check_duc_conv(layer, spec)?;
    let g = duc_rearrange_inverse(grad_out, spec)?;
    conv2d_backward(features, layer, &g)
}

/// Builds 1x1 DUC conv weights that reproduce a non-overlapping transposed
/// convolution (kernel = stride = d, no padding, no dilation) exactly.
///
/// `W_duc[chan(l, dy, dx), c, 0, 0] = W_t[c, l, dy, dx]`, `b_duc[chan(l, ..)] = b_t[l]`.
pub fn duc_from_transposed(t: &TransposedConv) -> Result<(DucSpec, ConvLayer)> {
    let ts = t.spec;
    if ts.k != ts.stride || ts.pad != 0 || ts.r != 1 {
        return Err(Error::InvalidConfig(format!(
            "need kernel == stride, pad 0, r 1 (got k={} stride={} pad={} r={})",
            ts.k, ts.stride, ts.pad, ts.r
        )));
    }
    let d = ts.stride;
    let spec = DucSpec::new(d, ts.c_out, 1)?;
    let conv_spec = ConvSpec::new(1, 1, 1, 0, ts.c_in, spec.channels())?;
    let mut layer = ConvLayer::zeros(conv_spec);
    for l in 0..ts.c_out {
        for dy in 0..d {
            for dx in 0..d {
                let ch = spec.channel(l, dy, dx);
                layer.bias[ch] = t.bias[l];
                for c in 0..ts.c_in {
                    *layer.weights.at_mut(ch, c, 0, 0) = t.weights.at(c, l, dy, dx);
                }
            }
        }
    }
    Ok((spec, layer))
}

/// Source taps `(i0, i1, w0, w1)` for each output index under the
/// align-corners = false convention: `src = (dst + 0.5) / f - 0.5`, clamped at 0.
fn bilinear_taps(input: usize, factor: usize) -> Vec<(usize, usize, f64, f64)> {
    (0..input * factor)
        .map(|dst| {
            let src = ((dst as f64 + 0.5) / factor as f64 - 0.5).max(0.0);
            let i0 = (libm::floor(src) as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            let frac = src - i0 as f64;
            (i0, i1, 1.0 - frac, frac)
        })
        .collect()
}

pub fn bilinear_upsample(x: &Tensor, factor: usize) -> Result<Tensor> {
    if factor == 0 {
        return Err(Error::InvalidConfig("upsampling factor must be >= 1".into()));
    }
    let xs = x.shape();
    let ty = bilinear_taps(xs.h, factor);
    let tx = bilinear_taps(xs.w, factor);
    let mut out = Tensor::zeros(Shape { n: xs.n, c: xs.c, h: xs.h * factor, w: xs.w * factor });
    for n in 0..xs.n {
        for c in 0..xs.c {
            let p = x.plane(n, c);
            for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
                for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                    let v = wy0 * (wx0 * p[y0 * xs.w + x0] + wx1 * p[y0 * xs.w + x1])
                        + wy1 * (wx0 * p[y1 * xs.w + x0] + wx1 * p[y1 * xs.w + x1]);
                    *out.at_mut(n, c, oy, ox) = v;
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`bilinear_upsample`]: gradient with respect to its input.
pub fn bilinear_backward(grad_out: &Tensor, factor: usize) -> Result<Tensor> {
    let gs = grad_out.shape();
    if factor == 0 || !gs.h.is_multiple_of(factor) || !gs.w.is_multiple_of(factor) {
        return Err(Error::ShapeMismatch {
            expected: format!("sides divisible by factor {factor}"),
            got: format!("{gs}"),
        });
    }
    let (h, w) = (gs.h / factor, gs.w / factor);
    let ty = bilinear_taps(h, factor);
    let tx = bilinear_taps(w, factor);
    let mut gx = Tensor::zeros(Shape { n: gs.n, c: gs.c, h, w });
    for n in 0..gs.n {
        for c in 0..gs.c {
            let mut acc = vec![0.0; h * w];
            for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
                for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                    let g = grad_out.at(n, c, oy, ox);
                    acc[y0 * w + x0] += g * wy0 * wx0;
                    acc[y0 * w + x1] += g * wy0 * wx1;
                    acc[y1 * w + x0] += g * wy1 * wx0;
                    acc[y1 * w + x1] += g * wy1 * wx1;
                }
            }
            for (y, row) in acc.chunks(w).enumerate() {
                for (xx, v) in row.iter().enumerate() {
                    *gx.at_mut(n, c, y, xx) = *v;
                }
            }
        }
    }
    Ok(gx)
}
