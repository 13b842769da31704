#![allow(dead_code)]

use duc_hdc_core::conv::{ConvLayer, ConvSpec};
use duc_hdc_core::tensor::he_init;
use duc_hdc_core::{Rng, Shape, Tensor};

pub const FD_STEP: f64 = 1e-6;
/// Gradient components smaller than this are compared on an absolute scale.
pub const FD_FLOOR: f64 = 1e-4;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

/// Central difference of `f` at `x[i]` with step [`FD_STEP`].
pub fn central_diff(x: &mut [f64], i: usize, f: &mut dyn FnMut(&[f64]) -> f64) -> f64 {
    central_diff_step(x, i, FD_STEP, f)
}

pub fn central_diff_step(x: &mut [f64], i: usize, step: f64, f: &mut dyn FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + step;
    let plus = f(x);
    x[i] = orig - step;
    let minus = f(x);
    x[i] = orig;
    (plus - minus) / (2.0 * step)
}

pub fn random(shape: (usize, usize, usize, usize), rng: &mut Rng) -> Tensor {
    he_init(Shape::new(shape.0, shape.1, shape.2, shape.3).unwrap(), 2, rng).unwrap()
}

pub fn random_layer(spec: ConvSpec, rng: &mut Rng) -> ConvLayer {
    let mut layer = ConvLayer::he(spec, rng);
    for b in &mut layer.bias {
        *b = rng.uniform_range(-0.5, 0.5);
    }
    layer
}

/// Reference dilated cross-correlation: materialise the zero-padded input,
/// then loop over every output element and every tap.
pub fn naive_conv(x: &Tensor, w: &Tensor, bias: &[f64], r: usize, stride: usize, pad: usize) -> Tensor {
    let xs = x.shape();
    let ws = w.shape();
    let (ph, pw) = (xs.h + 2 * pad, xs.w + 2 * pad);
    let mut padded = vec![0.0; xs.n * xs.c * ph * pw];
    for n in 0..xs.n {
        for c in 0..xs.c {
            for y in 0..xs.h {
                for xx in 0..xs.w {
                    padded[((n * xs.c + c) * ph + y + pad) * pw + xx + pad] = x.at(n, c, y, xx);
                }
            }
        }
    }
    let kd = ws.h + (ws.h - 1) * (r - 1);
    let oh = (ph - kd) / stride + 1;
    let ow = (pw - kd) / stride + 1;
    let mut out = Tensor::zeros(Shape::new(xs.n, ws.n, oh, ow).unwrap());
    for n in 0..xs.n {
        for co in 0..ws.n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for ci in 0..ws.c {
                        for ky in 0..ws.h {
                            for kx in 0..ws.w {
                                let py = oy * stride + ky * r;
                                let px = ox * stride + kx * r;
                                acc += w.at(co, ci, ky, kx) * padded[((n * xs.c + ci) * ph + py) * pw + px];
                            }
                        }
                    }
                    *out.at_mut(n, co, oy, ox) = acc + bias[co];
                }
            }
        }
    }
    out
}
