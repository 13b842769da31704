//! SGD with momentum, L2 weight decay and the "poly" learning-rate decay
//! `base_lr * (1 - iter / max_iter)^power`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub base_lr: f64,
    pub power: f64,
    pub max_iter: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            base_lr: 2.5e-4,
            power: 0.9,
            max_iter: 1000,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch: 1,
            seed: 0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        // lr = 0 is allowed: it freezes the parameters
        if !self.base_lr.is_finite() || self.base_lr < 0.0 {
            return Err(Error::InvalidConfig(format!("base_lr must be finite and >= 0, got {}", self.base_lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if self.power.is_nan() || self.power <= 0.0 {
            return Err(Error::InvalidConfig(format!("power must be > 0, got {}", self.power)));
        }
        if self.batch == 0 {
            return Err(Error::InvalidConfig("batch must be >= 1".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::InvalidConfig("weight_decay must be >= 0".into()));
        }
        Ok(())
    }
}

pub fn poly_lr(iter: usize, cfg: &SgdConfig) -> Result<f64> {
    if iter > cfg.max_iter {
        return Err(Error::IterOutOfRange { iter, max_iter: cfg.max_iter });
    }
    if cfg.max_iter == 0 {
        return Ok(cfg.base_lr);
    }
    let progress = iter as f64 / cfg.max_iter as f64;
    Ok(cfg.base_lr * libm::pow(1.0 - progress, cfg.power))
}

/// Momentum buffers, one per parameter group.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SgdState {
    velocity: Vec<Vec<f64>>,
}

impl SgdState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }
}

/// One update at iteration `iter`:
/// `v <- momentum * v - lr * (g + wd * p)`, `p <- p + v`.
pub fn sgd_step(
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    state: &mut SgdState,
    cfg: &SgdConfig,
    iter: usize,
) -> Result<f64> {
    if params.len() != grads.len() || params.iter().zip(grads).any(|(p, g)| p.len() != g.len()) {
        return Err(Error::ShapeMismatch {
            expected: "one gradient per parameter".into(),
            got: format!("{} parameter groups, {} gradient groups", params.len(), grads.len()),
        });
    }
    if state.velocity.is_empty() {
        state.velocity = params.iter().map(|p| alloc::vec![0.0; p.len()]).collect();
    }
    if state.velocity.len() != params.len() || state.velocity.iter().zip(params.iter()).any(|(v, p)| v.len() != p.len()) {
        return Err(Error::ShapeMismatch {
            expected: "velocity matching parameters".into(),
            got: format!("{} velocity groups", state.velocity.len()),
        });
    }
    let lr = poly_lr(iter, cfg)?;
    for ((p, g), v) in params.iter_mut().zip(grads).zip(state.velocity.iter_mut()) {
        for ((pi, gi), vi) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
            *vi = cfg.momentum * *vi - lr * (gi + cfg.weight_decay * *pi);
            *pi += *vi;
        }
    }
    Ok(lr)
}
