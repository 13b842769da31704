//! Toy end-to-end segmentation: data, loss, optimizer, network, metrics and
//! the training loop that ties them together.

pub mod data;
pub mod loss;
pub mod metrics;
pub mod net;
pub mod optim;

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::Rng;

pub use data::{gen_thin_structures, LabelMap, SegSample, ThinStructureConfig, IGNORE};
pub use loss::{argmax_labels, softmax_ce_loss, Reduction};
pub use metrics::{miou, Confusion, IouReport};
pub use net::{DecoderKind, ToyNet, ToyNetConfig};
pub use optim::{poly_lr, sgd_step, SgdConfig, SgdState};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Batch loss before each update.
    pub loss: Vec<f64>,
    /// Learning rate used for each update.
    pub lr: Vec<f64>,
}

/// Loss and parameter gradients for one batch.
pub fn loss_and_grads(net: &ToyNet, batch: &[&SegSample], reduction: Reduction) -> Result<(f64, Vec<net::ParamGrads>)> {
    let x = data::stack_images(batch)?;
    let targets = batch
        .iter()
        .map(|s| net.target_labels(&s.labels))
        .collect::<Result<Vec<_>>>()?;
    let cache = net.forward(&x)?;
    let (loss, grad) = softmax_ce_loss(cache.output(), &targets, reduction)?;
    let grads = net.backward(&cache, &grad)?;
    Ok((loss, grads))
}

/// Minibatch SGD with poly decay for `cfg.max_iter` iterations.
///
/// Samples are visited in a fresh seeded permutation every epoch. Training is
/// deterministic for a fixed `cfg.seed`. A non-finite loss aborts with
/// [`Error::Diverged`].
pub fn train(net: &mut ToyNet, data: &[SegSample], cfg: &SgdConfig, reduction: Reduction) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    cfg.validate()?;
    let mut rng = Rng::new(cfg.seed).fork(0x5eed_da7a);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();
    let mut state = SgdState::new();
    let mut report = TrainReport::default();
    for iter in 0..cfg.max_iter {
        let mut batch = Vec::with_capacity(cfg.batch);
        while batch.len() < cfg.batch {
            if cursor == order.len() {
                shuffle(&mut order, &mut rng);
                cursor = 0;
            }
            batch.push(&data[order[cursor]]);
            cursor += 1;
        }
        let (loss, grads) = loss_and_grads(net, &batch, reduction)?;
        let lr = poly_lr(iter, cfg)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { iter, lr, loss });
        }
        let grad_slices: Vec<&[f64]> = grads.iter().flat_map(|g| [g.weights.data(), g.bias.as_slice()]).collect();
        sgd_step(&mut net.params_mut(), &grad_slices, &mut state, cfg, iter)?;
        report.loss.push(loss);
        report.lr.push(lr);
    }
    Ok(report)
}

fn shuffle(items: &mut [usize], rng: &mut Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.below(i + 1);
        items.swap(i, j);
    }
}

/// Confusion counts of the network's full-resolution predictions.
pub fn evaluate(net: &ToyNet, data: &[SegSample]) -> Result<Confusion> {
    let mut confusion = Confusion::new(net.config().classes);
    for sample in data {
        let pred = net.predict(&sample.image)?;
        confusion.add(&pred[0], &sample.labels)?;
    }
    Ok(confusion)
}
