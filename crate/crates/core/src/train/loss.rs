use alloc::format;
use alloc::vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::train::data::{LabelMap, IGNORE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    /// Sum over all contributing pixels.
    #[default]
    Sum,
    /// Sum divided by the number of contributing pixels.
    Mean,
}

/// Pixelwise softmax cross-entropy over the channel axis.
///
/// `labels[i]` belongs to batch entry `i`. Ignored pixels add nothing to the
/// loss and get zero gradient. Returns the loss and its gradient with respect
/// to the logits (`softmax - onehot` per pixel, scaled for [`Reduction::Mean`]).
pub fn softmax_ce_loss(logits: &Tensor, labels: &[LabelMap], reduction: Reduction) -> Result<(f64, Tensor)> {
    let s = logits.shape();
    if labels.len() != s.n || labels.iter().any(|l| l.height() != s.h || l.width() != s.w) {
        return Err(Error::ShapeMismatch {
            expected: format!("{} label maps of {}x{}", s.n, s.h, s.w),
            got: format!("{} label maps", labels.len()),
        });
    }
    for l in labels {
        l.check_classes(s.c)?;
    }
    let mut grad = Tensor::zeros(s);
    let mut loss = 0.0;
    let mut counted = 0usize;
    let mut probs = vec![0.0; s.c];
    for (n, lm) in labels.iter().enumerate() {
        for y in 0..s.h {
            for x in 0..s.w {
                let label = lm.get(y, x);
                if label == IGNORE {
                    continue;
                }
                let max = (0..s.c).map(|c| logits.at(n, c, y, x)).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for (c, p) in probs.iter_mut().enumerate() {
                    *p = libm::exp(logits.at(n, c, y, x) - max);
                    z += *p;
                }
                let target = label as usize;
                loss += libm::log(z) - (logits.at(n, target, y, x) - max);
                for (c, p) in probs.iter().enumerate() {
                    let onehot = if c == target { 1.0 } else { 0.0 };
                    *grad.at_mut(n, c, y, x) = p / z - onehot;
                }
                counted += 1;
            }
        }
    }
    if reduction == Reduction::Mean && counted > 0 {
        let inv = 1.0 / counted as f64;
        loss *= inv;
        grad = grad.scale(inv);
    }
    Ok((loss, grad))
}

/// Per-pixel argmax over channels for batch entry `n`; ties pick the lower class.
pub fn argmax_labels(logits: &Tensor, n: usize) -> LabelMap {
    let s = logits.shape();
    let labels = (0..s.h * s.w)
        .map(|i| {
            let (y, x) = (i / s.w, i % s.w);
            let mut best = 0;
            for c in 1..s.c {
                if logits.at(n, c, y, x) > logits.at(n, best, y, x) {
                    best = c;
                }
            }
            best as u8
        })
        .collect();
    LabelMap::new(s.h, s.w, labels).expect("dims from tensor")
}
