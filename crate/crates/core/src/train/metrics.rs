use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::train::data::{LabelMap, IGNORE};

/// Confusion counts accumulated over any number of prediction/label pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Confusion {
    classes: usize,
    /// `matrix[label * classes + pred]`
    matrix: Vec<u64>,
}

impl Confusion {
    pub fn new(classes: usize) -> Self {
        Confusion { classes, matrix: vec![0; classes * classes] }
    }

    pub fn add(&mut self, preds: &LabelMap, labels: &LabelMap) -> Result<()> {
        if preds.height() != labels.height() || preds.width() != labels.width() {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", labels.height(), labels.width()),
                got: format!("{}x{}", preds.height(), preds.width()),
            });
        }
        labels.check_classes(self.classes)?;
        preds.check_classes(self.classes)?;
        for (&p, &l) in preds.as_slice().iter().zip(labels.as_slice()) {
            if l == IGNORE || p == IGNORE {
                continue;
            }
            self.matrix[l as usize * self.classes + p as usize] += 1;
        }
        Ok(())
    }

    pub fn count(&self, label: usize, pred: usize) -> u64 {
        self.matrix[label * self.classes + pred]
    }

    /// IoU per class; `None` when the class appears in neither predictions
    /// nor labels.
    pub fn iou(&self) -> Vec<Option<f64>> {
        (0..self.classes)
            .map(|c| {
                let tp = self.count(c, c);
                let fn_: u64 = (0..self.classes).map(|p| self.count(c, p)).sum::<u64>() - tp;
                let fp: u64 = (0..self.classes).map(|l| self.count(l, c)).sum::<u64>() - tp;
                let denom = tp + fp + fn_;
                (denom > 0).then(|| tp as f64 / denom as f64)
            })
            .collect()
    }

    pub fn report(&self) -> IouReport {
        let per_class = self.iou();
        let present: Vec<f64> = per_class.iter().flatten().copied().collect();
        let mean = if present.is_empty() { 0.0 } else { present.iter().sum::<f64>() / present.len() as f64 };
        IouReport { per_class, mean }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IouReport {
    pub per_class: Vec<Option<f64>>,
    pub mean: f64,
}

pub fn miou(preds: &LabelMap, labels: &LabelMap, classes: usize) -> Result<IouReport> {
    let mut c = Confusion::new(classes);
    c.add(preds, labels)?;
    Ok(c.report())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction() {
        let l = LabelMap::new(2, 2, vec![0, 1, 1, 2]).unwrap();
        let r = miou(&l, &l, 3).unwrap();
        assert_eq!(r.mean, 1.0);
    }

    #[test]
    fn disjoint_masks() {
        let pred = LabelMap::new(1, 2, vec![1, 0]).unwrap();
        let label = LabelMap::new(1, 2, vec![0, 1]).unwrap();
        let r = miou(&pred, &label, 2).unwrap();
        assert_eq!(r.per_class, vec![Some(0.0), Some(0.0)]);
    }

    #[test]
    fn hand_tallied_four_by_four() {
        // 16 pixels; labels: 6 ones; pred misses one 1 and adds one false 1
        let label = LabelMap::new(4, 4, vec![
            0, 0, 0, 0,
            0, 1, 1, 0,
            0, 1, 1, 0,
            0, 1, 1, 0,
        ]).unwrap();
        let pred = LabelMap::new(4, 4, vec![
            1, 0, 0, 0,
            0, 1, 1, 0,
            0, 1, 0, 0,
            0, 1, 1, 0,
        ]).unwrap();
        // class 1: TP 5, FP 1, FN 1 -> 5/7; class 0: TP 9, FP 1, FN 1 -> 9/11
        let r = miou(&pred, &label, 2).unwrap();
        assert_eq!(r.per_class, vec![Some(9.0 / 11.0), Some(5.0 / 7.0)]);
        assert_eq!(r.mean, (9.0 / 11.0 + 5.0 / 7.0) / 2.0);
    }

    #[test]
    fn absent_class_excluded_and_ignore_skipped() {
        let label = LabelMap::new(1, 3, vec![0, IGNORE, 0]).unwrap();
        let pred = LabelMap::new(1, 3, vec![0, 2, 0]).unwrap();
        let r = miou(&pred, &label, 3).unwrap();
        assert_eq!(r.per_class, vec![Some(1.0), None, None]);
        assert_eq!(r.mean, 1.0);
    }

    #[test]
    fn shape_mismatch() {
        let a = LabelMap::filled(2, 2, 0);
        let b = LabelMap::filled(2, 3, 0);
        assert!(miou(&a, &b, 2).is_err());
    }
}
