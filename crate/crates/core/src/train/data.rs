//! Synthetic thin-structure segmentation data.
//!
//! Each image has three classes: background (0), thin lines one or two pixels
//! wide (1), and large rectangular blobs (2). Pixel intensity is a
//! class-dependent base value plus Gaussian noise, so the difficulty lies in
//! recovering sub-stride positions rather than in telling classes apart.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Shape, Tensor};

/// Label value excluded from loss and evaluation.
pub const IGNORE: u8 = 255;

pub const BACKGROUND: u8 = 0;
pub const THIN: u8 = 1;
pub const BLOB: u8 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelMap {
    h: usize,
    w: usize,
    labels: Vec<u8>,
}

impl LabelMap {
    pub fn new(h: usize, w: usize, labels: Vec<u8>) -> Result<Self> {
        if h == 0 || w == 0 || labels.len() != h * w {
            return Err(Error::ShapeMismatch {
                expected: format!("{h}x{w} labels"),
                got: format!("{}", labels.len()),
            });
        }
        Ok(LabelMap { h, w, labels })
    }

    pub fn filled(h: usize, w: usize, value: u8) -> Self {
        LabelMap { h, w, labels: vec![value; h * w] }
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.labels[y * self.w + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: u8) {
        self.labels[y * self.w + x] = v;
    }

    /// Error if any label is neither `< classes` nor [`IGNORE`].
    pub fn check_classes(&self, classes: usize) -> Result<()> {
        match self.labels.iter().find(|&&l| l != IGNORE && l as usize >= classes) {
            Some(&label) => Err(Error::LabelOutOfRange { label, classes }),
            None => Ok(()),
        }
    }

    /// One label per `cell x cell` block by majority vote over non-ignored
    /// pixels; ties go to the smaller class, all-ignored blocks stay ignored.
    pub fn downsample_majority(&self, cell: usize, classes: usize) -> Result<LabelMap> {
        if cell == 0 || !self.h.is_multiple_of(cell) || !self.w.is_multiple_of(cell) {
            return Err(Error::InvalidConfig(format!("{}x{} not divisible by cell {cell}", self.h, self.w)));
        }
        self.check_classes(classes)?;
        let (h, w) = (self.h / cell, self.w / cell);
        let mut out = LabelMap::filled(h, w, IGNORE);
        let mut votes = vec![0usize; classes];
        for y in 0..h {
            for x in 0..w {
                votes.iter_mut().for_each(|v| *v = 0);
                for dy in 0..cell {
                    for dx in 0..cell {
                        let l = self.get(y * cell + dy, x * cell + dx);
                        if l != IGNORE {
                            votes[l as usize] += 1;
                        }
                    }
                }
                let (best, &count) = votes
                    .iter()
                    .enumerate()
                    .fold((0, &0), |acc, (i, c)| if *c > *acc.1 { (i, c) } else { acc });
                if count > 0 {
                    out.set(y, x, best as u8);
                }
            }
        }
        Ok(out)
    }

    /// Nearest-neighbour enlargement by an integer factor.
    pub fn upsample_nearest(&self, factor: usize) -> LabelMap {
        let (h, w) = (self.h * factor, self.w * factor);
        let labels = (0..h * w).map(|i| self.get(i / w / factor, i % w / factor)).collect();
        LabelMap { h, w, labels }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegSample {
    pub image: Tensor,
    pub labels: LabelMap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThinStructureConfig {
    pub height: usize,
    pub width: usize,
    /// Line width in pixels (1 or 2).
    pub thickness: usize,
    /// Target fraction of pixels labelled thin.
    pub thin_fraction: f64,
    /// Target fraction of pixels labelled blob before lines are drawn.
    pub blob_fraction: f64,
    pub noise_std: f64,
}

impl Default for ThinStructureConfig {
    fn default() -> Self {
        ThinStructureConfig {
            height: 32,
            width: 32,
            thickness: 1,
            thin_fraction: 0.08,
            blob_fraction: 0.25,
            noise_std: 0.1,
        }
    }
}

/// Base intensity per class (background, thin, blob).
pub const CLASS_INTENSITY: [f64; 3] = [0.0, 1.0, -1.0];

impl ThinStructureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height < 4 || self.width < 4 {
            return Err(Error::InvalidConfig("images must be at least 4x4".into()));
        }
        if self.thickness == 0 || self.thickness > 2 {
            return Err(Error::InvalidConfig("thickness must be 1 or 2".into()));
        }
        let ok = |f: f64| (0.0..1.0).contains(&f);
        if !ok(self.thin_fraction) || !ok(self.blob_fraction) || self.thin_fraction + self.blob_fraction >= 1.0 {
            return Err(Error::InvalidConfig("class fractions must lie in [0, 1) and sum below 1".into()));
        }
        if self.noise_std < 0.0 {
            return Err(Error::InvalidConfig("noise_std must be nonnegative".into()));
        }
        Ok(())
    }
}

fn fraction_of(labels: &LabelMap, class: u8) -> f64 {
    labels.as_slice().iter().filter(|&&l| l == class).count() as f64 / labels.as_slice().len() as f64
}

/// `n` deterministic samples from the thin-structure distribution.
pub fn gen_thin_structures(n: usize, cfg: &ThinStructureConfig, rng: &mut Rng) -> Result<Vec<SegSample>> {
    cfg.validate()?;
    let (h, w) = (cfg.height, cfg.width);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut labels = LabelMap::filled(h, w, BACKGROUND);
        while fraction_of(&labels, BLOB) < cfg.blob_fraction {
            let bh = h / 6 + rng.below(h / 4 + 1);
            let bw = w / 6 + rng.below(w / 4 + 1);
            let y0 = rng.below(h - bh + 1);
            let x0 = rng.below(w - bw + 1);
            for y in y0..y0 + bh {
                for x in x0..x0 + bw {
                    labels.set(y, x, BLOB);
                }
            }
        }
        while fraction_of(&labels, THIN) < cfg.thin_fraction {
            let vertical = rng.below(2) == 1;
            let (along, across) = if vertical { (h, w) } else { (w, h) };
            let len = along / 2 + rng.below(along - along / 2 + 1);
            let start = rng.below(along - len + 1);
            let pos = rng.below(across - cfg.thickness + 1);
            for a in start..start + len {
                for t in 0..cfg.thickness {
                    let (y, x) = if vertical { (a, pos + t) } else { (pos + t, a) };
                    labels.set(y, x, THIN);
                }
            }
        }
        let shape = Shape { n: 1, c: 1, h, w };
        let data = labels
            .as_slice()
            .iter()
            .map(|&l| CLASS_INTENSITY[l as usize] + cfg.noise_std * rng.normal())
            .collect();
        out.push(SegSample { image: Tensor::from_vec(shape, data)?, labels });
    }
    Ok(out)
}

/// Fraction of non-ignored pixels carrying each class, over all samples.
pub fn class_frequencies(samples: &[SegSample], classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; classes];
    let mut total = 0usize;
    for s in samples {
        for &l in s.labels.as_slice() {
            if l != IGNORE && (l as usize) < classes {
                counts[l as usize] += 1;
                total += 1;
            }
        }
    }
    counts.iter().map(|&c| c as f64 / total.max(1) as f64).collect()
}

/// Stacks sample images along the batch axis.
pub fn stack_images(samples: &[&SegSample]) -> Result<Tensor> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidConfig("empty batch".into()))?
        .image
        .shape();
    let mut data = Vec::with_capacity(first.len() * samples.len());
    for s in samples {
        if s.image.shape() != first {
            return Err(Error::ShapeMismatch {
                expected: format!("{first}"),
                got: format!("{}", s.image.shape()),
            });
        }
        data.extend_from_slice(s.image.data());
    }
    Tensor::from_vec(Shape { n: samples.len(), ..first }, data)
}
