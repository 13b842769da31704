//! Dilation-schedule analysis for stacks of dilated convolutions.
//!
//! A schedule is a list of rates `[r1, .., rn]` (bottom layer first) sharing a
//! `K x K` kernel. The max-distance recurrence
//!
//! ```text
//! M_n = r_n
//! M_i = max(M_{i+1} - 2 r_i, M_{i+1} - 2 (M_{i+1} - r_i), r_i)
//! ```
//!
//! estimates the largest gap between sampled positions left by layers
//! `i..n`. The recurrence stops at `M_2` and never looks at `r1`; the bottom
//! layer is expected to be a plain convolution that fills every gap up to
//! `K`. A schedule is therefore reported valid when `M_2 <= K` **and**
//! `r1 == 1`. The footprint oracle is the ground truth: it counts, exactly in
//! integers, how many kernel-tap paths connect each bottom pixel to the top
//! output pixel.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DilationSchedule {
    rates: Vec<usize>,
    kernel: usize,
}

impl DilationSchedule {
    pub fn new(rates: Vec<usize>, kernel: usize) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::EmptySchedule);
        }
        if rates.contains(&0) {
            return Err(Error::InvalidConfig("dilation rates must be >= 1".into()));
        }
        if kernel == 0 || kernel.is_multiple_of(2) {
            return Err(Error::InvalidConfig("kernel size must be odd".into()));
        }
        Ok(DilationSchedule { rates, kernel })
    }

    pub fn rates(&self) -> &[usize] {
        &self.rates
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// Receptive-field growth along one axis: `sum (K - 1) * r_i`.
    pub fn rf_increase(&self) -> usize {
        self.rates.iter().map(|r| (self.kernel - 1) * r).sum()
    }

    /// Side of the full theoretical receptive field, `1 + rf_increase`.
    pub fn rf_side(&self) -> usize {
        1 + self.rf_increase()
    }
}

/// Result of the max-distance recurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaxDistance {
    /// `[M_2, .., M_n]`; empty for a single layer.
    pub values: Vec<usize>,
    /// `M_2 <= K` (vacuously true for a single layer).
    pub within_kernel: bool,
    /// The bottom layer is undilated.
    pub base_undilated: bool,
    /// Both conditions hold; such schedules leave no holes.
    pub valid: bool,
}

impl MaxDistance {
    pub fn m2(&self) -> Option<usize> {
        self.values.first().copied()
    }
}

pub fn max_distance(schedule: &DilationSchedule) -> MaxDistance {
    let rates = schedule.rates();
    let n = rates.len();
    let mut values = vec![0usize; n.saturating_sub(1)];
    if n >= 2 {
        let mut m = rates[n - 1] as i64;
        values[n - 2] = m as usize;
        for i in (1..n - 1).rev() {
            let r = rates[i] as i64;
            m = (m - 2 * r).max(m - 2 * (m - r)).max(r);
            values[i - 1] = m as usize;
        }
    }
    let within_kernel = values.first().is_none_or(|&m2| m2 <= schedule.kernel());
    let base_undilated = rates[0] == 1;
    MaxDistance {
        values,
        within_kernel,
        base_undilated,
        valid: within_kernel && base_undilated,
    }
}

/// Exact contribution counts of every bottom pixel to the top centre pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FootprintMap {
    side: usize,
    counts: Vec<u64>,
}

impl FootprintMap {
    pub fn side(&self) -> usize {
        self.side
    }

    /// Row-major counts; `(side / 2, side / 2)` is the centre.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn get(&self, row: usize, col: usize) -> u64 {
        self.counts[row * self.side + col]
    }

    pub fn center(&self) -> u64 {
        self.get(self.side / 2, self.side / 2)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn max_count(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    pub fn nonzero(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> {
        self.counts.chunks(self.side)
    }
}

/// Full 2-D convolution of all-ones `K x K` masks dilated by each rate.
pub fn footprint(schedule: &DilationSchedule) -> FootprintMap {
    let k = schedule.kernel();
    let mut side = 1;
    let mut counts = vec![1u64];
    for &r in schedule.rates() {
        let next_side = side + (k - 1) * r;
        let mut next = vec![0u64; next_side * next_side];
        for y in 0..side {
            for x in 0..side {
                let c = counts[y * side + x];
                if c == 0 {
                    continue;
                }
                for ky in 0..k {
                    let row = (y + ky * r) * next_side;
                    for kx in 0..k {
                        next[row + x + kx * r] += c;
                    }
                }
            }
        }
        side = next_side;
        counts = next;
    }
    FootprintMap { side, counts }
}

/// One axis of the footprint. The 2-D map is its outer product with itself.
pub fn footprint_1d(schedule: &DilationSchedule) -> Vec<u64> {
    let k = schedule.kernel();
    let mut counts = vec![1u64];
    for &r in schedule.rates() {
        let mut next = vec![0u64; counts.len() + (k - 1) * r];
        for (i, &c) in counts.iter().enumerate() {
            for t in 0..k {
                next[i + t * r] += c;
            }
        }
        counts = next;
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageReport {
    pub holes: usize,
    pub area: usize,
    pub coverage_fraction: f64,
    pub gridding_fraction: f64,
}

/// Holes are zero-count cells inside the full theoretical receptive field.
pub fn coverage_report(fp: &FootprintMap) -> CoverageReport {
    let area = fp.side * fp.side;
    let holes = area - fp.nonzero();
    let gridding_fraction = holes as f64 / area as f64;
    CoverageReport {
        holes,
        area,
        coverage_fraction: 1.0 - gridding_fraction,
        gridding_fraction,
    }
}

/// Receptive-field growth of `(count, rate)` groups of `K x K` convolutions.
pub fn rf_increase(blocks: &[(usize, usize)], kernel: usize) -> usize {
    blocks.iter().map(|&(count, r)| count * (kernel - 1) * r).sum()
}

/// What to do with layers left over after the last full sawtooth group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SawtoothTail {
    /// Continue the pattern and cut it off (`1,2,3,...,1,2`).
    Truncate,
    /// Leave the leftover layers at a fixed rate.
    Keep(usize),
}

/// Tiles `base_rates` over `total_layers` layers.
pub fn sawtooth_schedule(
    base_rates: &[usize],
    total_layers: usize,
    kernel: usize,
    tail: SawtoothTail,
) -> Result<DilationSchedule> {
    if base_rates.is_empty() || total_layers == 0 {
        return Err(Error::EmptySchedule);
    }
    let full = total_layers / base_rates.len() * base_rates.len();
    let rates = (0..total_layers)
        .map(|i| match tail {
            SawtoothTail::Keep(r) if i >= full => r,
            _ => base_rates[i % base_rates.len()],
        })
        .collect();
    DilationSchedule::new(rates, kernel)
}

pub fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// True when all rates share a factor > 1 (e.g. `[2, 4, 8]`).
pub fn common_factor_check(rates: &[usize]) -> bool {
    rates.iter().copied().fold(0, gcd) > 1
}

/// Enumerates `n`-layer schedules with rates in `1..=rf_target` that pass the
/// recurrence, leave no holes, and grow the receptive field by at least
/// `rf_target`. Sorted by receptive field (largest first), then by rates.
pub fn schedule_search(n: usize, kernel: usize, rf_target: usize) -> Result<Vec<DilationSchedule>> {
    if n < 2 {
        return Err(Error::InvalidConfig("schedule search needs at least 2 layers".into()));
    }
    // validates the kernel
    DilationSchedule::new(vec![1], kernel)?;
    let max_rate = rf_target.max(1);
    let mut found = Vec::new();
    let mut rates = vec![1usize; n];
    loop {
        let schedule = DilationSchedule { rates: rates.clone(), kernel };
        if schedule.rf_increase() >= rf_target
            && max_distance(&schedule).valid
            && footprint_1d(&schedule).iter().all(|&c| c > 0)
        {
            found.push(schedule);
        }
        // odometer over layers 2..n; r1 stays 1 since validity requires it
        let mut i = n - 1;
        loop {
            if rates[i] < max_rate {
                rates[i] += 1;
                break;
            }
            rates[i] = 1;
            if i == 1 {
                found.sort_by(|a, b| b.rf_increase().cmp(&a.rf_increase()).then_with(|| a.rates.cmp(&b.rates)));
                return Ok(found);
            }
            i -= 1;
        }
    }
}

/// Outcome of checking the recurrence against the footprint oracle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepSummary {
    pub cases: usize,
    pub valid: usize,
    /// Valid by the recurrence but holes in the footprint. Must be zero.
    pub counterexamples: usize,
    /// Hole-free but rejected by the recurrence (the rule is not an iff).
    pub conservative_rejections: usize,
    /// Cases where `M_2 <= K` alone held but the footprint had holes.
    pub literal_counterexamples: usize,
}

/// Runs the recurrence and the footprint oracle over every schedule with
/// `n` in `layers` and rates in `1..=max_rate`, for each kernel.
pub fn soundness_sweep(layers: &[usize], max_rate: usize, kernels: &[usize]) -> Result<SweepSummary> {
    let mut s = SweepSummary::default();
    for &kernel in kernels {
        for &n in layers {
            let mut rates = vec![1usize; n];
            'outer: loop {
                let schedule = DilationSchedule::new(rates.clone(), kernel)?;
                let md = max_distance(&schedule);
                let holes = coverage_report(&footprint(&schedule)).holes > 0;
                s.cases += 1;
                if md.valid {
                    s.valid += 1;
                    if holes {
                        s.counterexamples += 1;
                    }
                } else if !holes {
                    s.conservative_rejections += 1;
                }
                if md.within_kernel && holes {
                    s.literal_counterexamples += 1;
                }
                for i in (0..n).rev() {
                    if rates[i] < max_rate {
                        rates[i] += 1;
                        continue 'outer;
                    }
                    rates[i] = 1;
                }
                break;
            }
        }
    }
    Ok(s)
}
