//! JSON reports emitted by the command line. Field names are part of the
//! output contract; matching schemas ship in `schemas/`.

use serde::{Deserialize, Serialize};

use duc_hdc_core::hdc::{
    common_factor_check, coverage_report, footprint, max_distance, rf_increase, DilationSchedule, FootprintMap,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub rates: Vec<usize>,
    #[serde(rename = "K")]
    pub kernel: usize,
    #[serde(rename = "M_values")]
    pub m_values: Vec<usize>,
    pub m2: Option<usize>,
    pub m2_within_kernel: bool,
    pub base_undilated: bool,
    pub valid: bool,
    pub rf_increase: usize,
    pub gcd_flag: bool,
}

impl CheckReport {
    pub fn new(schedule: &DilationSchedule) -> Self {
        let md = max_distance(schedule);
        CheckReport {
            rates: schedule.rates().to_vec(),
            kernel: schedule.kernel(),
            m2: md.m2(),
            m_values: md.values,
            m2_within_kernel: md.within_kernel,
            base_undilated: md.base_undilated,
            valid: md.valid,
            rf_increase: schedule.rf_increase(),
            gcd_flag: common_factor_check(schedule.rates()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootprintReport {
    pub rates: Vec<usize>,
    #[serde(rename = "K")]
    pub kernel: usize,
    #[serde(rename = "M_values")]
    pub m_values: Vec<usize>,
    pub valid: bool,
    pub rf_increase: usize,
    pub side: usize,
    pub holes: usize,
    pub coverage_fraction: f64,
    pub gridding_fraction: f64,
}

impl FootprintReport {
    pub fn new(schedule: &DilationSchedule, fp: &FootprintMap) -> Self {
        let md = max_distance(schedule);
        let cov = coverage_report(fp);
        FootprintReport {
            rates: schedule.rates().to_vec(),
            kernel: schedule.kernel(),
            m_values: md.values,
            valid: md.valid,
            rf_increase: schedule.rf_increase(),
            side: fp.side(),
            holes: cov.holes,
            coverage_fraction: cov.coverage_fraction,
            gridding_fraction: cov.gridding_fraction,
        }
    }

    pub fn for_schedule(schedule: &DilationSchedule) -> Self {
        Self::new(schedule, &footprint(schedule))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchEntry {
    pub rates: Vec<usize>,
    #[serde(rename = "M_values")]
    pub m_values: Vec<usize>,
    pub rf_increase: usize,
}

impl SearchEntry {
    pub fn new(schedule: &DilationSchedule) -> Self {
        SearchEntry {
            rates: schedule.rates().to_vec(),
            m_values: max_distance(schedule).values,
            rf_increase: schedule.rf_increase(),
        }
    }
}

/// One row of the receptive-field table for the ResNet-101 dilation variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfRow {
    pub name: String,
    /// `(count, rate)` groups of 3x3 convolutions.
    pub blocks: Vec<(usize, usize)>,
    pub rf_increase: usize,
    pub published: usize,
    pub gap: i64,
}

/// Name, `(count, rate)` groups and the published figure.
pub type Variant = (&'static str, Vec<(usize, usize)>, usize);

/// The four dilation variants of res4b (23 blocks) and res5b (3 blocks).
pub fn resnet_variants() -> Vec<Variant> {
    vec![
        ("no-dilation", vec![(26, 1)], 54),
        ("dilation-conv", repeat(&[2, 1], 13), 88),
        ("dilation-rf", [repeat(&[1, 2, 3], 7), vec![(1, 2), (1, 2), (1, 3), (1, 4), (1, 5)]].concat(), 116),
        (
            "dilation-bigger",
            [repeat(&[1, 2, 5, 9], 5), vec![(1, 1), (1, 2), (1, 5), (1, 5), (1, 9), (1, 17)]].concat(),
            256,
        ),
    ]
}

fn repeat(group: &[usize], times: usize) -> Vec<(usize, usize)> {
    group.iter().map(|&r| (times, r)).collect()
}

pub fn rf_table(kernel: usize) -> Vec<RfRow> {
    resnet_variants()
        .into_iter()
        .map(|(name, blocks, published)| {
            let rf = rf_increase(&blocks, kernel);
            RfRow {
                name: name.to_string(),
                blocks,
                rf_increase: rf,
                published,
                gap: published as i64 - rf as i64,
            }
        })
        .collect()
}
