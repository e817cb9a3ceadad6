//! Baseline characteristics by arm.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::Result;
use crate::outcomes::{resolve_utility, ValueSet};
use crate::special::{normal_cdf, t_two_sided_p};
use crate::trial::{Arm, MergedDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SummaryKind {
    /// mean (SD)
    MeanSd,
    /// percent (SD of the 0/100 indicator)
    PercentSd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStat {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

impl SummaryStat {
    /// Mean and sample (n - 1) standard deviation.
    pub fn from_values(values: &[f64]) -> SummaryStat {
        let n = values.len();
        if n == 0 {
            return SummaryStat { n, mean: f64::NAN, sd: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            libm::sqrt(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64)
        } else {
            f64::NAN
        };
        SummaryStat { n, mean, sd }
    }

    pub fn variance(&self) -> f64 {
        self.sd * self.sd
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRow {
    pub variable: String,
    pub kind: SummaryKind,
    pub intervention: SummaryStat,
    pub control: SummaryStat,
    pub total: SummaryStat,
    /// `None` when either arm has fewer than two observations.
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineTable {
    pub patients_per_arm: [usize; 2],
    pub wards_per_arm: [usize; 2],
    pub rows: Vec<BaselineRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Unequal-variance (Welch) two-sample t-test.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Option<TestResult> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let sa = SummaryStat::from_values(a);
    let sb = SummaryStat::from_values(b);
    let va = sa.variance() / a.len() as f64;
    let vb = sb.variance() / b.len() as f64;
    let diff = sa.mean - sb.mean;
    let se = libm::sqrt(va + vb);
    if se == 0.0 {
        let p = if diff == 0.0 { 1.0 } else { 0.0 };
        let statistic = if diff == 0.0 { 0.0 } else { diff.signum() * f64::INFINITY };
        return Some(TestResult { statistic, df: f64::NAN, p_value: p });
    }
    let t = diff / se;
    let df = (va + vb) * (va + vb) / (va * va / (a.len() - 1) as f64 + vb * vb / (b.len() - 1) as f64);
    Some(TestResult { statistic: t, df, p_value: t_two_sided_p(t, df) })
}

/// Pooled two-proportion z-test on 0/1 data.
pub fn two_proportion_z_test(a: &[bool], b: &[bool]) -> Option<TestResult> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let xa = a.iter().filter(|&&v| v).count() as f64;
    let xb = b.iter().filter(|&&v| v).count() as f64;
    let (pa, pb) = (xa / na, xb / nb);
    let pooled = (xa + xb) / (na + nb);
    let se = libm::sqrt(pooled * (1.0 - pooled) * (1.0 / na + 1.0 / nb));
    let diff = pa - pb;
    if se == 0.0 {
        let p = if diff == 0.0 { 1.0 } else { 0.0 };
        return Some(TestResult { statistic: 0.0, df: f64::INFINITY, p_value: p });
    }
    let z = diff / se;
    Some(TestResult { statistic: z, df: f64::INFINITY, p_value: (2.0 * normal_cdf(-z.abs())).min(1.0) })
}

fn continuous_row(name: &str, by_arm: [Vec<f64>; 2]) -> BaselineRow {
    let total: Vec<f64> = by_arm[0].iter().chain(&by_arm[1]).copied().collect();
    BaselineRow {
        variable: name.to_string(),
        kind: SummaryKind::MeanSd,
        intervention: SummaryStat::from_values(&by_arm[1]),
        control: SummaryStat::from_values(&by_arm[0]),
        total: SummaryStat::from_values(&total),
        p_value: welch_t_test(&by_arm[1], &by_arm[0]).map(|t| t.p_value),
    }
}

fn binary_row(name: &str, by_arm: [Vec<bool>; 2]) -> BaselineRow {
    let pct = |v: &[bool]| -> Vec<f64> { v.iter().map(|&b| if b { 100.0 } else { 0.0 }).collect() };
    let total: Vec<bool> = by_arm[0].iter().chain(&by_arm[1]).copied().collect();
    BaselineRow {
        variable: name.to_string(),
        kind: SummaryKind::PercentSd,
        intervention: SummaryStat::from_values(&pct(&by_arm[1])),
        control: SummaryStat::from_values(&pct(&by_arm[0])),
        total: SummaryStat::from_values(&pct(&total)),
        p_value: two_proportion_z_test(&by_arm[1], &by_arm[0]).map(|t| t.p_value),
    }
}

/// Baseline table with ward-level variables carried by each patient, so
/// their SDs are over patients. Missing values are skipped per variable.
pub fn baseline_summary(merged: &MergedDataset, valueset: Option<&ValueSet>) -> Result<BaselineTable> {
    let mut age: [Vec<f64>; 2] = Default::default();
    let mut sex: [Vec<bool>; 2] = Default::default();
    let mut eq5d: [Vec<f64>; 2] = Default::default();
    let mut readm: [Vec<f64>; 2] = Default::default();
    let mut over75: [Vec<f64>; 2] = Default::default();
    let mut specialty: [Vec<bool>; 2] = Default::default();
    for (i, p) in merged.patients().iter().enumerate() {
        let a = p.arm.index();
        let w = merged.ward_of(i);
        age[a].push(p.age);
        sex[a].push(p.sex_male);
        if let Some(u) = resolve_utility(&p.eq5d[0], valueset)? {
            eq5d[a].push(u);
        }
        if let Some(r) = w.baseline_readmission_rate {
            readm[a].push(r);
        }
        over75[a].push(w.pct_over_75);
        specialty[a].push(w.specialty_elderly);
    }
    Ok(BaselineTable {
        patients_per_arm: [merged.arm_count(Arm::Control), merged.arm_count(Arm::Intervention)],
        wards_per_arm: [merged.ward_count(Arm::Control), merged.ward_count(Arm::Intervention)],
        rows: alloc::vec![
            continuous_row("Age", age),
            binary_row("Sex, 1=Male, %", sex),
            continuous_row("EQ-5D at baseline", eq5d),
            continuous_row("Ward: baseline readmission rate, %", readm),
            continuous_row("Ward: patients over 75, %", over75),
            binary_row("Ward: specialty, 1=Elderly & intermediate care, %", specialty),
        ],
    })
}
