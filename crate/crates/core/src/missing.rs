//! Missing-data machinery: profiling, the resource threshold rule, baseline
//! within-ward mean imputation and chained-equation multiple imputation run
//! separately by arm.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{CeaError, Result};
use crate::exec::Executor;
use crate::linalg::collinear_columns;
use crate::outcomes::{hospitalisation_cost, resolve_utility, UnitCostTable, ValueSet};
use crate::rng::{self, StreamRng};
use crate::trial::{Arm, MergedDataset, CRF_RESOURCES, TIMEPOINT_DAYS};

pub const COL_SEX: &str = "sex_male";
pub const COL_AGE: &str = "age";
pub const COL_SPECIALTY: &str = "specialty_elderly";
pub const COL_READM_RATE: &str = "baseline_readm_rate_pct";
pub const COL_OVER75: &str = "pct_over_75";
pub const COL_UTILITY: [&str; 4] = ["eq5d_base", "eq5d_10", "eq5d_30", "eq5d_90"];
pub const COL_HOSPITALISATION: &str = "hospitalisation";

pub const DEFAULT_RESOURCE_THRESHOLD: f64 = 0.60;

// ---------------------------------------------------------------------------
// Profiling

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariableGroup {
    Baseline,
    QualityOfLife,
    Resource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableMissingness {
    pub name: String,
    pub label: String,
    pub group: VariableGroup,
    pub missing: usize,
    pub total: usize,
}

impl VariableMissingness {
    pub fn percent(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.missing as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PatternSummary {
    /// All follow-up utilities observed.
    pub complete: usize,
    /// Once missing, missing at every later follow-up.
    pub monotone: usize,
    /// Intermittent missingness.
    pub non_monotone: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissingnessReport {
    pub patients: usize,
    pub variables: Vec<VariableMissingness>,
    /// `[arm][timepoint] -> (missing, total)` for EQ-5D.
    pub eq5d_by_arm: [[(usize, usize); 4]; 2],
    pub patterns: PatternSummary,
    /// Per patient: which of `variables` are missing.
    case_missing: Vec<Vec<bool>>,
}

impl MissingnessReport {
    pub fn variable(&self, name: &str) -> Option<&VariableMissingness> {
        self.variables.iter().find(|v| v.name == name)
    }

    /// Percent of patients with at least one of `names` missing.
    pub fn incomplete_case_percent_over(&self, names: &[&str]) -> f64 {
        if self.patients == 0 {
            return 0.0;
        }
        let idx: Vec<usize> =
            self.variables.iter().enumerate().filter(|(_, v)| names.contains(&v.name.as_str())).map(|(i, _)| i).collect();
        let incomplete = self.case_missing.iter().filter(|row| idx.iter().any(|&i| row[i])).count();
        100.0 * incomplete as f64 / self.patients as f64
    }

    /// Incomplete-case percent over the analysis variables: everything except
    /// resources at or above the default missingness threshold.
    pub fn incomplete_case_percent(&self) -> f64 {
        let names: Vec<&str> = self
            .variables
            .iter()
            .filter(|v| v.group != VariableGroup::Resource || v.percent() < 100.0 * DEFAULT_RESOURCE_THRESHOLD)
            .map(|v| v.name.as_str())
            .collect();
        self.incomplete_case_percent_over(&names)
    }
}

pub fn resource_label(name: &str) -> &'static str {
    match name {
        COL_HOSPITALISATION => "Hospitalisation",
        "outpatient" => "Outpatient clinic",
        "daycase" => "Day case",
        "ae" => "A&E",
        "gp_surgery" => "GP at surgery",
        "gp_home" => "GP at home",
        "gp_phone" => "GP at telephone",
        "nurse_surgery" => "Nurse at surgery",
        "nurse_home" => "Nurse at home",
        "nurse_phone" => "Nurse at telephone",
        "therapist" => "Therapist",
        "homecare" => "Home care",
        "socialworker" => "Social worker",
        _ => "Other resource",
    }
}

/// Counts missing cells per variable, per arm and timepoint for EQ-5D, and
/// classifies follow-up patterns. Blank cells after death count as missing.
pub fn profile_missingness(merged: &MergedDataset) -> MissingnessReport {
    let n = merged.len();
    let mut names: Vec<(String, String, VariableGroup)> = vec![
        ("arm".into(), "Intervention".into(), VariableGroup::Baseline),
        (COL_AGE.into(), "Age".into(), VariableGroup::Baseline),
        (COL_SEX.into(), "Sex".into(), VariableGroup::Baseline),
        (COL_UTILITY[0].into(), "EQ-5D at baseline".into(), VariableGroup::Baseline),
        (COL_SPECIALTY.into(), "Ward specialty".into(), VariableGroup::Baseline),
        (COL_READM_RATE.into(), "Baseline readmission rate".into(), VariableGroup::Baseline),
        (COL_OVER75.into(), "Patients over 75 years old".into(), VariableGroup::Baseline),
    ];
    for t in 1..4 {
        names.push((
            COL_UTILITY[t].into(),
            format!("EQ-5D at {} days", TIMEPOINT_DAYS[t]),
            VariableGroup::QualityOfLife,
        ));
    }
    names.push((COL_HOSPITALISATION.into(), resource_label(COL_HOSPITALISATION).into(), VariableGroup::Resource));
    for r in CRF_RESOURCES {
        names.push((r.into(), resource_label(r).into(), VariableGroup::Resource));
    }

    let mut case_missing = Vec::with_capacity(n);
    let mut eq5d_by_arm = [[(0usize, 0usize); 4]; 2];
    let mut patterns = PatternSummary::default();
    for (i, p) in merged.patients().iter().enumerate() {
        let ward = merged.ward_of(i);
        let mut row = vec![false; names.len()];
        row[3] = p.eq5d[0].is_missing();
        row[5] = ward.baseline_readmission_rate.is_none();
        for t in 1..4 {
            row[6 + t] = p.eq5d[t].is_missing();
        }
        row[10] = p.readmissions.iter().any(|r| r.length_days.is_none());
        for (k, r) in CRF_RESOURCES.iter().enumerate() {
            row[11 + k] = p.resource_use.get(*r).copied().flatten().is_none();
        }
        for t in 0..4 {
            let cell = &mut eq5d_by_arm[p.arm.index()][t];
            cell.1 += 1;
            if p.eq5d[t].is_missing() {
                cell.0 += 1;
            }
        }
        let follow: [bool; 3] = [row[7], row[8], row[9]];
        if !follow.iter().any(|&m| m) {
            patterns.complete += 1;
        } else {
            let first = follow.iter().position(|&m| m).unwrap();
            if follow[first..].iter().all(|&m| m) {
                patterns.monotone += 1;
            } else {
                patterns.non_monotone += 1;
            }
        }
        case_missing.push(row);
    }
    let variables = names
        .into_iter()
        .enumerate()
        .map(|(j, (name, label, group))| VariableMissingness {
            name,
            label,
            group,
            missing: case_missing.iter().filter(|r| r[j]).count(),
            total: n,
        })
        .collect();
    MissingnessReport { patients: n, variables, eq5d_by_arm, patterns, case_missing }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ResourceClassification {
    /// Missingness strictly below the threshold; imputed and costed.
    pub imputable: Vec<String>,
    /// Reported in the complete-case comparison only.
    pub complete_case_only: Vec<String>,
}

/// Splits resource variables by the missingness threshold (a fraction).
/// `names` defaults to every resource variable in the report.
pub fn classify_resources(
    report: &MissingnessReport,
    names: Option<&[String]>,
    threshold: f64,
) -> Result<ResourceClassification> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(CeaError::Config(format!("resource threshold {threshold} outside [0, 1]")));
    }
    let selected: Vec<&VariableMissingness> = match names {
        None => report.variables.iter().filter(|v| v.group == VariableGroup::Resource).collect(),
        Some(list) => list
            .iter()
            .map(|n| {
                report
                    .variables
                    .iter()
                    .find(|v| &v.name == n && v.group == VariableGroup::Resource)
                    .ok_or_else(|| CeaError::Config(format!("unknown resource {n}")))
            })
            .collect::<Result<_>>()?,
    };
    let mut out = ResourceClassification::default();
    for v in selected {
        let fraction = if v.total == 0 { 0.0 } else { v.missing as f64 / v.total as f64 };
        if fraction < threshold {
            out.imputable.push(v.name.clone());
        } else {
            out.complete_case_only.push(v.name.clone());
        }
    }
    Ok(out)
}

/// `clamp(ceil(percent incomplete), 5, 50)`.
pub fn imputation_count_for_percent(percent_incomplete: f64) -> usize {
    (libm::ceil(percent_incomplete.max(0.0)) as usize).clamp(5, 50)
}

pub fn choose_imputation_count(report: &MissingnessReport) -> usize {
    imputation_count_for_percent(report.incomplete_case_percent())
}

// ---------------------------------------------------------------------------
// Analysis table

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnRole {
    Covariate,
    Utility,
    /// Continuous cost in currency units.
    Cost,
    /// Nonnegative integer counts.
    Count,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellStatus {
    Observed,
    Missing,
    /// Filled by within-ward mean imputation.
    BaselineImputed,
    /// Filled by chained-equation imputation.
    Imputed,
    /// Known by construction (utility after death is zero).
    Structural,
}

impl CellStatus {
    pub fn code(self) -> &'static str {
        match self {
            CellStatus::Observed => "observed",
            CellStatus::Missing => "missing",
            CellStatus::BaselineImputed => "baseline_imputed",
            CellStatus::Imputed => "imputed",
            CellStatus::Structural => "structural",
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        Some(match s {
            "observed" => CellStatus::Observed,
            "missing" => CellStatus::Missing,
            "baseline_imputed" => CellStatus::BaselineImputed,
            "imputed" => CellStatus::Imputed,
            "structural" => CellStatus::Structural,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub role: ColumnRole,
    pub values: Vec<Option<f64>>,
    pub status: Vec<CellStatus>,
}

impl Column {
    pub fn missing_count(&self) -> usize {
        self.status.iter().filter(|s| **s == CellStatus::Missing).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowMeta {
    pub patient_id: String,
    pub arm: Arm,
    pub ward: usize,
    pub death_day: Option<u32>,
}

/// Patient-by-variable numeric table used for imputation and estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisTable {
    pub ward_ids: Vec<String>,
    pub rows: Vec<RowMeta>,
    pub columns: Vec<Column>,
}

impl AnalysisTable {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| CeaError::Config(format!("analysis table has no column {name}")))
    }

    /// Values of a column that must be complete.
    pub fn complete_values(&self, name: &str) -> Result<Vec<f64>> {
        let col = self.column(name)?;
        col.values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| {
                    CeaError::InsufficientData(format!("{name} missing for patient {}", self.rows[i].patient_id))
                })
            })
            .collect()
    }

    pub fn is_complete(&self, names: &[String]) -> bool {
        names.iter().all(|n| self.column(n).map(|c| c.values.iter().all(Option::is_some)).unwrap_or(false))
    }

    pub fn mask(&self) -> CellMask {
        CellMask { columns: self.columns.iter().map(|c| (c.name.clone(), c.status.clone())).collect() }
    }
}

/// Observed/imputed flags for every cell, by column.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMask {
    pub columns: Vec<(String, Vec<CellStatus>)>,
}

impl CellMask {
    pub fn column(&self, name: &str) -> Option<&[CellStatus]> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, s)| s.as_slice())
    }
}

fn column(name: &str, role: ColumnRole, values: Vec<Option<f64>>) -> Column {
    let status = values.iter().map(|v| if v.is_some() { CellStatus::Observed } else { CellStatus::Missing }).collect();
    Column { name: name.to_string(), role, values, status }
}

/// Builds the analysis table: covariates, utilities, hospitalisation cost and
/// the requested resource counts. Follow-up utilities on or after death are
/// structural zeros.
pub fn build_analysis_table(
    merged: &MergedDataset,
    valueset: Option<&ValueSet>,
    costs: &UnitCostTable,
    resources: &[String],
) -> Result<AnalysisTable> {
    let n = merged.len();
    let patients = merged.patients();
    let mut utilities: [Vec<Option<f64>>; 4] = Default::default();
    let mut structural = vec![[false; 4]; n];
    let mut hosp = Vec::with_capacity(n);
    for (i, p) in patients.iter().enumerate() {
        for t in 0..4 {
            let mut u = resolve_utility(&p.eq5d[t], valueset)?;
            if t > 0 && !p.alive_at(TIMEPOINT_DAYS[t]) {
                u = Some(0.0);
                structural[i][t] = true;
            }
            utilities[t].push(u);
        }
        hosp.push(hospitalisation_cost(&p.readmissions, p.index_stay_days, costs)?);
    }
    let mut columns = vec![
        column(COL_SEX, ColumnRole::Covariate, patients.iter().map(|p| Some(if p.sex_male { 1.0 } else { 0.0 })).collect()),
        column(COL_AGE, ColumnRole::Covariate, patients.iter().map(|p| Some(p.age)).collect()),
        column(
            COL_SPECIALTY,
            ColumnRole::Covariate,
            (0..n).map(|i| Some(if merged.ward_of(i).specialty_elderly { 1.0 } else { 0.0 })).collect(),
        ),
        column(COL_READM_RATE, ColumnRole::Covariate, (0..n).map(|i| merged.ward_of(i).baseline_readmission_rate).collect()),
        column(COL_OVER75, ColumnRole::Covariate, (0..n).map(|i| Some(merged.ward_of(i).pct_over_75)).collect()),
    ];
    for (t, values) in utilities.into_iter().enumerate() {
        let mut c = column(COL_UTILITY[t], ColumnRole::Utility, values);
        for (i, s) in structural.iter().enumerate() {
            if s[t] {
                c.status[i] = CellStatus::Structural;
            }
        }
        columns.push(c);
    }
    columns.push(column(COL_HOSPITALISATION, ColumnRole::Cost, hosp));
    for r in resources {
        if r == COL_HOSPITALISATION {
            continue;
        }
        if !CRF_RESOURCES.contains(&r.as_str()) {
            return Err(CeaError::Config(format!("unknown resource {r}")));
        }
        columns.push(column(
            r,
            ColumnRole::Count,
            patients.iter().map(|p| p.resource_use.get(r.as_str()).copied().flatten()).collect(),
        ));
    }
    Ok(AnalysisTable {
        ward_ids: merged.wards().iter().map(|w| w.ward_id.clone()).collect(),
        rows: patients
            .iter()
            .enumerate()
            .map(|(i, p)| RowMeta {
                patient_id: p.patient_id.clone(),
                arm: p.arm,
                ward: merged.ward_index(i),
                death_day: p.death_day,
            })
            .collect(),
        columns,
    })
}

// ---------------------------------------------------------------------------
// Baseline imputation

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineImputation {
    pub table: AnalysisTable,
    /// Wards that had no observed value and fell back to the overall mean.
    pub fallbacks: Vec<String>,
}

/// Replaces missing baseline values (baseline utility and the ward
/// readmission rate) by the mean of observed values in the same ward,
/// pooling both arms. A ward with no observed value takes the overall mean.
pub fn impute_baseline_cluster_means(table: &AnalysisTable) -> Result<BaselineImputation> {
    impute_cluster_means(table, &[COL_UTILITY[0], COL_READM_RATE])
}

pub fn impute_cluster_means(table: &AnalysisTable, names: &[&str]) -> Result<BaselineImputation> {
    let mut out = table.clone();
    let mut fallbacks = Vec::new();
    let n_wards = table.ward_ids.len();
    for name in names {
        let j = table.column_index(name).ok_or_else(|| CeaError::Config(format!("no column {name}")))?;
        let col = &table.columns[j];
        let mut sums = vec![(0.0, 0usize); n_wards];
        let (mut all, mut all_n) = (0.0, 0usize);
        for (row, v) in table.rows.iter().zip(&col.values) {
            if let Some(v) = v {
                sums[row.ward].0 += v;
                sums[row.ward].1 += 1;
                all += v;
                all_n += 1;
            }
        }
        if all_n == 0 {
            return Err(CeaError::InsufficientData(format!("{name} has no observed values")));
        }
        let overall = all / all_n as f64;
        let target = &mut out.columns[j];
        let mut logged = alloc::collections::BTreeSet::new();
        for (i, row) in table.rows.iter().enumerate() {
            if target.status[i] != CellStatus::Missing {
                continue;
            }
            let (s, k) = sums[row.ward];
            let value = if k > 0 {
                s / k as f64
            } else {
                if logged.insert(row.ward) {
                    fallbacks.push(format!(
                        "{name}: ward {} has no observed values, using overall mean {overall}",
                        table.ward_ids[row.ward]
                    ));
                }
                overall
            };
            target.values[i] = Some(value);
            target.status[i] = CellStatus::BaselineImputed;
        }
    }
    Ok(BaselineImputation { table: out, fallbacks })
}

// ---------------------------------------------------------------------------
// Chained equations

#[derive(Debug, Clone, PartialEq)]
pub struct ImputationSpec {
    /// Columns to impute. Other columns are left as they are.
    pub variables: Vec<String>,
    pub m: usize,
    pub pmm_donors: usize,
    pub cycles: usize,
    pub ridge: f64,
    pub seed: u64,
    pub min_observed: usize,
}

impl ImputationSpec {
    pub fn new(variables: Vec<String>, m: usize, seed: u64) -> Self {
        ImputationSpec { variables, m, pmm_donors: 5, cycles: 20, ridge: 1e-4, seed, min_observed: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedEntry {
    pub arm: Arm,
    pub imputation: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputedSets {
    pub datasets: Vec<AnalysisTable>,
    /// `None` when the sets were loaded without their mask manifest.
    pub mask: Option<CellMask>,
    pub master_seed: u64,
    pub seeds: Vec<SeedEntry>,
    pub diagnostics: Vec<String>,
}

impl ImputedSets {
    pub fn m(&self) -> usize {
        self.datasets.len()
    }
}

struct ArmImputation {
    /// (column, row, value)
    cells: Vec<(usize, usize, f64)>,
    diagnostics: Vec<String>,
}

/// Generates `spec.m` completed tables. Each (arm, imputation) pair runs an
/// independent chain on that arm's rows only, with its own random stream.
pub fn mice_by_arm<E: Executor>(table: &AnalysisTable, spec: &ImputationSpec, exec: &E) -> Result<ImputedSets> {
    if spec.m < 2 {
        return Err(CeaError::Config(format!("need at least 2 imputations, got {}", spec.m)));
    }
    if spec.pmm_donors == 0 {
        return Err(CeaError::Config("pmm_donors must be positive".into()));
    }
    let mut var_idx = Vec::with_capacity(spec.variables.len());
    for v in &spec.variables {
        let j = table.column_index(v).ok_or_else(|| CeaError::Config(format!("unknown imputation variable {v}")))?;
        if table.columns[j].role == ColumnRole::Covariate {
            return Err(CeaError::Config(format!("{v} is a covariate; complete it with baseline imputation")));
        }
        var_idx.push(j);
    }
    for name in [COL_SEX, COL_AGE, COL_UTILITY[0]] {
        let c = table.column(name)?;
        if c.values.iter().any(Option::is_none) {
            return Err(CeaError::InsufficientData(format!("{name} must be complete before chained imputation")));
        }
    }

    let results: Vec<Result<ArmImputation>> = exec.map_indexed(2 * spec.m, |task| {
        let arm = Arm::BOTH[task % 2];
        let m = task / 2;
        let mut rng = rng::stream(spec.seed, &[rng::IMPUTE, arm.index() as u64, m as u64]);
        impute_arm(table, spec, &var_idx, arm, &mut rng)
    });

    let mut datasets = vec![table.clone(); spec.m];
    let mut diagnostics = Vec::new();
    for (task, res) in results.into_iter().enumerate() {
        let res = res?;
        let m = task / 2;
        for (j, i, v) in res.cells {
            let c = &mut datasets[m].columns[j];
            c.values[i] = Some(v);
            c.status[i] = CellStatus::Imputed;
        }
        for d in res.diagnostics {
            if !diagnostics.contains(&d) {
                diagnostics.push(d);
            }
        }
    }
    let seeds = (0..spec.m)
        .flat_map(|m| {
            Arm::BOTH.map(|arm| SeedEntry {
                arm,
                imputation: m,
                seed: rng::derive_seed(spec.seed, &[rng::IMPUTE, arm.index() as u64, m as u64]),
            })
        })
        .collect();
    let mask = Some(datasets[0].mask());
    Ok(ImputedSets { datasets, mask, master_seed: spec.seed, seeds, diagnostics })
}

struct Draw {
    beta_hat: DVector<f64>,
    beta_star: DVector<f64>,
    sigma_star: f64,
}

fn bayes_regression(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    ridge: f64,
    rng: &mut StreamRng,
    label: &str,
    diagnostics: &mut Vec<String>,
) -> Result<Draw> {
    let n = x.nrows();
    let p = x.ncols();
    let mut xtx = x.transpose() * x;
    if !collinear_columns(&xtx).is_empty() {
        let note = format!("{label}: collinear predictors, ridge penalty {ridge} applied");
        if !diagnostics.contains(&note) {
            diagnostics.push(note);
        }
        for k in 0..p {
            let d = xtx[(k, k)];
            xtx[(k, k)] = d + ridge * if d > 0.0 { d } else { 1.0 };
        }
    }
    let chol = xtx.clone().cholesky().ok_or_else(|| CeaError::Singular(format!("{label}: imputation model")))?;
    let beta_hat = chol.solve(&(x.transpose() * y));
    let resid = y - x * &beta_hat;
    let ss = resid.dot(&resid);
    let df = (n as f64 - p as f64).max(1.0);
    let chi: f64 = ChiSquared::new(df).map_err(|e| CeaError::Domain(format!("{e}")))?.sample(rng);
    let sigma_star = libm::sqrt(ss / chi);
    let v = chol.inverse();
    let l = v.cholesky().map(|c| c.unpack()).unwrap_or_else(|| DMatrix::zeros(p, p));
    let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let beta_star = &beta_hat + (l * z) * sigma_star;
    Ok(Draw { beta_hat, beta_star, sigma_star })
}

fn impute_arm(
    table: &AnalysisTable,
    spec: &ImputationSpec,
    var_idx: &[usize],
    arm: Arm,
    rng: &mut StreamRng,
) -> Result<ArmImputation> {
    let rows: Vec<usize> = (0..table.n_rows()).filter(|&i| table.rows[i].arm == arm).collect();
    let n = rows.len();
    let mut diagnostics = Vec::new();

    // Ward dummies absorb the ward-level covariates.
    let mut wards: Vec<usize> = rows.iter().map(|&i| table.rows[i].ward).collect();
    wards.sort_unstable();
    wards.dedup();
    let fixed: Vec<usize> = [COL_SEX, COL_AGE, COL_UTILITY[0]]
        .iter()
        .map(|c| table.column_index(c).unwrap())
        .filter(|j| !var_idx.contains(j))
        .collect();

    // Current working values for imputation variables (arm rows only).
    let mut current: Vec<Vec<f64>> = Vec::with_capacity(var_idx.len());
    let mut targets: Vec<Vec<usize>> = Vec::with_capacity(var_idx.len());
    let mut observed: Vec<Vec<usize>> = Vec::with_capacity(var_idx.len());
    for &j in var_idx {
        let col = &table.columns[j];
        let mut vals = vec![0.0; n];
        let mut miss = Vec::new();
        let mut obs = Vec::new();
        for (r, &i) in rows.iter().enumerate() {
            match col.status[i] {
                CellStatus::Missing => miss.push(r),
                CellStatus::Structural => vals[r] = col.values[i].unwrap_or(0.0),
                _ => {
                    vals[r] = col.values[i].unwrap();
                    obs.push(r);
                }
            }
        }
        if !miss.is_empty() && obs.len() < spec.min_observed {
            return Err(CeaError::InsufficientData(format!(
                "{} in {arm} arm: {} observed rows, need at least {}",
                col.name,
                obs.len(),
                spec.min_observed
            )));
        }
        for &r in &miss {
            vals[r] = vals[obs[rng.random_range(0..obs.len())]];
        }
        current.push(vals);
        targets.push(miss);
        observed.push(obs);
    }

    // Visit order: increasing missingness in this arm, ties by name.
    let mut order: Vec<usize> = (0..var_idx.len()).filter(|&k| !targets[k].is_empty()).collect();
    order.sort_by(|&a, &b| {
        targets[a]
            .len()
            .cmp(&targets[b].len())
            .then_with(|| table.columns[var_idx[a]].name.cmp(&table.columns[var_idx[b]].name))
    });

    if !order.is_empty() {
        for _cycle in 0..spec.cycles {
            for &k in &order {
                let col = &table.columns[var_idx[k]];
                let label = format!("{} ({arm} arm)", col.name);
                let p = 1 + fixed.len() + (var_idx.len() - 1) + (wards.len() - 1);
                let x = DMatrix::from_fn(n, p, |r, c| {
                    let i = rows[r];
                    if c == 0 {
                        return 1.0;
                    }
                    let mut c = c - 1;
                    if c < fixed.len() {
                        return table.columns[fixed[c]].values[i].unwrap();
                    }
                    c -= fixed.len();
                    if c < var_idx.len() - 1 {
                        let other = if c < k { c } else { c + 1 };
                        return current[other][r];
                    }
                    c -= var_idx.len() - 1;
                    if table.rows[i].ward == wards[c + 1] {
                        1.0
                    } else {
                        0.0
                    }
                });
                let count = col.role == ColumnRole::Count;
                let transform = |v: f64| if count { libm::log1p(v.max(0.0)) } else { v };
                let obs = &observed[k];
                let x_obs = x.select_rows(obs.iter());
                let y_obs = DVector::from_iterator(obs.len(), obs.iter().map(|&r| transform(current[k][r])));
                let draw = bayes_regression(&x_obs, &y_obs, spec.ridge, rng, &label, &mut diagnostics)?;
                let miss = &targets[k];
                if count {
                    for &r in miss {
                        let mean = x.row(r).dot(&draw.beta_star.transpose());
                        let eps: f64 = rng.sample(StandardNormal);
                        let v = libm::round(libm::expm1(mean + draw.sigma_star * eps)).max(0.0);
                        current[k][r] = if v.is_finite() { v } else { f64::MAX };
                    }
                } else {
                    let yhat_obs: Vec<f64> = (0..obs.len()).map(|o| x_obs.row(o).dot(&draw.beta_hat.transpose())).collect();
                    let mut idx: Vec<usize> = (0..obs.len()).collect();
                    for &r in miss {
                        let target = x.row(r).dot(&draw.beta_star.transpose());
                        let donors = spec.pmm_donors.min(obs.len());
                        let dist = |o: usize| (yhat_obs[o] - target).abs();
                        idx.select_nth_unstable_by(donors - 1, |&a, &b| {
                            dist(a).total_cmp(&dist(b)).then_with(|| a.cmp(&b))
                        });
                        let mut pool: Vec<usize> = idx[..donors].to_vec();
                        pool.sort_unstable();
                        let pick = pool[rng.random_range(0..donors)];
                        current[k][r] = current[k][obs[pick]];
                    }
                }
            }
        }
    }

    let mut cells = Vec::new();
    for (k, &j) in var_idx.iter().enumerate() {
        for &r in &targets[k] {
            cells.push((j, rows[r], current[k][r]));
        }
    }
    Ok(ArmImputation { cells, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn imputation_count_rule() {
        assert_eq!(imputation_count_for_percent(0.0), 5);
        assert_eq!(imputation_count_for_percent(46.0), 46);
        assert_eq!(imputation_count_for_percent(45.2), 46);
        assert_eq!(imputation_count_for_percent(80.0), 50);
    }
}
