//! Per-dataset estimation: endpoint construction, design matrices, the two
//! estimators (random-intercept mixed model and SUR) and adjusted
//! differences by marginal standardisation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{CeaError, Result};
use crate::lmm::{cluster_stats, fit_lmm_clusters, fit_lmm_reml, ClusterStats, LmmFit};
use crate::missing::{AnalysisTable, ColumnRole, COL_HOSPITALISATION, COL_OVER75, COL_READM_RATE, COL_SEX, COL_SPECIALTY, COL_UTILITY};
use crate::outcomes::{compose_cost, qaly_auc, CostRules, UnitCostTable, UtilityTrajectory};
use crate::regression::{fit_gamma_log, fit_sur, GlmFit, SurFit};
use crate::special::normal_quantile;
use crate::trial::Arm;

pub const INTERCEPT: &str = "intercept";
pub const ARM: &str = "arm";

/// Adjustment covariates available to both equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Covariate {
    SpecialtyElderly,
    BaselineReadmRate,
    PctOver75,
    SexMale,
}

impl Covariate {
    pub const ALL: [Covariate; 4] =
        [Covariate::SpecialtyElderly, Covariate::BaselineReadmRate, Covariate::PctOver75, Covariate::SexMale];

    pub fn column(self) -> &'static str {
        match self {
            Covariate::SpecialtyElderly => COL_SPECIALTY,
            Covariate::BaselineReadmRate => COL_READM_RATE,
            Covariate::PctOver75 => COL_OVER75,
            Covariate::SexMale => COL_SEX,
        }
    }

    pub fn from_column(name: &str) -> Option<Covariate> {
        Covariate::ALL.into_iter().find(|c| c.column() == name)
    }
}

/// Covariates of the cost equation. The QALY equation uses the same set plus
/// baseline utility; both always carry an intercept and the arm indicator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CovariateSpec {
    pub covariates: Vec<Covariate>,
}

impl Default for CovariateSpec {
    fn default() -> Self {
        CovariateSpec { covariates: Covariate::ALL.to_vec() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Cost,
    Qaly,
}

impl CovariateSpec {
    pub fn names(&self, endpoint: Endpoint) -> Vec<String> {
        let mut names = alloc::vec![INTERCEPT.to_string(), ARM.to_string()];
        names.extend(self.covariates.iter().map(|c| c.column().to_string()));
        if endpoint == Endpoint::Qaly {
            names.push(COL_UTILITY[0].to_string());
        }
        names
    }
}

/// Per-patient QALYs and total costs of one completed table.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientOutcomes {
    pub qaly: Vec<f64>,
    pub cost: Vec<f64>,
}

/// QALYs by area under the curve and totals of intervention, hospitalisation
/// and every count column of the table costed at its unit cost.
pub fn patient_outcomes(table: &AnalysisTable, rules: &CostRules, costs: &UnitCostTable) -> Result<PatientOutcomes> {
    let utilities: Vec<Vec<f64>> = COL_UTILITY.iter().map(|c| table.complete_values(c)).collect::<Result<_>>()?;
    let hosp = table.complete_values(COL_HOSPITALISATION)?;
    let resources: Vec<(&str, Vec<f64>)> = table
        .columns
        .iter()
        .filter(|c| c.role == ColumnRole::Count)
        .map(|c| table.complete_values(&c.name).map(|v| (c.name.as_str(), v)))
        .collect::<Result<_>>()?;
    let n = table.n_rows();
    let mut qaly = Vec::with_capacity(n);
    let mut cost = Vec::with_capacity(n);
    for i in 0..n {
        let row = &table.rows[i];
        let traj = UtilityTrajectory { utilities: [0, 1, 2, 3].map(|t| utilities[t][i]), death_day: row.death_day };
        qaly.push(qaly_auc(&traj));
        let counts: BTreeMap<String, f64> = resources.iter().map(|(name, v)| (name.to_string(), v[i])).collect();
        cost.push(compose_cost(row.arm, hosp[i], &counts, rules, costs)?.total);
    }
    Ok(PatientOutcomes { qaly, cost })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointDesign {
    pub y: Vec<f64>,
    pub x: DMatrix<f64>,
    pub names: Vec<String>,
}

impl EndpointDesign {
    pub fn arm_index(&self) -> usize {
        self.names.iter().position(|n| n == ARM).unwrap_or(1)
    }
}

/// Both equations' data on the same patients.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetDesign {
    pub cost: EndpointDesign,
    pub qaly: EndpointDesign,
    pub cluster: Vec<usize>,
    pub arm: Vec<Arm>,
}

impl DatasetDesign {
    pub fn endpoint(&self, e: Endpoint) -> &EndpointDesign {
        match e {
            Endpoint::Cost => &self.cost,
            Endpoint::Qaly => &self.qaly,
        }
    }

    pub fn n_obs(&self) -> usize {
        self.arm.len()
    }

    /// Rows restricted to a multiset of clusters; each draw becomes a fresh
    /// cluster label so duplicated wards count as distinct clusters.
    pub fn resampled(&self, clusters: &[usize]) -> DatasetDesign {
        let mut by_cluster: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, c) in self.cluster.iter().enumerate() {
            by_cluster.entry(*c).or_default().push(i);
        }
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (draw, c) in clusters.iter().enumerate() {
            if let Some(r) = by_cluster.get(c) {
                rows.extend_from_slice(r);
                labels.extend(core::iter::repeat_n(draw, r.len()));
            }
        }
        let take = |d: &EndpointDesign| EndpointDesign {
            y: rows.iter().map(|&i| d.y[i]).collect(),
            x: d.x.select_rows(rows.iter()),
            names: d.names.clone(),
        };
        DatasetDesign {
            cost: take(&self.cost),
            qaly: take(&self.qaly),
            cluster: labels,
            arm: rows.iter().map(|&i| self.arm[i]).collect(),
        }
    }
}

fn endpoint_design(table: &AnalysisTable, y: Vec<f64>, names: Vec<String>) -> Result<EndpointDesign> {
    let n = table.n_rows();
    let mut x = DMatrix::zeros(n, names.len());
    for (k, name) in names.iter().enumerate() {
        match name.as_str() {
            INTERCEPT => x.column_mut(k).fill(1.0),
            ARM => {
                for i in 0..n {
                    x[(i, k)] = table.rows[i].arm.indicator();
                }
            }
            col => {
                let v = table.complete_values(col)?;
                x.column_mut(k).copy_from_slice(&v);
            }
        }
    }
    Ok(EndpointDesign { y, x, names })
}

pub fn dataset_design(table: &AnalysisTable, outcomes: &PatientOutcomes, spec: &CovariateSpec) -> Result<DatasetDesign> {
    let n = table.n_rows();
    if outcomes.cost.len() != n || outcomes.qaly.len() != n {
        return Err(CeaError::validation("outcomes do not match the table rows"));
    }
    Ok(DatasetDesign {
        cost: endpoint_design(table, outcomes.cost.clone(), spec.names(Endpoint::Cost))?,
        qaly: endpoint_design(table, outcomes.qaly.clone(), spec.names(Endpoint::Qaly))?,
        cluster: table.rows.iter().map(|r| r.ward).collect(),
        arm: table.rows.iter().map(|r| r.arm).collect(),
    })
}

/// Adjusted per-arm means and their difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjustedDifference {
    pub mean_control: f64,
    pub mean_intervention: f64,
    pub difference: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl AdjustedDifference {
    fn new(mean_control: f64, mean_intervention: f64, se: f64) -> Self {
        let difference = mean_intervention - mean_control;
        let z = normal_quantile(0.975);
        AdjustedDifference {
            mean_control,
            mean_intervention,
            difference,
            se,
            ci_low: difference - z * se,
            ci_high: difference + z * se,
        }
    }

    pub fn variance(&self) -> f64 {
        self.se * self.se
    }
}

fn counterfactual_means(x: &DMatrix<f64>, arm: usize) -> [DVector<f64>; 2] {
    let mut mean = DVector::zeros(x.ncols());
    for k in 0..x.ncols() {
        mean[k] = x.column(k).mean();
    }
    let mut control = mean.clone();
    control[arm] = 0.0;
    let mut treated = mean;
    treated[arm] = 1.0;
    [control, treated]
}

/// Marginal standardisation under an identity link: every patient predicted
/// under each arm and averaged. The difference is the arm coefficient.
pub fn adjusted_difference_linear(beta: &[f64], cov: &DMatrix<f64>, design: &EndpointDesign) -> AdjustedDifference {
    let arm = design.arm_index();
    let b = DVector::from_column_slice(beta);
    let [c, t] = counterfactual_means(&design.x, arm);
    let mut d = AdjustedDifference::new(c.dot(&b), t.dot(&b), libm::sqrt(cov[(arm, arm)].max(0.0)));
    d.difference = beta[arm];
    d
}

/// Marginal standardisation under a log link with a delta-method SE.
pub fn adjusted_difference_log(fit: &GlmFit, design: &EndpointDesign) -> AdjustedDifference {
    let arm = design.arm_index();
    let (n, p) = design.x.shape();
    let mut means = [0.0; 2];
    let mut grad = DVector::zeros(p);
    for i in 0..n {
        let mut row = design.x.row(i).transpose();
        for (a, sign) in [(0usize, -1.0), (1, 1.0)] {
            row[arm] = a as f64;
            let mu = libm::exp(row.dot(&fit.beta));
            means[a] += mu / n as f64;
            grad.axpy(sign * mu / n as f64, &row, 1.0);
        }
    }
    let var = (grad.transpose() * &fit.cov * &grad)[(0, 0)];
    AdjustedDifference::new(means[0], means[1], libm::sqrt(var.max(0.0)))
}

/// Cost model family of the mixed-model estimator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum CostFamily {
    /// Gaussian identity-link random-intercept model.
    #[default]
    Gaussian,
    /// Gamma log-link GLM with ward-robust errors (sensitivity option).
    GammaLog,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorPair {
    pub cost: AdjustedDifference,
    pub qaly: AdjustedDifference,
    /// Covariance between the cost and QALY differences.
    pub cross_cov: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CostModel {
    Mixed(LmmFit),
    GammaLog(GlmFit),
}

/// Both estimators on one completed dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEstimates {
    pub mixed: EstimatorPair,
    pub sur: EstimatorPair,
    pub cost_model: CostModel,
    pub qaly_model: LmmFit,
    pub sur_fit: SurFit,
    /// Complete-data residual df per endpoint (n minus coefficients).
    pub complete_df: [f64; 2],
}

pub fn estimate_dataset(design: &DatasetDesign, family: CostFamily) -> Result<DatasetEstimates> {
    let (cost_model, cost) = match family {
        CostFamily::Gaussian => {
            let fit = fit_lmm_reml(&design.cost.y, &design.cost.x, &design.cluster, &design.cost.names)?;
            let d = adjusted_difference_linear(&fit.beta, &fit.cov, &design.cost);
            (CostModel::Mixed(fit), d)
        }
        CostFamily::GammaLog => {
            let fit = fit_gamma_log(&design.cost.y, &design.cost.x, &design.cluster, &design.cost.names)?;
            let d = adjusted_difference_log(&fit, &design.cost);
            (CostModel::GammaLog(fit), d)
        }
    };
    let qaly_model = fit_lmm_reml(&design.qaly.y, &design.qaly.x, &design.cluster, &design.qaly.names)?;
    let qaly = adjusted_difference_linear(&qaly_model.beta, &qaly_model.cov, &design.qaly);
    let sur_fit = sur(design)?;
    let sur_pair = sur_pair(&sur_fit, design);
    let n = design.n_obs() as f64;
    Ok(DatasetEstimates {
        mixed: EstimatorPair { cost, qaly, cross_cov: 0.0 },
        sur: sur_pair,
        cost_model,
        qaly_model,
        complete_df: [n - design.cost.names.len() as f64, n - design.qaly.names.len() as f64],
        sur_fit,
    })
}

fn sur(design: &DatasetDesign) -> Result<SurFit> {
    let yc = DVector::from_column_slice(&design.cost.y);
    let yq = DVector::from_column_slice(&design.qaly.y);
    fit_sur([&yc, &yq], [&design.cost.x, &design.qaly.x], [&design.cost.names, &design.qaly.names], &design.cluster)
}

fn sur_pair(fit: &SurFit, design: &DatasetDesign) -> EstimatorPair {
    let cost = adjusted_difference_linear(&fit.beta[0], &fit.equation_cov(0), &design.cost);
    let qaly = adjusted_difference_linear(&fit.beta[1], &fit.equation_cov(1), &design.qaly);
    let ic = fit.index_of(0, ARM).unwrap_or(1);
    let iq = fit.index_of(1, ARM).unwrap_or(fit.beta[0].len() + 1);
    EstimatorPair { cost, qaly, cross_cov: fit.cov[(ic, iq)] }
}

/// Which model the bootstrap refits on each resample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum BootstrapEstimator {
    #[default]
    Mixed,
    Sur,
}

/// Refits (ΔC, ΔE) on cluster resamples of one dataset. The Gaussian mixed
/// model works from cached per-ward sufficient statistics.
pub struct ClusterRefit<'a> {
    design: &'a DatasetDesign,
    family: CostFamily,
    estimator: BootstrapEstimator,
    cluster_ids: Vec<usize>,
    cluster_arms: Vec<Arm>,
    stats: Option<[Vec<ClusterStats>; 2]>,
}

impl<'a> ClusterRefit<'a> {
    pub fn new(design: &'a DatasetDesign, family: CostFamily, estimator: BootstrapEstimator) -> Result<Self> {
        let mut arms: BTreeMap<usize, Arm> = BTreeMap::new();
        for (c, a) in design.cluster.iter().zip(&design.arm) {
            if let Some(prev) = arms.insert(*c, *a) {
                if prev != *a {
                    return Err(CeaError::validation(format!("cluster {c} contains patients from both arms")));
                }
            }
        }
        let stats = (estimator == BootstrapEstimator::Mixed).then(|| {
            [
                cluster_stats(&design.cost.y, &design.cost.x, &design.cluster),
                cluster_stats(&design.qaly.y, &design.qaly.x, &design.cluster),
            ]
        });
        Ok(ClusterRefit {
            design,
            family,
            estimator,
            cluster_ids: arms.keys().copied().collect(),
            cluster_arms: arms.values().copied().collect(),
            stats,
        })
    }

    /// Arm of each cluster, indexed by position in sorted cluster-id order.
    pub fn cluster_arms(&self) -> &[Arm] {
        &self.cluster_arms
    }

    /// (ΔC, ΔE) for a multiset of cluster positions.
    pub fn estimate(&self, draws: &[usize]) -> Result<(f64, f64)> {
        match (self.estimator, self.family, &self.stats) {
            (BootstrapEstimator::Mixed, CostFamily::Gaussian, Some(stats)) => {
                let arm_c = self.design.cost.arm_index();
                let arm_q = self.design.qaly.arm_index();
                let cost = fit_lmm_clusters(&pick(&stats[0], draws), &self.design.cost.names)?;
                let qaly = fit_lmm_clusters(&pick(&stats[1], draws), &self.design.qaly.names)?;
                Ok((cost.beta[arm_c], qaly.beta[arm_q]))
            }
            _ => {
                let ids: Vec<usize> = draws.iter().map(|&k| self.cluster_ids[k]).collect();
                let d = self.design.resampled(&ids);
                match self.estimator {
                    BootstrapEstimator::Sur => {
                        let pair = sur_pair(&sur(&d)?, &d);
                        Ok((pair.cost.difference, pair.qaly.difference))
                    }
                    BootstrapEstimator::Mixed => {
                        let est = estimate_dataset_mixed(&d, self.family)?;
                        Ok((est.cost.difference, est.qaly.difference))
                    }
                }
            }
        }
    }
}

fn pick<'s>(stats: &'s [ClusterStats], draws: &[usize]) -> Vec<&'s ClusterStats> {
    draws.iter().map(|&k| &stats[k]).collect()
}

fn estimate_dataset_mixed(design: &DatasetDesign, family: CostFamily) -> Result<EstimatorPair> {
    let cost = match family {
        CostFamily::Gaussian => {
            let fit = fit_lmm_reml(&design.cost.y, &design.cost.x, &design.cluster, &design.cost.names)?;
            adjusted_difference_linear(&fit.beta, &fit.cov, &design.cost)
        }
        CostFamily::GammaLog => {
            let fit = fit_gamma_log(&design.cost.y, &design.cost.x, &design.cluster, &design.cost.names)?;
            adjusted_difference_log(&fit, &design.cost)
        }
    };
    let q = fit_lmm_reml(&design.qaly.y, &design.qaly.x, &design.cluster, &design.qaly.names)?;
    Ok(EstimatorPair { cost, qaly: adjusted_difference_linear(&q.beta, &q.cov, &design.qaly), cross_cov: 0.0 })
}
