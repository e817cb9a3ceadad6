//! The analysis over a set of completed datasets: per-imputation fits, Rubin
//! pooling, the bootstrap-within-imputation cloud and decision metrics, plus
//! the MNAR scenario sweep.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::decision::{apply_mnar_rescale, icer, scenario_table, DecisionSummary, Icer, MnarScenario};
use crate::error::{CeaError, Result};
use crate::estimation::{
    dataset_design, estimate_dataset, patient_outcomes, BootstrapEstimator, ClusterRefit, CostFamily, CostModel,
    CovariateSpec, DatasetDesign, DatasetEstimates, EstimatorPair,
};
use crate::exec::Executor;
use crate::missing::ImputedSets;
use crate::outcomes::{CostRules, UnitCostTable};
use crate::rng::{stream, BOOTSTRAP};
use crate::uncertainty::{
    bootstrap_replicate, ceac, check_refit, collect_draws, default_thresholds, pool_clouds, probability_cost_effective,
    quadrant_summary, rubin_pool, validate_thresholds, CeCloud, Ceac, PooledEstimate, QuadrantSummary, REDRAW_FACTOR,
};

pub const PRIMARY_THRESHOLD: f64 = 15_000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSettings {
    pub covariates: CovariateSpec,
    pub cost_family: CostFamily,
    pub bootstrap_estimator: BootstrapEstimator,
    /// Bootstrap replicates per imputed dataset.
    pub bootstrap_reps: usize,
    /// CEAC grid.
    pub thresholds: Vec<f64>,
    /// Thresholds at which NHB and NMB are reported (all positive).
    pub report_thresholds: Vec<f64>,
    pub primary_threshold: f64,
    pub seed: u64,
    pub rules: CostRules,
    pub costs: UnitCostTable,
}

impl AnalysisSettings {
    pub fn new(rules: CostRules, costs: UnitCostTable, seed: u64) -> Self {
        AnalysisSettings {
            covariates: CovariateSpec::default(),
            cost_family: CostFamily::Gaussian,
            bootstrap_estimator: BootstrapEstimator::Mixed,
            bootstrap_reps: 1000,
            thresholds: default_thresholds(),
            report_thresholds: vec![15_000.0, 20_000.0, 30_000.0],
            primary_threshold: PRIMARY_THRESHOLD,
            seed,
            rules,
            costs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_thresholds(&self.thresholds)?;
        if self.bootstrap_reps == 0 {
            return Err(CeaError::Config("bootstrap replicates must be positive".into()));
        }
        for &l in self.report_thresholds.iter().chain([self.primary_threshold].iter()) {
            if !(l > 0.0 && l.is_finite()) {
                return Err(CeaError::Config(format!("reporting threshold {l} must be positive")));
            }
        }
        self.costs.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndpointReport {
    /// Adjusted means averaged over imputations.
    pub mean_control: f64,
    pub mean_intervention: f64,
    pub difference: PooledEstimate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetBenefit {
    pub threshold: f64,
    pub nhb: PooledEstimate,
    pub nmb: PooledEstimate,
    /// From the pooled bootstrap cloud.
    pub prob_cost_effective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorReport {
    pub cost: EndpointReport,
    pub qaly: EndpointReport,
    pub icer: Icer,
    pub net_benefit: Vec<NetBenefit>,
}

/// Diagnostics of one imputed dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetSummary {
    pub mixed: EstimatorPair,
    pub sur: EstimatorPair,
    /// Ward variance of the cost and QALY mixed models (`None` for the
    /// gamma cost model).
    pub sigma2_u: [Option<f64>; 2],
    pub boundary: [bool; 2],
    pub sur_iterations: usize,
    pub sur_converged: bool,
    pub bootstrap_redraws: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisResult {
    pub scenario: MnarScenario,
    pub m: usize,
    pub bootstrap_reps: usize,
    pub master_seed: u64,
    /// Mixed-model (base-case) estimator.
    pub mixed: EstimatorReport,
    pub sur: EstimatorReport,
    pub cloud: CeCloud,
    pub ceac: Ceac,
    pub quadrants: QuadrantSummary,
    /// Base-case decision metrics at the primary threshold.
    pub decision: DecisionSummary,
    pub per_imputation: Vec<DatasetSummary>,
}

fn endpoint_report(pairs: &[&EstimatorPair], cost: bool, complete_df: f64) -> Result<EndpointReport> {
    let pick = |p: &EstimatorPair| if cost { p.cost } else { p.qaly };
    let m = pairs.len() as f64;
    let est: Vec<f64> = pairs.iter().map(|p| pick(p).difference).collect();
    let var: Vec<f64> = pairs.iter().map(|p| pick(p).variance()).collect();
    Ok(EndpointReport {
        mean_control: pairs.iter().map(|p| pick(p).mean_control).sum::<f64>() / m,
        mean_intervention: pairs.iter().map(|p| pick(p).mean_intervention).sum::<f64>() / m,
        difference: rubin_pool(&est, &var, complete_df)?,
    })
}

fn estimator_report(pairs: &[&EstimatorPair], complete_df: [f64; 2], settings: &AnalysisSettings, cloud: &CeCloud) -> Result<EstimatorReport> {
    let cost = endpoint_report(pairs, true, complete_df[0])?;
    let qaly = endpoint_report(pairs, false, complete_df[1])?;
    let df = complete_df[0].min(complete_df[1]);
    let mut net_benefit = Vec::with_capacity(settings.report_thresholds.len());
    for &l in &settings.report_thresholds {
        let est: Vec<f64> = pairs.iter().map(|p| p.qaly.difference - p.cost.difference / l).collect();
        let var: Vec<f64> = pairs
            .iter()
            .map(|p| (p.qaly.variance() + p.cost.variance() / (l * l) - 2.0 * p.cross_cov / l).max(0.0))
            .collect();
        let nhb = rubin_pool(&est, &var, df)?;
        net_benefit.push(NetBenefit {
            threshold: l,
            nhb,
            nmb: nhb.scaled(l),
            prob_cost_effective: probability_cost_effective(cloud, l),
        });
    }
    Ok(EstimatorReport { icer: icer(cost.difference.point, qaly.difference.point), cost, qaly, net_benefit })
}

/// Fits both estimators on every completed dataset, bootstraps wards within
/// each, and pools. Bootstrap replicate `b` of imputation `m` draws from the
/// stream `(seed, BOOTSTRAP, m, b)`, shared by every scenario so that
/// scenarios differ only through the rescaled utilities.
pub fn analyse<E: Executor>(
    sets: &ImputedSets,
    settings: &AnalysisSettings,
    scenario: &MnarScenario,
    exec: &E,
) -> Result<AnalysisResult> {
    settings.validate()?;
    let m = sets.m();
    if m < 2 {
        return Err(CeaError::InsufficientData(format!("need at least 2 imputed datasets, got {m}")));
    }
    let fitted: Vec<Result<(DatasetDesign, DatasetEstimates)>> = exec.map_indexed(m, |k| {
        let table = &sets.datasets[k];
        let outcomes = patient_outcomes(table, &settings.rules, &settings.costs)?;
        let design = dataset_design(table, &outcomes, &settings.covariates)?;
        let est = estimate_dataset(&design, settings.cost_family)?;
        Ok((design, est))
    });
    let fitted: Vec<(DatasetDesign, DatasetEstimates)> = fitted.into_iter().collect::<Result<_>>()?;
    let refits: Vec<ClusterRefit<'_>> = fitted
        .iter()
        .map(|(d, _)| ClusterRefit::new(d, settings.cost_family, settings.bootstrap_estimator))
        .collect::<Result<_>>()?;
    for r in &refits {
        check_refit(r)?;
    }

    let reps = settings.bootstrap_reps;
    let cap = REDRAW_FACTOR * reps;
    let mut replicates = exec.map_indexed(m * reps, |k| {
        let (mi, b) = (k / reps, k % reps);
        let mut rng = stream(settings.seed, &[BOOTSTRAP, mi as u64, b as u64]);
        bootstrap_replicate(&refits[mi], &mut rng, cap)
    });
    let mut clouds = Vec::with_capacity(m);
    let mut redraws = Vec::with_capacity(m);
    for _ in 0..m {
        let rest = replicates.split_off(reps);
        let draws = collect_draws(core::mem::replace(&mut replicates, rest), cap)?;
        redraws.push(draws.redraws);
        clouds.push(draws.points);
    }
    let cloud = pool_clouds(&clouds, settings.seed)?;
    let ceac = ceac(&cloud, &settings.thresholds)?;

    let complete_df = fitted[0].1.complete_df;
    let mixed_pairs: Vec<&EstimatorPair> = fitted.iter().map(|(_, e)| &e.mixed).collect();
    let sur_pairs: Vec<&EstimatorPair> = fitted.iter().map(|(_, e)| &e.sur).collect();
    let mixed = estimator_report(&mixed_pairs, complete_df, settings, &cloud)?;
    let sur = estimator_report(&sur_pairs, complete_df, settings, &cloud)?;
    let decision = DecisionSummary::new(
        mixed.cost.difference.point,
        mixed.qaly.difference.point,
        settings.primary_threshold,
        probability_cost_effective(&cloud, settings.primary_threshold),
    )?;
    let per_imputation = fitted
        .iter()
        .zip(&redraws)
        .map(|((_, e), &r)| {
            let (s2c, bc) = match &e.cost_model {
                CostModel::Mixed(f) => (Some(f.sigma2_u), f.boundary),
                CostModel::GammaLog(_) => (None, false),
            };
            DatasetSummary {
                mixed: e.mixed,
                sur: e.sur,
                sigma2_u: [s2c, Some(e.qaly_model.sigma2_u)],
                boundary: [bc, e.qaly_model.boundary],
                sur_iterations: e.sur_fit.iterations,
                sur_converged: e.sur_fit.converged,
                bootstrap_redraws: r,
            }
        })
        .collect();
    Ok(AnalysisResult {
        scenario: *scenario,
        m,
        bootstrap_reps: reps,
        master_seed: settings.seed,
        mixed,
        sur,
        quadrants: quadrant_summary(&cloud),
        cloud,
        ceac,
        decision,
        per_imputation,
    })
}

/// The base case: the MAR scenario with its own seeds.
pub fn analyse_base_case<E: Executor>(sets: &ImputedSets, settings: &AnalysisSettings, exec: &E) -> Result<AnalysisResult> {
    analyse(sets, settings, &scenario_table()[0], exec)
}

/// Rescales, re-estimates and pools under each scenario in turn.
pub fn run_scenarios<E: Executor>(
    sets: &ImputedSets,
    settings: &AnalysisSettings,
    scenarios: &[MnarScenario],
    exec: &E,
) -> Result<Vec<AnalysisResult>> {
    scenarios
        .iter()
        .map(|s| {
            let rescaled = apply_mnar_rescale(sets, s)?;
            analyse(&rescaled, settings, s, exec)
        })
        .collect()
}
