#![allow(dead_code)]

use crt_cea_core::estimation::CostFamily;
use crt_cea_core::missing::{
    build_analysis_table, impute_baseline_cluster_means, mice_by_arm, AnalysisTable, ImputationSpec, ImputedSets,
    COL_HOSPITALISATION, COL_UTILITY,
};
use crt_cea_core::outcomes::{ActivityTable, CostRules};
use crt_cea_core::pipeline::AnalysisSettings;
use crt_cea_core::synth::{generate_trial, Mechanism, MissingnessSpec, SimConfig};
use crt_cea_core::trial::MergedDataset;
use crt_cea_core::Executor;

/// 30% MAR missingness on follow-up utilities, lower baseline utility
/// meaning more missingness.
pub fn mar_30() -> MissingnessSpec {
    MissingnessSpec {
        utility: Mechanism::Mar { intercept: (0.3f64 / 0.7).ln(), slope: -2.0, center: 0.49 },
        baseline_p: 0.02,
        cost_p: 0.02,
    }
}

pub fn imputation_variables() -> Vec<String> {
    let mut v: Vec<String> = COL_UTILITY[1..].iter().map(|s| s.to_string()).collect();
    v.push(COL_HOSPITALISATION.to_string());
    v
}

pub fn table_for(merged: &MergedDataset, cfg: &SimConfig) -> AnalysisTable {
    let table = build_analysis_table(merged, None, &cfg.unit_costs(), &[]).unwrap();
    impute_baseline_cluster_means(&table).unwrap().table
}

pub fn settings_for(cfg: &SimConfig, reps: usize, seed: u64) -> AnalysisSettings {
    let rules = CostRules { activities: ActivityTable::trial_default(), imputable_resources: vec![] };
    let mut s = AnalysisSettings::new(rules, cfg.unit_costs(), seed);
    s.bootstrap_reps = reps;
    s.cost_family = CostFamily::Gaussian;
    s
}

pub fn impute<E: Executor>(table: &AnalysisTable, m: usize, seed: u64, exec: &E) -> ImputedSets {
    mice_by_arm(table, &ImputationSpec::new(imputation_variables(), m, seed), exec).unwrap()
}

pub fn simulated(seed: u64, missing: MissingnessSpec) -> (SimConfig, MergedDataset, crt_cea_core::synth::GroundTruth) {
    let cfg = SimConfig { seed, missingness: missing, ..SimConfig::default() };
    let (complete, truth) = generate_trial(&cfg).unwrap();
    let (holed, _) = crt_cea_core::synth::apply_missingness(&complete, &cfg.missingness, seed).unwrap();
    (cfg, holed, truth)
}

pub fn simulated_with(
    base: SimConfig,
    seed: u64,
    missing: MissingnessSpec,
) -> (SimConfig, MergedDataset, crt_cea_core::synth::GroundTruth) {
    let cfg = SimConfig { seed, missingness: missing, ..base };
    let (complete, truth) = generate_trial(&cfg).unwrap();
    let (holed, _) = crt_cea_core::synth::apply_missingness(&complete, &cfg.missingness, seed).unwrap();
    (cfg, holed, truth)
}
