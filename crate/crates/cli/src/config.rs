//! TOML run configuration and unit-cost files.
//!
//! Relative paths in a config file resolve against the directory holding it.
//! Every field has a default, so an empty file is a valid configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crt_cea_core::decision::{scenario_table, MnarScenario};
use crt_cea_core::estimation::{BootstrapEstimator, CostFamily, Covariate, CovariateSpec};
use crt_cea_core::missing::{ImputationSpec, DEFAULT_RESOURCE_THRESHOLD};
use crt_cea_core::outcomes::{Activity, ActivityTable, CostRules, UnitCostTable};
use crt_cea_core::pipeline::{AnalysisSettings, PRIMARY_THRESHOLD};
use crt_cea_core::synth::{Mechanism, MissingnessSpec, SimConfig};
use crt_cea_core::uncertainty::default_thresholds;

use crate::error::{CliError, CliResult};

pub const DEFAULT_SEED: u64 = 20_240_101;

pub const PACKAGED_VALUESET: &str = include_str!("../data/valueset_illustrative.csv");
pub const PACKAGED_UNIT_COSTS: &str = include_str!("../data/unit_costs.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub inputs: Inputs,
    pub ingest: IngestConfig,
    pub imputation: ImputationConfig,
    pub analysis: AnalysisConfig,
    pub scenarios: ScenarioConfig,
    pub simulate: SimulateConfig,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: DEFAULT_SEED,
            output_dir: PathBuf::from("out"),
            inputs: Inputs::default(),
            ingest: IngestConfig::default(),
            imputation: ImputationConfig::default(),
            analysis: AnalysisConfig::default(),
            scenarios: ScenarioConfig::default(),
            simulate: SimulateConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

/// Input files. `valueset` and `unit_costs` fall back to the packaged
/// illustrative data when absent.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub routine: Option<PathBuf>,
    pub crf: Option<PathBuf>,
    pub wards: Option<PathBuf>,
    pub valueset: Option<PathBuf>,
    pub unit_costs: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub strict: bool,
    pub include_early_decedents: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig { strict: false, include_early_decedents: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImputationConfig {
    /// Number of imputations; chosen from the incomplete-case share when absent.
    pub m: Option<usize>,
    pub pmm_donors: usize,
    pub cycles: usize,
    pub ridge: f64,
    pub min_observed: usize,
    /// Resources at or above this missing fraction are not imputed.
    pub resource_threshold: f64,
}

impl Default for ImputationConfig {
    fn default() -> Self {
        let spec = ImputationSpec::new(Vec::new(), 0, 0);
        ImputationConfig {
            m: None,
            pmm_donors: spec.pmm_donors,
            cycles: spec.cycles,
            ridge: spec.ridge,
            min_observed: spec.min_observed,
            resource_threshold: DEFAULT_RESOURCE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostFamilyName {
    Gaussian,
    GammaLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapName {
    Mixed,
    Sur,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub bootstrap_reps: usize,
    pub cost_family: CostFamilyName,
    pub bootstrap_estimator: BootstrapName,
    /// CEAC grid; defaults to 0 to 50,000 in steps of 500.
    pub thresholds: Option<Vec<f64>>,
    pub report_thresholds: Vec<f64>,
    pub primary_threshold: f64,
    /// Ward and patient covariates; defaults to all four.
    pub covariates: Option<Vec<String>>,
    /// Worker threads, 0 for the available parallelism. Not part of the
    /// config hash because results do not depend on it.
    pub workers: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            bootstrap_reps: 1000,
            cost_family: CostFamilyName::Gaussian,
            bootstrap_estimator: BootstrapName::Mixed,
            thresholds: None,
            report_thresholds: vec![15_000.0, 20_000.0, 30_000.0],
            primary_threshold: PRIMARY_THRESHOLD,
            covariates: None,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub enabled: bool,
    /// Scenario ids to run; all seven by default.
    pub ids: Option<Vec<u8>>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig { enabled: true, ids: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismName {
    None,
    Mcar,
    Mar,
    Mnar,
}

/// Synthetic-trial settings. Unlisted generator parameters keep their
/// library defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub wards_per_arm: usize,
    pub patients_per_ward: [usize; 2],
    pub delta_cost: f64,
    pub delta_qaly: f64,
    pub death_probability: f64,
    pub mechanism: MechanismName,
    /// Target share of missing follow-up utilities.
    pub missing_rate: f64,
    /// Logistic slope on the centred utility for MAR (baseline) or MNAR
    /// (own value).
    pub slope: f64,
    pub center: f64,
    pub baseline_missing: f64,
    pub cost_missing: f64,
    /// Defaults to the run seed.
    pub seed: Option<u64>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        let d = SimConfig::default();
        SimulateConfig {
            wards_per_arm: d.wards_per_arm,
            patients_per_ward: [d.patients_per_ward.0, d.patients_per_ward.1],
            delta_cost: d.delta_cost,
            delta_qaly: d.delta_qaly,
            death_probability: d.death_probability,
            mechanism: MechanismName::Mar,
            missing_rate: 0.3,
            slope: -2.0,
            center: d.utility_means[0],
            baseline_missing: 0.02,
            cost_missing: 0.02,
            seed: None,
        }
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl SimulateConfig {
    pub fn to_sim_config(&self, run_seed: u64) -> CliResult<SimConfig> {
        let rate = self.missing_rate;
        let needs_rate = self.mechanism != MechanismName::None;
        if needs_rate && !(rate > 0.0 && rate < 1.0) {
            return Err(CliError::Config(format!("simulate.missing_rate {rate} must lie in (0, 1)")));
        }
        let utility = match self.mechanism {
            MechanismName::None => Mechanism::Mcar { p: 0.0 },
            MechanismName::Mcar => Mechanism::Mcar { p: rate },
            MechanismName::Mar => Mechanism::Mar { intercept: logit(rate), slope: self.slope, center: self.center },
            MechanismName::Mnar => Mechanism::Mnar { intercept: logit(rate), slope: self.slope, center: self.center },
        };
        let missingness = match self.mechanism {
            MechanismName::None => MissingnessSpec::none(),
            _ => MissingnessSpec { utility, baseline_p: self.baseline_missing, cost_p: self.cost_missing },
        };
        let cfg = SimConfig {
            wards_per_arm: self.wards_per_arm,
            patients_per_ward: (self.patients_per_ward[0], self.patients_per_ward[1]),
            delta_cost: self.delta_cost,
            delta_qaly: self.delta_qaly,
            death_probability: self.death_probability,
            missingness,
            seed: self.seed.unwrap_or(run_seed),
            ..SimConfig::default()
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if cfg.base_dir.as_os_str().is_empty() {
            cfg.base_dir = PathBuf::from(".");
        }
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    /// Resolves a required input, checking that it exists.
    pub fn input(&self, which: &str, p: &Option<PathBuf>) -> CliResult<PathBuf> {
        let p = p.as_ref().ok_or_else(|| CliError::Config(format!("inputs.{which} is not set")))?;
        let full = self.resolve(p);
        if !full.is_file() {
            return Err(CliError::NotFound(full));
        }
        Ok(full)
    }

    /// Checks settings that do not involve files.
    pub fn validate(&self) -> CliResult<()> {
        let imp = &self.imputation;
        if imp.m.is_some_and(|m| m < 2) {
            return Err(CliError::Config("imputation.m must be at least 2".into()));
        }
        if !(0.0..=1.0).contains(&imp.resource_threshold) {
            return Err(CliError::Config("imputation.resource_threshold must lie in [0, 1]".into()));
        }
        if imp.pmm_donors == 0 || imp.cycles == 0 {
            return Err(CliError::Config("imputation.pmm_donors and cycles must be positive".into()));
        }
        self.covariate_spec()?;
        self.scenario_list()?;
        let probe = AnalysisSettings {
            thresholds: self.thresholds(),
            report_thresholds: self.analysis.report_thresholds.clone(),
            primary_threshold: self.analysis.primary_threshold,
            bootstrap_reps: self.analysis.bootstrap_reps,
            ..AnalysisSettings::new(
                CostRules { activities: ActivityTable(Vec::new()), imputable_resources: Vec::new() },
                empty_costs(),
                self.seed,
            )
        };
        probe.validate().map_err(|e| CliError::Config(e.to_string()))
    }

    /// Checks that every configured input file exists.
    pub fn validate_inputs(&self) -> CliResult<()> {
        self.input("routine", &self.inputs.routine)?;
        self.input("crf", &self.inputs.crf)?;
        self.input("wards", &self.inputs.wards)?;
        for p in [&self.inputs.valueset, &self.inputs.unit_costs].into_iter().flatten() {
            let full = self.resolve(p);
            if !full.is_file() {
                return Err(CliError::NotFound(full));
            }
        }
        Ok(())
    }

    pub fn thresholds(&self) -> Vec<f64> {
        self.analysis.thresholds.clone().unwrap_or_else(default_thresholds)
    }

    /// Reporting thresholds, always including the primary one.
    pub fn report_thresholds(&self) -> Vec<f64> {
        let mut t = self.analysis.report_thresholds.clone();
        if !t.contains(&self.analysis.primary_threshold) {
            t.push(self.analysis.primary_threshold);
            t.sort_by(f64::total_cmp);
        }
        t
    }

    pub fn covariate_spec(&self) -> CliResult<CovariateSpec> {
        match &self.analysis.covariates {
            None => Ok(CovariateSpec::default()),
            Some(names) => names
                .iter()
                .map(|n| Covariate::from_column(n).ok_or_else(|| CliError::Config(format!("unknown covariate {n}"))))
                .collect::<CliResult<Vec<_>>>()
                .map(|covariates| CovariateSpec { covariates }),
        }
    }

    pub fn scenario_list(&self) -> CliResult<Vec<MnarScenario>> {
        let all = scenario_table();
        match &self.scenarios.ids {
            None => Ok(all),
            Some(ids) => ids
                .iter()
                .map(|id| {
                    all.iter().find(|s| s.id == *id).copied().ok_or_else(|| CliError::Config(format!("unknown scenario {id}")))
                })
                .collect(),
        }
    }

    pub fn cost_family(&self) -> CostFamily {
        match self.analysis.cost_family {
            CostFamilyName::Gaussian => CostFamily::Gaussian,
            CostFamilyName::GammaLog => CostFamily::GammaLog,
        }
    }

    pub fn bootstrap_estimator(&self) -> BootstrapEstimator {
        match self.analysis.bootstrap_estimator {
            BootstrapName::Mixed => BootstrapEstimator::Mixed,
            BootstrapName::Sur => BootstrapEstimator::Sur,
        }
    }

    pub fn analysis_settings(&self, rules: CostRules, costs: UnitCostTable) -> CliResult<AnalysisSettings> {
        let mut s = AnalysisSettings::new(rules, costs, self.seed);
        s.covariates = self.covariate_spec()?;
        s.cost_family = self.cost_family();
        s.bootstrap_estimator = self.bootstrap_estimator();
        s.bootstrap_reps = self.analysis.bootstrap_reps;
        s.thresholds = self.thresholds();
        s.report_thresholds = self.report_thresholds();
        s.primary_threshold = self.analysis.primary_threshold;
        Ok(s)
    }

    pub fn imputation_spec(&self, variables: Vec<String>, m: usize) -> ImputationSpec {
        let imp = &self.imputation;
        ImputationSpec {
            variables,
            m,
            pmm_donors: imp.pmm_donors,
            cycles: imp.cycles,
            ridge: imp.ridge,
            seed: self.seed,
            min_observed: imp.min_observed,
        }
    }

    /// SHA-256 of the canonical JSON form, with the output location and
    /// worker count blanked because neither affects results.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output_dir = PathBuf::new();
        canon.analysis.workers = 0;
        let json = serde_json::to_string(&canon).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

fn empty_costs() -> UnitCostTable {
    UnitCostTable {
        currency_year: 0,
        resources: BTreeMap::new(),
        wages_per_minute: BTreeMap::new(),
        per_admission: 0.0,
        per_day: 0.0,
        charge_index_stay: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivityEntry {
    pub name: String,
    pub usual_minutes: f64,
    pub intervention_minutes: f64,
    pub staff: String,
}

/// Layout of the unit-cost TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitCostFile {
    pub currency_year: u16,
    pub per_admission: f64,
    pub per_day: f64,
    #[serde(default)]
    pub charge_index_stay: bool,
    pub wages_per_minute: BTreeMap<String, f64>,
    #[serde(default)]
    pub resources: BTreeMap<String, f64>,
    /// Intervention delivery schedule; the trial schedule when absent.
    #[serde(default)]
    pub activities: Option<Vec<ActivityEntry>>,
}

impl UnitCostFile {
    pub fn parse(text: &str, origin: &Path) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::format(origin, e.to_string()))
    }

    pub fn table(&self) -> UnitCostTable {
        UnitCostTable {
            currency_year: self.currency_year,
            resources: self.resources.clone(),
            wages_per_minute: self.wages_per_minute.clone(),
            per_admission: self.per_admission,
            per_day: self.per_day,
            charge_index_stay: self.charge_index_stay,
        }
    }

    pub fn activities(&self) -> ActivityTable {
        match &self.activities {
            None => ActivityTable::trial_default(),
            Some(list) => ActivityTable(
                list.iter()
                    .map(|a| Activity {
                        name: a.name.clone(),
                        usual_minutes: a.usual_minutes,
                        intervention_minutes: a.intervention_minutes,
                        staff: a.staff.clone(),
                    })
                    .collect(),
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_valid() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.seed, DEFAULT_SEED);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[analysis]\nbootstrap = 3").is_err());
    }

    #[test]
    fn hash_ignores_output_and_workers() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("elsewhere");
        b.analysis.workers = 7;
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn packaged_unit_costs_parse() {
        let f = UnitCostFile::parse(PACKAGED_UNIT_COSTS, Path::new("unit_costs.toml")).unwrap();
        f.table().validate().unwrap();
        assert_eq!(f.resources.len(), 12);
    }
}
