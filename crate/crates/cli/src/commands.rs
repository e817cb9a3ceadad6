//! Command implementations. Each command resolves the configuration, runs
//! its pipeline stages, writes stamped artifacts and a manifest, and returns
//! the paths it wrote.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crt_cea_core::decision::MnarScenario;
use crt_cea_core::logit::{fit_missingness_model, MissingnessModelFit};
use crt_cea_core::missing::{
    build_analysis_table, choose_imputation_count, classify_resources, impute_baseline_cluster_means, mice_by_arm,
    profile_missingness, AnalysisTable, CellMask, CellStatus, ColumnRole, ImputedSets, MissingnessReport,
    ResourceClassification, SeedEntry, COL_HOSPITALISATION, COL_UTILITY,
};
use crt_cea_core::outcomes::{complete_case_resource_table, CostRules, ValueSet};
use crt_cea_core::pipeline::{analyse_base_case, run_scenarios, AnalysisResult, AnalysisSettings};
use crt_cea_core::synth::{apply_missingness, generate_trial, GroundTruth};
use crt_cea_core::trial::{merge_datasets, Arm, CrfDataset, JoinReport, MergeOptions, MergedDataset, RoutineDataset};

use crate::config::{RunConfig, UnitCostFile, PACKAGED_UNIT_COSTS, PACKAGED_VALUESET};
use crate::csvio::{self, SkippedRow, Strictness};
use crate::error::{CliError, CliResult, StageExt};
use crate::export::{AnalysisJson, JoinJson, MissingnessJson, QuadrantSidecar, ScenariosJson, Stamp};
use crate::manifest::RunManifest;
use crate::parallel::Exec;
use crate::svg;

/// Flags shared by every command; each overrides the matching config value.
#[derive(Debug, Clone, Default)]
pub struct GlobalOptions {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub serial: bool,
    pub strict: bool,
}

/// A resolved run: configuration, provenance stamp and executor.
pub struct Run {
    pub cfg: RunConfig,
    pub stamp: Stamp,
    pub exec: Exec,
    pub out: PathBuf,
}

impl Run {
    pub fn new(opts: &GlobalOptions) -> CliResult<Self> {
        let mut cfg = match &opts.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = opts.seed {
            cfg.seed = seed;
        }
        if opts.strict {
            cfg.ingest.strict = true;
        }
        cfg.validate()?;
        let out = match &opts.out {
            Some(o) => o.clone(),
            None => cfg.output_dir(),
        };
        let exec = Exec::new(opts.serial, cfg.analysis.workers).map_err(|e| CliError::Config(e.to_string()))?;
        let stamp = Stamp { config_hash: cfg.hash(), seed: cfg.seed };
        Ok(Run { cfg, stamp, exec, out })
    }

    pub fn manifest(&self, command: &str) -> RunManifest {
        RunManifest::new(command, self.stamp.config_hash.clone(), self.stamp.seed, self.exec.workers())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn strictness(&self) -> Strictness {
        if self.cfg.ingest.strict {
            Strictness::Strict
        } else {
            Strictness::Lenient
        }
    }
}

/// Files written by a command, plus non-fatal notes for the user.
#[derive(Debug, Clone, Default)]
pub struct CommandOutput {
    pub files: Vec<PathBuf>,
    pub notes: Vec<String>,
}

impl CommandOutput {
    fn finish(mut self, run: &Run, mut manifest: RunManifest) -> CliResult<Self> {
        for f in &self.files {
            manifest.add_output(f.clone());
        }
        self.files.push(manifest.write(&run.out)?);
        Ok(self)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let json = serde_json::to_string_pretty(value).map_err(|e| CliError::format(path, e.to_string()))?;
    csvio::write_text(path, &(json + "\n"))
}

// ---------------------------------------------------------------------------
// Shared stages

pub struct Ingested {
    pub merged: MergedDataset,
    pub join: JoinReport,
    pub skipped: Vec<SkippedRow>,
    pub warnings: Vec<String>,
    pub valueset: ValueSet,
    pub unit_costs: UnitCostFile,
}

pub fn load_reference_data(run: &Run, manifest: &mut RunManifest) -> CliResult<(ValueSet, UnitCostFile)> {
    let valueset = match &run.cfg.inputs.valueset {
        Some(p) => {
            let p = run.cfg.resolve(p);
            manifest.add_input(&p)?;
            csvio::parse_valueset_csv(&p)?
        }
        None => {
            manifest.add_input_bytes("packaged:valueset_illustrative.csv", PACKAGED_VALUESET.as_bytes());
            csvio::parse_valueset(PACKAGED_VALUESET.as_bytes(), Path::new("packaged:valueset_illustrative.csv"))?
        }
    };
    let unit_costs = match &run.cfg.inputs.unit_costs {
        Some(p) => {
            let p = run.cfg.resolve(p);
            manifest.add_input(&p)?;
            let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
            UnitCostFile::parse(&text, &p)?
        }
        None => {
            manifest.add_input_bytes("packaged:unit_costs.toml", PACKAGED_UNIT_COSTS.as_bytes());
            UnitCostFile::parse(PACKAGED_UNIT_COSTS, Path::new("packaged:unit_costs.toml"))?
        }
    };
    unit_costs.table().validate().stage("unit costs")?;
    Ok((valueset, unit_costs))
}

pub fn ingest(run: &Run, manifest: &mut RunManifest) -> CliResult<Ingested> {
    run.cfg.validate_inputs()?;
    let inputs = &run.cfg.inputs;
    let routine_path = run.cfg.input("routine", &inputs.routine)?;
    let crf_path = run.cfg.input("crf", &inputs.crf)?;
    let wards_path = run.cfg.input("wards", &inputs.wards)?;
    for p in [&routine_path, &crf_path, &wards_path] {
        manifest.add_input(p)?;
    }
    let strict = run.strictness();
    let routine = csvio::parse_routine_csv(&routine_path, strict)?;
    let crf = csvio::parse_crf_csv(&crf_path, strict)?;
    let wards = csvio::parse_wards_csv(&wards_path, strict)?;
    let (valueset, unit_costs) = load_reference_data(run, manifest)?;

    let mut skipped = routine.skipped;
    skipped.extend(crf.skipped);
    skipped.extend(wards.skipped);
    let warnings = crf.warnings;

    let routine = RoutineDataset::new(routine.records, wards.records).stage("ingest")?;
    let crf = CrfDataset::new(crf.records).stage("ingest")?;
    let options = MergeOptions { include_early_decedents: run.cfg.ingest.include_early_decedents };
    let (merged, join) = merge_datasets(&routine, &crf, options).stage("merge")?;
    Ok(Ingested { merged, join, skipped, warnings, valueset, unit_costs })
}

/// Everything needed before chained imputation.
pub struct Prepared {
    pub ingested: Ingested,
    pub report: MissingnessReport,
    pub classes: ResourceClassification,
    /// Analysis table with baseline values completed.
    pub table: AnalysisTable,
    pub baseline_notes: Vec<String>,
    pub m: usize,
}

impl Prepared {
    /// Resources costed in the totals, other than hospitalisation.
    pub fn counted_resources(&self) -> Vec<String> {
        self.classes.imputable.iter().filter(|r| *r != COL_HOSPITALISATION).cloned().collect()
    }

    pub fn cost_rules(&self) -> CostRules {
        CostRules { activities: self.ingested.unit_costs.activities(), imputable_resources: self.counted_resources() }
    }

    pub fn imputation_variables(&self) -> Vec<String> {
        let mut v: Vec<String> = COL_UTILITY[1..].iter().map(|s| s.to_string()).collect();
        v.push(COL_HOSPITALISATION.to_string());
        v.extend(self.counted_resources());
        v
    }

    pub fn settings(&self, run: &Run) -> CliResult<AnalysisSettings> {
        run.cfg.analysis_settings(self.cost_rules(), self.ingested.unit_costs.table())
    }
}

pub fn prepare(run: &Run, manifest: &mut RunManifest) -> CliResult<Prepared> {
    let ingested = manifest.time("ingest", |m| ingest(run, m))?;
    manifest.time("profile", |_| {
        let report = profile_missingness(&ingested.merged);
        let classes = classify_resources(&report, None, run.cfg.imputation.resource_threshold).stage("missingness")?;
        if classes.complete_case_only.iter().any(|r| r == COL_HOSPITALISATION) {
            return Err(CliError::Config(
                "hospitalisation cost is missing too often to impute; total costs cannot be formed".into(),
            ));
        }
        let resources: Vec<String> = classes.imputable.iter().filter(|r| *r != COL_HOSPITALISATION).cloned().collect();
        let raw = build_analysis_table(&ingested.merged, Some(&ingested.valueset), &ingested.unit_costs.table(), &resources)
            .stage("analysis table")?;
        let baseline = impute_baseline_cluster_means(&raw).stage("baseline imputation")?;
        let m = run.cfg.imputation.m.unwrap_or_else(|| choose_imputation_count(&report));
        Ok(Prepared { ingested, report, classes, table: baseline.table, baseline_notes: baseline.fallbacks, m })
    })
}

pub fn impute(run: &Run, prepared: &Prepared, manifest: &mut RunManifest) -> CliResult<ImputedSets> {
    manifest.time("impute", |_| {
        let spec = run.cfg.imputation_spec(prepared.imputation_variables(), prepared.m);
        mice_by_arm(&prepared.table, &spec, &run.exec).stage("imputation")
    })
}

fn role_code(r: ColumnRole) -> &'static str {
    match r {
        ColumnRole::Covariate => "covariate",
        ColumnRole::Utility => "utility",
        ColumnRole::Cost => "cost",
        ColumnRole::Count => "count",
    }
}

fn role_from_code(s: &str) -> Option<ColumnRole> {
    Some(match s {
        "covariate" => ColumnRole::Covariate,
        "utility" => ColumnRole::Utility,
        "cost" => ColumnRole::Cost,
        "count" => ColumnRole::Count,
        _ => return None,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MaskColumn {
    name: String,
    role: String,
    status: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MaskSeed {
    arm: String,
    imputation: usize,
    seed: u64,
}

/// Sidecar describing a directory of imputed datasets.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct MaskFile {
    config_hash: String,
    seed: u64,
    imputations: usize,
    files: Vec<String>,
    ward_ids: Vec<String>,
    columns: Vec<MaskColumn>,
    seeds: Vec<MaskSeed>,
    diagnostics: Vec<String>,
}

fn imputation_file(k: usize) -> String {
    format!("imputation_{:02}.csv", k + 1)
}

pub fn write_imputations(run: &Run, sets: &ImputedSets, dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut files = Vec::new();
    let comments = run.stamp.comments();
    for (k, table) in sets.datasets.iter().enumerate() {
        let p = dir.join(imputation_file(k));
        csvio::write_table_csv(&p, table, &comments)?;
        files.push(p);
    }
    let first = &sets.datasets[0];
    let mask = sets.mask.clone().unwrap_or_else(|| first.mask());
    let file = MaskFile {
        config_hash: run.stamp.config_hash.clone(),
        seed: sets.master_seed,
        imputations: sets.m(),
        files: (0..sets.m()).map(imputation_file).collect(),
        ward_ids: first.ward_ids.clone(),
        columns: first
            .columns
            .iter()
            .map(|c| MaskColumn {
                name: c.name.clone(),
                role: role_code(c.role).to_string(),
                status: mask.column(&c.name).unwrap_or(&c.status).iter().map(|s| s.code().to_string()).collect(),
            })
            .collect(),
        seeds: sets
            .seeds
            .iter()
            .map(|s| MaskSeed { arm: s.arm.label().to_string(), imputation: s.imputation + 1, seed: s.seed })
            .collect(),
        diagnostics: sets.diagnostics.clone(),
    };
    let p = dir.join("mask.json");
    write_json(&p, &file)?;
    files.push(p);
    Ok(files)
}

/// Reads imputed datasets written by [`write_imputations`]. Returns the
/// sets and the config hash they were produced under.
pub fn read_imputations(dir: &Path, manifest: &mut RunManifest) -> CliResult<(ImputedSets, String)> {
    let mask_path = dir.join("mask.json");
    let text = std::fs::read_to_string(&mask_path).map_err(|e| CliError::io(&mask_path, e))?;
    manifest.add_input(&mask_path)?;
    let file: MaskFile = serde_json::from_str(&text).map_err(|e| CliError::format(&mask_path, e.to_string()))?;
    let bad = |m: String| CliError::format(&mask_path, m);
    let mut roles = Vec::new();
    let mut status = Vec::new();
    for c in &file.columns {
        let role = role_from_code(&c.role).ok_or_else(|| bad(format!("unknown role {}", c.role)))?;
        let st = c
            .status
            .iter()
            .map(|s| CellStatus::from_code(s).ok_or_else(|| bad(format!("unknown cell status {s}"))))
            .collect::<CliResult<Vec<_>>>()?;
        roles.push((c.name.clone(), role));
        status.push((c.name.clone(), st));
    }
    let mut datasets = Vec::with_capacity(file.files.len());
    for name in &file.files {
        let p = dir.join(name);
        manifest.add_input(&p)?;
        datasets.push(csvio::read_table_csv(&p, &file.ward_ids, &roles, &status)?);
    }
    if datasets.len() != file.imputations {
        return Err(bad(format!("expected {} imputed files, found {}", file.imputations, datasets.len())));
    }
    let seeds = file
        .seeds
        .iter()
        .map(|s| {
            let arm = match s.arm.as_str() {
                "control" => Arm::Control,
                "intervention" => Arm::Intervention,
                other => return Err(bad(format!("unknown arm {other}"))),
            };
            Ok(SeedEntry { arm, imputation: s.imputation.saturating_sub(1), seed: s.seed })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let sets = ImputedSets {
        datasets,
        mask: Some(CellMask { columns: status }),
        master_seed: file.seed,
        seeds,
        diagnostics: file.diagnostics,
    };
    Ok((sets, file.config_hash))
}

/// Imputed sets and analysis settings, imputing inline unless a directory of
/// precomputed sets is given.
fn imputed_inputs(
    run: &Run,
    imputations: Option<&Path>,
    manifest: &mut RunManifest,
    notes: &mut Vec<String>,
) -> CliResult<(ImputedSets, AnalysisSettings)> {
    let prepared = prepare(run, manifest)?;
    let settings = prepared.settings(run)?;
    let sets = match imputations {
        Some(dir) => {
            let (sets, hash) = read_imputations(dir, manifest)?;
            if hash != run.stamp.config_hash {
                notes.push(format!(
                    "imputations in {} were produced under config {hash}, current config is {}",
                    dir.display(),
                    run.stamp.config_hash
                ));
            }
            sets
        }
        None => impute(run, &prepared, manifest)?,
    };
    notes.extend(sets.diagnostics.iter().cloned());
    Ok((sets, settings))
}

// ---------------------------------------------------------------------------
// Commands

pub fn cmd_ingest(run: &Run) -> CliResult<CommandOutput> {
    let mut manifest = run.manifest("ingest");
    let ing = manifest.time("ingest", |m| ingest(run, m))?;
    let mut out = CommandOutput::default();
    let merged_path = run.path("merged.csv");
    csvio::write_merged_csv(&merged_path, &ing.merged, &run.stamp.comments())?;
    let report_path = run.path("report.json");
    let json = JoinJson::new(run.stamp.clone(), &ing.join, ing.skipped.clone(), ing.warnings.clone());
    write_json(&report_path, &json)?;
    out.notes.extend(ing.skipped.iter().map(|s| format!("skipped {}:{}: {}", s.file, s.line, s.reason)));
    out.notes.extend(ing.warnings.iter().cloned());
    out.files = vec![merged_path, report_path];
    out.finish(run, manifest)
}

pub fn missingness_json(run: &Run, prepared: &Prepared) -> MissingnessJson {
    let mut models: Vec<MissingnessModelFit> = Vec::new();
    let mut errors = Vec::new();
    for t in 1..=3 {
        match fit_missingness_model(&prepared.table, t) {
            Ok(f) => models.push(f),
            Err(e) => errors.push(format!("{}: {e}", COL_UTILITY[t])),
        }
    }
    let usage = complete_case_resource_table(&prepared.ingested.merged, &prepared.classes.complete_case_only);
    MissingnessJson::new(
        run.stamp.clone(),
        &prepared.report,
        choose_imputation_count(&prepared.report),
        &prepared.classes,
        &usage,
        &models,
        errors,
    )
}

pub fn cmd_missing(run: &Run) -> CliResult<CommandOutput> {
    let mut manifest = run.manifest("missing");
    let prepared = prepare(run, &mut manifest)?;
    let json = manifest.time("missingness models", |_| Ok(missingness_json(run, &prepared)))?;
    let mut out = CommandOutput::default();
    let jp = run.path("missingness.json");
    write_json(&jp, &json)?;
    let tp = run.path("missingness.txt");
    csvio::write_text(&tp, &json.text())?;
    out.notes.extend(json.model_errors.iter().cloned());
    out.notes.extend(prepared.baseline_notes.iter().cloned());
    out.files = vec![jp, tp];
    out.finish(run, manifest)
}

pub fn cmd_impute(run: &Run) -> CliResult<CommandOutput> {
    let mut manifest = run.manifest("impute");
    let prepared = prepare(run, &mut manifest)?;
    let sets = impute(run, &prepared, &mut manifest)?;
    let mut out = CommandOutput { notes: sets.diagnostics.clone(), ..Default::default() };
    out.files = write_imputations(run, &sets, &run.path("imputations"))?;
    out.finish(run, manifest)
}

fn write_plane_and_curve(run: &Run, result: &AnalysisResult, files: &mut Vec<PathBuf>) -> CliResult<()> {
    let comments = run.stamp.comments();
    let plane = run.path("ce_plane.csv");
    let header: Vec<String> = ["scenario", "m", "b", "delta_e", "delta_c"].map(String::from).to_vec();
    let scenario = result.scenario.id.to_string();
    let rows: Vec<Vec<String>> = result
        .cloud
        .points
        .iter()
        .map(|p| vec![scenario.clone(), (p.m + 1).to_string(), (p.b + 1).to_string(), p.delta_e.to_string(), p.delta_c.to_string()])
        .collect();
    csvio::write_csv(&plane, &comments, &header, &rows)?;
    let side = run.path("ce_plane_quadrants.json");
    write_json(
        &side,
        &QuadrantSidecar { stamp: run.stamp.clone(), points: result.cloud.len(), quadrants: (&result.quadrants).into() },
    )?;
    let curve = run.path("ceac.csv");
    let rows: Vec<Vec<String>> =
        result.ceac.points.iter().map(|(l, p)| vec![l.to_string(), p.to_string()]).collect();
    csvio::write_csv(&curve, &comments, &["lambda".into(), "probability".into()], &rows)?;
    let plane_svg = run.path("ce_plane.svg");
    let pts: Vec<(f64, f64)> = result.cloud.points.iter().map(|p| (p.delta_c, p.delta_e)).collect();
    csvio::write_text(&plane_svg, &svg::ce_plane(&pts, result.decision.threshold))?;
    let curve_svg = run.path("ceac.svg");
    csvio::write_text(&curve_svg, &svg::ceac(&result.ceac.points))?;
    files.extend([plane, side, curve, plane_svg, curve_svg]);
    Ok(())
}

fn write_analysis(run: &Run, result: &AnalysisResult, files: &mut Vec<PathBuf>) -> CliResult<()> {
    let jp = run.path("pooled_estimates.json");
    write_json(&jp, &AnalysisJson::new(run.stamp.clone(), result))?;
    let tp = run.path("pooled_estimates.txt");
    csvio::write_text(&tp, &crate::export::analysis_text(result))?;
    files.extend([jp, tp]);
    write_plane_and_curve(run, result, files)
}

/// Runs the base-case analysis and returns the result without writing it.
pub fn base_case(run: &Run, imputations: Option<&Path>, manifest: &mut RunManifest) -> CliResult<(AnalysisResult, Vec<String>)> {
    let mut notes = Vec::new();
    let (sets, settings) = imputed_inputs(run, imputations, manifest, &mut notes)?;
    let result = manifest.time("analyse", |_| analyse_base_case(&sets, &settings, &run.exec).stage("analysis"))?;
    Ok((result, notes))
}

pub fn cmd_analyze(run: &Run, imputations: Option<&Path>) -> CliResult<CommandOutput> {
    let mut manifest = run.manifest("analyze");
    let (result, notes) = base_case(run, imputations, &mut manifest)?;
    let mut out = CommandOutput { notes, ..Default::default() };
    write_analysis(run, &result, &mut out.files)?;
    out.finish(run, manifest)
}

pub fn cmd_ceac(run: &Run, imputations: Option<&Path>) -> CliResult<CommandOutput> {
    let mut manifest = run.manifest("ceac");
    let (result, notes) = base_case(run, imputations, &mut manifest)?;
    let mut out = CommandOutput { notes, ..Default::default() };
    write_plane_and_curve(run, &result, &mut out.files)?;
    out.finish(run, manifest)
}

fn scenarios_for(run: &Run) -> CliResult<Vec<MnarScenario>> {
    if !run.cfg.scenarios.enabled {
        return Err(CliError::Config("scenarios are disabled in the configuration".into()));
    }
    run.cfg.scenario_list()
}

fn write_scenarios(run: &Run, results: &[AnalysisResult], files: &mut Vec<PathBuf>) -> CliResult<()> {
    let json = ScenariosJson::new(run.stamp.clone(), results);
    let jp = run.path("scenarios.json");
    write_json(&jp, &json)?;
    let tp = run.path("scenarios.txt");
    csvio::write_text(&tp, &json.text())?;
    files.extend([jp, tp]);
    Ok(())
}

pub fn cmd_mnar(run: &Run, imputations: Option<&Path>) -> CliResult<CommandOutput> {
    let mut manifest = run.manifest("mnar");
    let scenarios = scenarios_for(run)?;
    let mut notes = Vec::new();
    let (sets, settings) = imputed_inputs(run, imputations, &mut manifest, &mut notes)?;
    let results =
        manifest.time("scenarios", |_| run_scenarios(&sets, &settings, &scenarios, &run.exec).stage("scenarios"))?;
    let mut out = CommandOutput { notes, ..Default::default() };
    write_scenarios(run, &results, &mut out.files)?;
    out.finish(run, manifest)
}

#[derive(Debug, Clone, Serialize)]
struct TruthJson {
    #[serde(flatten)]
    stamp: Stamp,
    delta_cost: f64,
    delta_qaly: f64,
    utility_shift: f64,
    admission_rate_control: f64,
    admission_rate_intervention: f64,
    sample_delta_cost: f64,
    sample_delta_qaly: f64,
    net_benefit: Vec<TruthNetBenefit>,
    patients: usize,
    deleted_cells: usize,
}

#[derive(Debug, Clone, Serialize)]
struct TruthNetBenefit {
    threshold: f64,
    nhb: f64,
    nmb: f64,
}

pub fn cmd_simulate(run: &Run) -> CliResult<CommandOutput> {
    let mut manifest = run.manifest("simulate");
    let sim = run.cfg.simulate.to_sim_config(run.cfg.seed)?;
    let (merged, truth, deletions) = manifest.time("simulate", |_| {
        let (complete, truth): (MergedDataset, GroundTruth) = generate_trial(&sim).stage("simulate")?;
        let (holed, deletions) = apply_missingness(&complete, &sim.missingness, sim.seed).stage("simulate")?;
        Ok((holed, truth, deletions))
    })?;
    let dir = run.path("simulated");
    let (routine, crf) = merged.to_sources();
    let mut files = Vec::new();
    let p = dir.join("routine.csv");
    csvio::write_routine_csv(&p, &routine.records)?;
    files.push(p);
    let p = dir.join("crf.csv");
    csvio::write_crf_csv(&p, &crf.records)?;
    files.push(p);
    let p = dir.join("wards.csv");
    csvio::write_wards_csv(&p, &routine.wards)?;
    files.push(p);

    let costs = sim.unit_costs();
    let cost_file = UnitCostFile {
        currency_year: costs.currency_year,
        per_admission: costs.per_admission,
        per_day: costs.per_day,
        charge_index_stay: costs.charge_index_stay,
        wages_per_minute: costs.wages_per_minute.clone(),
        resources: costs.resources.clone(),
        activities: None,
    };
    let p = dir.join("unit_costs.toml");
    csvio::write_text(&p, &toml::to_string(&cost_file).map_err(|e| CliError::Config(e.to_string()))?)?;
    files.push(p);

    let config = format!(
        "# Analysis configuration for the simulated trial.\nseed = {}\noutput_dir = \"results\"\n\n[inputs]\nroutine = \"routine.csv\"\ncrf = \"crf.csv\"\nwards = \"wards.csv\"\nunit_costs = \"unit_costs.toml\"\n",
        run.cfg.seed
    );
    let p = dir.join("config.toml");
    csvio::write_text(&p, &config)?;
    files.push(p);

    let p = dir.join("deletions.csv");
    let rows: Vec<Vec<String>> = deletions.iter().map(|d| vec![d.patient_id.clone(), d.variable.clone()]).collect();
    csvio::write_csv(&p, &run.stamp.comments(), &["patient_id".into(), "variable".into()], &rows)?;
    files.push(p);

    let truth_json = TruthJson {
        stamp: run.stamp.clone(),
        delta_cost: truth.delta_cost,
        delta_qaly: truth.delta_qaly,
        utility_shift: truth.utility_shift,
        admission_rate_control: truth.admission_rates[0],
        admission_rate_intervention: truth.admission_rates[1],
        sample_delta_cost: truth.sample_delta_cost,
        sample_delta_qaly: truth.sample_delta_qaly,
        net_benefit: run
            .cfg
            .analysis
            .report_thresholds
            .iter()
            .map(|&l| TruthNetBenefit { threshold: l, nhb: truth.nhb(l), nmb: truth.nmb(l) })
            .collect(),
        patients: merged.len(),
        deleted_cells: deletions.len(),
    };
    let p = dir.join("ground_truth.json");
    write_json(&p, &truth_json)?;
    files.push(p);
    CommandOutput { files, notes: Vec::new() }.finish(run, manifest)
}

/// Runs every stage and writes all artifacts to one directory.
pub fn cmd_report(run: &Run) -> CliResult<CommandOutput> {
    let mut manifest = run.manifest("report");
    let prepared = prepare(run, &mut manifest)?;
    let mut out = CommandOutput::default();

    let merged_path = run.path("merged.csv");
    csvio::write_merged_csv(&merged_path, &prepared.ingested.merged, &run.stamp.comments())?;
    let report_path = run.path("report.json");
    let ing = &prepared.ingested;
    write_json(&report_path, &JoinJson::new(run.stamp.clone(), &ing.join, ing.skipped.clone(), ing.warnings.clone()))?;
    out.files.extend([merged_path, report_path]);

    let miss = manifest.time("missingness models", |_| Ok(missingness_json(run, &prepared)))?;
    let jp = run.path("missingness.json");
    write_json(&jp, &miss)?;
    let tp = run.path("missingness.txt");
    csvio::write_text(&tp, &miss.text())?;
    out.files.extend([jp, tp]);

    let sets = impute(run, &prepared, &mut manifest)?;
    out.files.extend(write_imputations(run, &sets, &run.path("imputations"))?);
    out.notes.extend(sets.diagnostics.iter().cloned());

    let settings = prepared.settings(run)?;
    let base = manifest.time("analyse", |_| analyse_base_case(&sets, &settings, &run.exec).stage("analysis"))?;
    write_analysis(run, &base, &mut out.files)?;

    if run.cfg.scenarios.enabled {
        let scenarios = run.cfg.scenario_list()?;
        // Scenario 1 is the base case; reuse it rather than recomputing.
        let rest: Vec<MnarScenario> = scenarios.iter().filter(|s| !s.is_identity()).copied().collect();
        let others =
            manifest.time("scenarios", |_| run_scenarios(&sets, &settings, &rest, &run.exec).stage("scenarios"))?;
        let mut results = Vec::with_capacity(scenarios.len());
        let mut it = others.into_iter();
        for s in &scenarios {
            if s.is_identity() {
                let mut r = base.clone();
                r.scenario = *s;
                results.push(r);
            } else {
                results.push(it.next().expect("one result per scenario"));
            }
        }
        write_scenarios(run, &results, &mut out.files)?;
    }
    out.finish(run, manifest)
}
