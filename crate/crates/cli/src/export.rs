//! Serialisable report structures and plain-text tables.

use std::fmt::Write as _;

use serde::Serialize;

use crt_cea_core::decision::{Icer, MnarScenario};
use crt_cea_core::logit::MissingnessModelFit;
use crt_cea_core::missing::{MissingnessReport, ResourceClassification, VariableGroup};
use crt_cea_core::outcomes::CompleteCaseRow;
use crt_cea_core::pipeline::{AnalysisResult, EndpointReport, EstimatorReport};
use crt_cea_core::trial::{Arm, JoinReport, TIMEPOINT_DAYS};
use crt_cea_core::uncertainty::{PooledEstimate, QuadrantSummary};

use crate::csvio::SkippedRow;

/// Provenance stamped into every artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Stamp {
    pub config_hash: String,
    pub seed: u64,
}

impl Stamp {
    pub fn comments(&self) -> Vec<(&'static str, String)> {
        vec![("config_hash", self.config_hash.clone()), ("seed", self.seed.to_string())]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct JoinJson {
    #[serde(flatten)]
    pub stamp: Stamp,
    pub routine_count: usize,
    pub crf_count: usize,
    pub merged_count: usize,
    pub ward_count: usize,
    pub patients_control: usize,
    pub patients_intervention: usize,
    pub wards_control: usize,
    pub wards_intervention: usize,
    pub unmatched_routine: Vec<String>,
    pub unmatched_crf: Vec<String>,
    pub dropped_early_decedents: Vec<String>,
    pub skipped_rows: Vec<SkippedRow>,
    pub warnings: Vec<String>,
}

impl JoinJson {
    pub fn new(stamp: Stamp, r: &JoinReport, skipped_rows: Vec<SkippedRow>, warnings: Vec<String>) -> Self {
        JoinJson {
            stamp,
            routine_count: r.routine_count,
            crf_count: r.crf_count,
            merged_count: r.merged_count,
            ward_count: r.ward_count,
            patients_control: r.per_arm[0],
            patients_intervention: r.per_arm[1],
            wards_control: r.wards_per_arm[0],
            wards_intervention: r.wards_per_arm[1],
            unmatched_routine: r.unmatched_routine.clone(),
            unmatched_crf: r.unmatched_crf.clone(),
            dropped_early_decedents: r.dropped_early_decedents.clone(),
            skipped_rows,
            warnings,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VariableJson {
    pub name: String,
    pub label: String,
    pub group: &'static str,
    pub missing: usize,
    pub total: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Eq5dArmJson {
    pub day: u32,
    pub missing_control: usize,
    pub total_control: usize,
    pub missing_intervention: usize,
    pub total_intervention: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelJson {
    pub day: u32,
    pub n_obs: usize,
    pub n_missing: usize,
    pub n_clusters: usize,
    pub cluster_variance: f64,
    pub loglik: f64,
    pub terms: Vec<TermJson>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TermJson {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct UsageJson {
    pub resource: String,
    pub n_control: usize,
    pub percent_control: Option<f64>,
    pub n_intervention: usize,
    pub percent_intervention: Option<f64>,
    pub n_total: usize,
    pub percent_total: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MissingnessJson {
    #[serde(flatten)]
    pub stamp: Stamp,
    pub patients: usize,
    pub incomplete_case_percent: f64,
    pub chosen_imputations: usize,
    pub variables: Vec<VariableJson>,
    pub eq5d_by_arm: Vec<Eq5dArmJson>,
    pub complete_followup: usize,
    pub monotone: usize,
    pub non_monotone: usize,
    pub imputable_resources: Vec<String>,
    pub complete_case_only: Vec<String>,
    pub complete_case_usage: Vec<UsageJson>,
    pub models: Vec<ModelJson>,
    pub model_errors: Vec<String>,
}

fn group_name(g: VariableGroup) -> &'static str {
    match g {
        VariableGroup::Baseline => "baseline",
        VariableGroup::QualityOfLife => "quality_of_life",
        VariableGroup::Resource => "resource",
    }
}

impl MissingnessJson {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        stamp: Stamp,
        report: &MissingnessReport,
        chosen_imputations: usize,
        classes: &ResourceClassification,
        usage: &[CompleteCaseRow],
        models: &[MissingnessModelFit],
        model_errors: Vec<String>,
    ) -> Self {
        MissingnessJson {
            stamp,
            patients: report.patients,
            incomplete_case_percent: report.incomplete_case_percent(),
            chosen_imputations,
            variables: report
                .variables
                .iter()
                .map(|v| VariableJson {
                    name: v.name.clone(),
                    label: v.label.clone(),
                    group: group_name(v.group),
                    missing: v.missing,
                    total: v.total,
                    percent: v.percent(),
                })
                .collect(),
            eq5d_by_arm: (0..4)
                .map(|t| Eq5dArmJson {
                    day: TIMEPOINT_DAYS[t],
                    missing_control: report.eq5d_by_arm[0][t].0,
                    total_control: report.eq5d_by_arm[0][t].1,
                    missing_intervention: report.eq5d_by_arm[1][t].0,
                    total_intervention: report.eq5d_by_arm[1][t].1,
                })
                .collect(),
            complete_followup: report.patterns.complete,
            monotone: report.patterns.monotone,
            non_monotone: report.patterns.non_monotone,
            imputable_resources: classes.imputable.clone(),
            complete_case_only: classes.complete_case_only.clone(),
            complete_case_usage: usage
                .iter()
                .map(|r| UsageJson {
                    resource: r.resource.clone(),
                    n_control: r.by_arm[Arm::Control.index()].n,
                    percent_control: r.by_arm[Arm::Control.index()].percent_using,
                    n_intervention: r.by_arm[Arm::Intervention.index()].n,
                    percent_intervention: r.by_arm[Arm::Intervention.index()].percent_using,
                    n_total: r.total.n,
                    percent_total: r.total.percent_using,
                })
                .collect(),
            models: models
                .iter()
                .map(|m| {
                    let z = m.fit.z_statistics();
                    ModelJson {
                        day: m.timepoint_day,
                        n_obs: m.fit.n_obs,
                        n_missing: m.n_missing,
                        n_clusters: m.fit.n_clusters,
                        cluster_variance: m.fit.cluster_variance,
                        loglik: m.fit.loglik,
                        terms: (0..m.fit.names.len())
                            .map(|k| TermJson {
                                name: m.fit.names[k].clone(),
                                estimate: m.fit.beta[k],
                                std_error: m.fit.std_errors[k],
                                z: z[k],
                            })
                            .collect(),
                    }
                })
                .collect(),
            model_errors,
        }
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Missing data ({} patients)", self.patients);
        let _ = writeln!(s, "{:<34} {:>8} {:>9}", "Variable", "Missing", "Percent");
        for v in &self.variables {
            let _ = writeln!(s, "{:<34} {:>8} {:>8.2}%", v.label, v.missing, v.percent);
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "Incomplete cases: {:.2}% -> {} imputations", self.incomplete_case_percent, self.chosen_imputations);
        let _ = writeln!(
            s,
            "Follow-up patterns: {} complete, {} monotone, {} non-monotone",
            self.complete_followup, self.monotone, self.non_monotone
        );
        let _ = writeln!(s, "Imputed resources: {}", self.imputable_resources.join(", "));
        let _ = writeln!(s, "Complete-case only: {}", self.complete_case_only.join(", "));
        for m in &self.models {
            let _ = writeln!(s);
            let _ = writeln!(
                s,
                "Missing utility at day {} ({} of {} missing, ward variance {:.4})",
                m.day, m.n_missing, m.n_obs, m.cluster_variance
            );
            for t in &m.terms {
                let _ = writeln!(s, "  {:<26} {:>10.4} {:>10.4} {:>8.2}", t.name, t.estimate, t.std_error, t.z);
            }
        }
        for e in &self.model_errors {
            let _ = writeln!(s, "model not fitted: {e}");
        }
        s
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PooledJson {
    pub estimate: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub within: f64,
    pub between: f64,
    pub total: f64,
    pub df: Option<f64>,
}

impl From<&PooledEstimate> for PooledJson {
    fn from(p: &PooledEstimate) -> Self {
        PooledJson {
            estimate: p.point,
            se: p.se(),
            ci_low: p.ci_low,
            ci_high: p.ci_high,
            within: p.within,
            between: p.between,
            total: p.total,
            df: p.df.is_finite().then_some(p.df),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EndpointJson {
    pub mean_control: f64,
    pub mean_intervention: f64,
    pub difference: PooledJson,
}

impl From<&EndpointReport> for EndpointJson {
    fn from(e: &EndpointReport) -> Self {
        EndpointJson {
            mean_control: e.mean_control,
            mean_intervention: e.mean_intervention,
            difference: (&e.difference).into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NetBenefitJson {
    pub threshold: f64,
    pub nhb: PooledJson,
    pub nmb: PooledJson,
    pub prob_cost_effective: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimatorJson {
    pub cost: EndpointJson,
    pub qaly: EndpointJson,
    pub icer: String,
    pub icer_value: Option<f64>,
    pub net_benefit: Vec<NetBenefitJson>,
}

impl From<&EstimatorReport> for EstimatorJson {
    fn from(r: &EstimatorReport) -> Self {
        EstimatorJson {
            cost: (&r.cost).into(),
            qaly: (&r.qaly).into(),
            icer: icer_text(&r.icer),
            icer_value: r.icer.ratio(),
            net_benefit: r
                .net_benefit
                .iter()
                .map(|n| NetBenefitJson {
                    threshold: n.threshold,
                    nhb: (&n.nhb).into(),
                    nmb: (&n.nmb).into(),
                    prob_cost_effective: n.prob_cost_effective,
                })
                .collect(),
        }
    }
}

pub fn icer_text(i: &Icer) -> String {
    i.label()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScenarioJson {
    pub id: u8,
    pub c_control: f64,
    pub c_intervention: f64,
}

impl From<&MnarScenario> for ScenarioJson {
    fn from(s: &MnarScenario) -> Self {
        ScenarioJson { id: s.id, c_control: s.c_control, c_intervention: s.c_intervention }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct QuadrantJson {
    pub north_east: f64,
    pub north_west: f64,
    pub south_east: f64,
    pub south_west: f64,
    pub on_axis: f64,
}

impl From<&QuadrantSummary> for QuadrantJson {
    fn from(q: &QuadrantSummary) -> Self {
        QuadrantJson {
            north_east: q.north_east,
            north_west: q.north_west,
            south_east: q.south_east,
            south_west: q.south_west,
            on_axis: q.on_axis,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DecisionJson {
    pub delta_c: f64,
    pub delta_e: f64,
    pub icer: String,
    pub icer_value: Option<f64>,
    pub threshold: f64,
    pub nhb: f64,
    pub nmb: f64,
    pub prob_cost_effective: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ImputationDiagnosticsJson {
    pub imputation: usize,
    pub mixed_delta_c: f64,
    pub mixed_delta_e: f64,
    pub sur_delta_c: f64,
    pub sur_delta_e: f64,
    pub sigma2_u_cost: Option<f64>,
    pub sigma2_u_qaly: Option<f64>,
    pub boundary_cost: bool,
    pub boundary_qaly: bool,
    pub sur_iterations: usize,
    pub sur_converged: bool,
    pub bootstrap_redraws: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisJson {
    #[serde(flatten)]
    pub stamp: Stamp,
    pub scenario: ScenarioJson,
    pub imputations: usize,
    pub bootstrap_reps: usize,
    pub mixed: EstimatorJson,
    pub sur: EstimatorJson,
    pub decision: DecisionJson,
    pub quadrants: QuadrantJson,
    pub per_imputation: Vec<ImputationDiagnosticsJson>,
}

impl AnalysisJson {
    pub fn new(stamp: Stamp, r: &AnalysisResult) -> Self {
        AnalysisJson {
            stamp,
            scenario: (&r.scenario).into(),
            imputations: r.m,
            bootstrap_reps: r.bootstrap_reps,
            mixed: (&r.mixed).into(),
            sur: (&r.sur).into(),
            decision: DecisionJson {
                delta_c: r.decision.delta_c,
                delta_e: r.decision.delta_e,
                icer: icer_text(&r.decision.icer),
                icer_value: r.decision.icer.ratio(),
                threshold: r.decision.threshold,
                nhb: r.decision.nhb,
                nmb: r.decision.nmb,
                prob_cost_effective: r.decision.prob_cost_effective,
            },
            quadrants: (&r.quadrants).into(),
            per_imputation: r
                .per_imputation
                .iter()
                .enumerate()
                .map(|(k, d)| ImputationDiagnosticsJson {
                    imputation: k + 1,
                    mixed_delta_c: d.mixed.cost.difference,
                    mixed_delta_e: d.mixed.qaly.difference,
                    sur_delta_c: d.sur.cost.difference,
                    sur_delta_e: d.sur.qaly.difference,
                    sigma2_u_cost: d.sigma2_u[0],
                    sigma2_u_qaly: d.sigma2_u[1],
                    boundary_cost: d.boundary[0],
                    boundary_qaly: d.boundary[1],
                    sur_iterations: d.sur_iterations,
                    sur_converged: d.sur_converged,
                    bootstrap_redraws: d.bootstrap_redraws,
                })
                .collect(),
        }
    }
}

fn ci(p: &PooledEstimate, digits: usize) -> String {
    format!("{:.d$} ({:.d$}, {:.d$})", p.point, p.ci_low, p.ci_high, d = digits)
}

/// Results table with one column per estimator.
pub fn analysis_text(r: &AnalysisResult) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "Cost-effectiveness results (scenario {}, M = {}, B = {} per imputation)",
        r.scenario.id, r.m, r.bootstrap_reps
    );
    let col = |f: &dyn Fn(&EstimatorReport) -> String| format!("{:<40} {:<40}", f(&r.mixed), f(&r.sur));
    let _ = writeln!(s, "{:<34} {:<40} {:<40}", "", "Mixed model", "SUR");
    let rows: Vec<(String, Box<dyn Fn(&EstimatorReport) -> String>)> = vec![
        ("Mean cost, control".into(), Box::new(|e| format!("{:.2}", e.cost.mean_control))),
        ("Mean cost, intervention".into(), Box::new(|e| format!("{:.2}", e.cost.mean_intervention))),
        ("Cost difference (95% CI)".into(), Box::new(|e| ci(&e.cost.difference, 2))),
        ("Cost difference SE".into(), Box::new(|e| format!("{:.2}", e.cost.difference.se()))),
        ("Mean QALY, control".into(), Box::new(|e| format!("{:.4}", e.qaly.mean_control))),
        ("Mean QALY, intervention".into(), Box::new(|e| format!("{:.4}", e.qaly.mean_intervention))),
        ("QALY difference (95% CI)".into(), Box::new(|e| ci(&e.qaly.difference, 4))),
        ("QALY difference SE".into(), Box::new(|e| format!("{:.4}", e.qaly.difference.se()))),
        ("ICER".into(), Box::new(|e| icer_text(&e.icer))),
    ];
    for (label, f) in &rows {
        let _ = writeln!(s, "{:<34} {}", label, col(f.as_ref()));
    }
    for (k, nb) in r.mixed.net_benefit.iter().enumerate() {
        let l = nb.threshold;
        let _ = writeln!(s, "{:<34} {}", format!("NHB at {l:.0} (95% CI)"), col(&|e| ci(&e.net_benefit[k].nhb, 4)));
        let _ = writeln!(s, "{:<34} {}", format!("NMB at {l:.0} (95% CI)"), col(&|e| ci(&e.net_benefit[k].nmb, 2)));
        let _ = writeln!(
            s,
            "{:<34} {}",
            format!("P(cost-effective) at {l:.0}"),
            col(&|e| format!("{:.3}", e.net_benefit[k].prob_cost_effective))
        );
    }
    let q = &r.quadrants;
    let _ = writeln!(
        s,
        "CE plane: NE {:.3}  NW {:.3}  SE {:.3}  SW {:.3}  on axis {:.3}",
        q.north_east, q.north_west, q.south_east, q.south_west, q.on_axis
    );
    s
}

/// One sensitivity scenario, evaluated with the mixed-model estimator at
/// the primary threshold.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioRowJson {
    pub id: u8,
    pub c_control: f64,
    pub c_intervention: f64,
    pub delta_c: f64,
    pub delta_c_ci: [f64; 2],
    pub delta_e: f64,
    pub delta_e_ci: [f64; 2],
    pub icer: String,
    pub nhb: Option<f64>,
    pub nhb_ci: Option<[f64; 2]>,
    pub nmb: Option<f64>,
    pub prob_ce: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenariosJson {
    #[serde(flatten)]
    pub stamp: Stamp,
    pub estimator: &'static str,
    pub threshold: f64,
    pub scenarios: Vec<ScenarioRowJson>,
}

impl ScenariosJson {
    pub fn new(stamp: Stamp, results: &[AnalysisResult]) -> Self {
        let threshold = results.first().map(|r| r.decision.threshold).unwrap_or(f64::NAN);
        ScenariosJson {
            stamp,
            estimator: "mixed",
            threshold,
            scenarios: results
                .iter()
                .map(|r| {
                    let (c, e) = (&r.mixed.cost.difference, &r.mixed.qaly.difference);
                    let nb = r.mixed.net_benefit.iter().find(|n| n.threshold == threshold);
                    ScenarioRowJson {
                        id: r.scenario.id,
                        c_control: r.scenario.c_control,
                        c_intervention: r.scenario.c_intervention,
                        delta_c: c.point,
                        delta_c_ci: [c.ci_low, c.ci_high],
                        delta_e: e.point,
                        delta_e_ci: [e.ci_low, e.ci_high],
                        icer: icer_text(&r.mixed.icer),
                        nhb: nb.map(|n| n.nhb.point),
                        nhb_ci: nb.map(|n| [n.nhb.ci_low, n.nhb.ci_high]),
                        nmb: nb.map(|n| n.nmb.point),
                        prob_ce: r.decision.prob_cost_effective,
                    }
                })
                .collect(),
        }
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "MNAR sensitivity (mixed model; NHB and probability at {:.0})", self.threshold);
        let _ = writeln!(
            s,
            "{:>3} {:>6} {:>6} {:>28} {:>26} {:>12} {:>26} {:>7}",
            "#", "c_ctl", "c_int", "Cost difference (95% CI)", "QALY difference (95% CI)", "ICER", "NHB (95% CI)", "P(CE)"
        );
        for r in &self.scenarios {
            let d = |p: f64, ci: [f64; 2], k: usize| format!("{p:.k$} ({:.k$}, {:.k$})", ci[0], ci[1]);
            let nhb = match (r.nhb, r.nhb_ci) {
                (Some(p), Some(ci)) => d(p, ci, 4),
                _ => "-".into(),
            };
            let _ = writeln!(
                s,
                "{:>3} {:>6.2} {:>6.2} {:>28} {:>26} {:>12} {:>26} {:>7.3}",
                r.id,
                r.c_control,
                r.c_intervention,
                d(r.delta_c, r.delta_c_ci, 2),
                d(r.delta_e, r.delta_e_ci, 4),
                r.icer,
                nhb,
                r.prob_ce
            );
        }
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QuadrantSidecar {
    #[serde(flatten)]
    pub stamp: Stamp,
    pub points: usize,
    pub quadrants: QuadrantJson,
}
