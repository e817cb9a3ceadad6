//! Synthetic cluster-randomised trials with known effects, used as the
//! validation oracle for the estimators and the end-to-end pipeline.
//!
//! Utilities follow a ward random intercept plus AR(1) patient deviations
//! across the four visits; the intervention shifts follow-up utilities by a
//! constant chosen so the expected QALY difference equals the configured
//! effect. Costs are readmission counts (Poisson with a gamma ward frailty of
//! mean one) times a per-stay cost, plus the intervention delivery cost; the
//! intervention readmission rate is set so the expected cost difference is
//! exact.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};

use crate::error::{CeaError, Result};
use crate::missing::{COL_HOSPITALISATION, COL_UTILITY};
use crate::outcomes::{intervention_cost, qaly_auc, ActivityTable, UnitCostTable, UtilityTrajectory, STAFF_MEDICAL, STAFF_NURSING};
use crate::rng::{stream, StreamRng, MISSINGNESS, SIMULATE};
use crate::trial::{Arm, Eq5dObservation, MergedDataset, PatientRecord, Readmission, WardInfo, CRF_RESOURCES, FOLLOW_UP_DAYS, TIMEPOINT_DAYS};

/// Lowest utility the generator produces (worst 3L state).
pub const UTILITY_FLOOR: f64 = -0.594;

/// How follow-up utilities go missing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mechanism {
    /// Each eligible cell deleted with probability `p`.
    Mcar { p: f64 },
    /// Logit of deletion linear in the (observed) baseline utility:
    /// `intercept + slope · (u_base − center)`.
    Mar { intercept: f64, slope: f64, center: f64 },
    /// Logit linear in the value being deleted.
    Mnar { intercept: f64, slope: f64, center: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MissingnessSpec {
    /// Follow-up utilities (10, 30 and 90 days, patients alive at the visit).
    pub utility: Mechanism,
    /// MCAR probability for the baseline utility.
    pub baseline_p: f64,
    /// MCAR probability that a patient with readmissions has an unrecorded
    /// stay length (hospitalisation cost missing).
    pub cost_p: f64,
}

impl MissingnessSpec {
    pub fn none() -> Self {
        MissingnessSpec { utility: Mechanism::Mcar { p: 0.0 }, baseline_p: 0.0, cost_p: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(CeaError::validation(format!("{name} probability {p} outside [0, 1]")))
            }
        };
        if let Mechanism::Mcar { p } = self.utility {
            prob("MCAR", p)?;
        }
        if let Mechanism::Mar { intercept, slope, center } | Mechanism::Mnar { intercept, slope, center } = self.utility {
            if !(intercept.is_finite() && slope.is_finite() && center.is_finite()) {
                return Err(CeaError::validation("missingness coefficients must be finite"));
            }
        }
        prob("baseline", self.baseline_p)?;
        prob("cost", self.cost_p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub wards_per_arm: usize,
    /// Inclusive range of patients per ward.
    pub patients_per_ward: (usize, usize),
    pub delta_cost: f64,
    pub delta_qaly: f64,
    /// Control-arm mean utility at each visit.
    pub utility_means: [f64; 4],
    pub utility_sd: f64,
    /// Correlation of a patient's deviations between consecutive visits.
    pub utility_ar: f64,
    pub ward_sd_utility: f64,
    pub control_admission_rate: f64,
    /// Coefficient of variation of the ward frailty on admission rates.
    pub ward_frailty_cv: f64,
    pub mean_stay_days: f64,
    pub per_admission: f64,
    pub per_day: f64,
    pub wage_nursing: f64,
    pub wage_medical: f64,
    pub death_probability: f64,
    pub age_mean: f64,
    pub age_sd: f64,
    pub age_min: f64,
    pub male_probability: f64,
    pub specialty_probability: f64,
    pub readm_rate_mean: f64,
    pub readm_rate_sd: f64,
    pub over75_mean: f64,
    pub over75_sd: f64,
    pub missingness: MissingnessSpec,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            wards_per_arm: 20,
            patients_per_ward: (15, 15),
            delta_cost: -250.0,
            delta_qaly: 0.006,
            utility_means: [0.49, 0.47, 0.47, 0.49],
            utility_sd: 0.22,
            utility_ar: 0.6,
            ward_sd_utility: 0.03,
            control_admission_rate: 0.45,
            ward_frailty_cv: 0.2,
            mean_stay_days: 10.0,
            per_admission: 1000.0,
            per_day: 300.0,
            wage_nursing: 0.90,
            wage_medical: 2.682,
            death_probability: 0.05,
            age_mean: 83.1,
            age_sd: 5.4,
            age_min: 75.0,
            male_probability: 0.42,
            specialty_probability: 0.5,
            readm_rate_mean: 12.0,
            readm_rate_sd: 3.0,
            over75_mean: 70.0,
            over75_sd: 10.0,
            missingness: MissingnessSpec::none(),
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(CeaError::validation(m));
        if self.wards_per_arm < 2 {
            return err(format!("need at least 2 wards per arm, got {}", self.wards_per_arm));
        }
        let (lo, hi) = self.patients_per_ward;
        if lo == 0 || lo > hi {
            return err(format!("invalid patients-per-ward range {lo}..={hi}"));
        }
        for (name, v) in [
            ("utility_sd", self.utility_sd),
            ("ward_sd_utility", self.ward_sd_utility),
            ("ward_frailty_cv", self.ward_frailty_cv),
            ("age_sd", self.age_sd),
            ("readm_rate_sd", self.readm_rate_sd),
            ("over75_sd", self.over75_sd),
            ("per_admission", self.per_admission),
            ("per_day", self.per_day),
            ("wage_nursing", self.wage_nursing),
            ("wage_medical", self.wage_medical),
            ("control_admission_rate", self.control_admission_rate),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return err(format!("{name} must be a nonnegative number, got {v}"));
            }
        }
        for (name, p) in [
            ("death_probability", self.death_probability),
            ("male_probability", self.male_probability),
            ("specialty_probability", self.specialty_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return err(format!("{name} {p} outside [0, 1]"));
            }
        }
        if !(self.utility_ar > -1.0 && self.utility_ar < 1.0) {
            return err(format!("utility_ar {} must lie in (-1, 1)", self.utility_ar));
        }
        if self.utility_means.iter().any(|u| !(*u <= 1.0 && *u >= UTILITY_FLOOR)) {
            return err("utility means must lie in the utility range".into());
        }
        if !(self.mean_stay_days > 0.0) {
            return err("mean_stay_days must be positive".into());
        }
        if !(self.delta_cost.is_finite() && self.delta_qaly.is_finite()) {
            return err("true effects must be finite".into());
        }
        if self.intervention_admission_rate() < 0.0 {
            return err(format!(
                "cost effect {} implies a negative intervention readmission rate",
                self.delta_cost
            ));
        }
        self.missingness.validate()
    }

    /// Tariffs and wages consistent with the generator.
    pub fn unit_costs(&self) -> UnitCostTable {
        UnitCostTable {
            currency_year: 2022,
            resources: BTreeMap::new(),
            wages_per_minute: [(STAFF_NURSING.to_string(), self.wage_nursing), (STAFF_MEDICAL.to_string(), self.wage_medical)]
                .into_iter()
                .collect(),
            per_admission: self.per_admission,
            per_day: self.per_day,
            charge_index_stay: false,
        }
    }

    pub fn intervention_cost(&self) -> f64 {
        intervention_cost(&ActivityTable::trial_default(), &self.unit_costs(), Arm::Intervention).unwrap_or(0.0)
    }

    pub fn expected_stay_cost(&self) -> f64 {
        self.per_admission + self.mean_stay_days * self.per_day
    }

    pub fn intervention_admission_rate(&self) -> f64 {
        let stay = self.expected_stay_cost();
        let extra = self.delta_cost - self.intervention_cost();
        if stay > 0.0 {
            self.control_admission_rate + extra / stay
        } else if extra == 0.0 {
            self.control_admission_rate
        } else {
            -1.0
        }
    }

    /// Expected QALY gain per unit shift of the three follow-up utilities,
    /// averaging over the death-day distribution.
    pub fn expected_shift_weight(&self) -> f64 {
        let weight = |death_day| qaly_auc(&UtilityTrajectory { utilities: [0.0, 1.0, 1.0, 1.0], death_day });
        let decedent = (1..=FOLLOW_UP_DAYS).map(|d| weight(Some(d))).sum::<f64>() / FOLLOW_UP_DAYS as f64;
        (1.0 - self.death_probability) * weight(None) + self.death_probability * decedent
    }

    /// Additive follow-up utility shift in the intervention arm.
    pub fn utility_shift(&self) -> f64 {
        self.delta_qaly / self.expected_shift_weight()
    }
}

/// Complete outcomes of one simulated patient before any deletion.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentOutcome {
    pub patient_id: String,
    pub arm: Arm,
    pub utilities: [f64; 4],
    pub qaly: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub delta_cost: f64,
    pub delta_qaly: f64,
    pub utility_shift: f64,
    pub admission_rates: [f64; 2],
    pub latent: Vec<LatentOutcome>,
    /// Difference in arm means of the latent outcomes of this sample.
    pub sample_delta_cost: f64,
    pub sample_delta_qaly: f64,
}

impl GroundTruth {
    pub fn nhb(&self, lambda: f64) -> f64 {
        self.delta_qaly - self.delta_cost / lambda
    }

    pub fn nmb(&self, lambda: f64) -> f64 {
        lambda * self.delta_qaly - self.delta_cost
    }
}

fn truncated_normal(rng: &mut StreamRng, dist: &Normal<f64>, min: f64) -> f64 {
    loop {
        let v = dist.sample(rng);
        if v >= min {
            return v;
        }
    }
}

fn normal(mean: f64, sd: f64) -> Normal<f64> {
    // validated: sd finite and nonnegative
    Normal::new(mean, sd).unwrap_or_else(|_| Normal::new(mean, 0.0).expect("zero-sd normal"))
}

pub fn generate_trial(cfg: &SimConfig) -> Result<(MergedDataset, GroundTruth)> {
    cfg.validate()?;
    let mut rng = stream(cfg.seed, &[SIMULATE]);
    let n_wards = 2 * cfg.wards_per_arm;
    let shift = cfg.utility_shift();
    let rates = [cfg.control_admission_rate, cfg.intervention_admission_rate()];
    let int_cost = cfg.intervention_cost();
    let stay_gamma = Gamma::new(2.0, cfg.mean_stay_days / 2.0).map_err(|e| CeaError::validation(format!("{e}")))?;
    let frailty = (cfg.ward_frailty_cv > 0.0)
        .then(|| {
            let shape = 1.0 / (cfg.ward_frailty_cv * cfg.ward_frailty_cv);
            Gamma::new(shape, 1.0 / shape)
        })
        .transpose()
        .map_err(|e| CeaError::validation(format!("{e}")))?;
    let readm = normal(cfg.readm_rate_mean, cfg.readm_rate_sd);
    let over75 = normal(cfg.over75_mean, cfg.over75_sd);
    let age = normal(cfg.age_mean, cfg.age_sd);
    let std = normal(0.0, 1.0);

    let mut wards = Vec::with_capacity(n_wards);
    let mut patients = Vec::new();
    let mut latent = Vec::new();
    for w in 0..n_wards {
        let arm = if w < cfg.wards_per_arm { Arm::Control } else { Arm::Intervention };
        let ward_id = format!("W{:03}", w + 1);
        wards.push(WardInfo {
            ward_id: ward_id.clone(),
            specialty_elderly: rng.random_bool(cfg.specialty_probability),
            baseline_readmission_rate: Some(readm.sample(&mut rng).clamp(0.0, 100.0)),
            pct_over_75: over75.sample(&mut rng).clamp(0.0, 100.0),
        });
        let ward_u = cfg.ward_sd_utility * std.sample(&mut rng);
        let ward_frailty = frailty.as_ref().map_or(1.0, |g| g.sample(&mut rng));
        let size = rng.random_range(cfg.patients_per_ward.0..=cfg.patients_per_ward.1);
        for _ in 0..size {
            let patient_id = format!("P{:05}", patients.len() + 1);
            let age_v = truncated_normal(&mut rng, &age, cfg.age_min);
            let male = rng.random_bool(cfg.male_probability);
            let death_day = rng.random_bool(cfg.death_probability).then(|| rng.random_range(1..=FOLLOW_UP_DAYS));
            let mut dev = cfg.utility_sd * std.sample(&mut rng);
            let innovation_sd = cfg.utility_sd * libm::sqrt(1.0 - cfg.utility_ar * cfg.utility_ar);
            let mut utilities = [0.0; 4];
            for t in 0..4 {
                if t > 0 {
                    dev = cfg.utility_ar * dev + innovation_sd * std.sample(&mut rng);
                }
                let effect = if t > 0 && arm == Arm::Intervention { shift } else { 0.0 };
                utilities[t] = (cfg.utility_means[t] + ward_u + dev + effect).clamp(UTILITY_FLOOR, 1.0);
            }
            let lambda = rates[arm.index()] * ward_frailty;
            let count = if lambda > 0.0 {
                Poisson::new(lambda).map_err(|e| CeaError::validation(format!("{e}")))?.sample(&mut rng) as usize
            } else {
                0
            };
            let last_day = death_day.unwrap_or(FOLLOW_UP_DAYS);
            let mut readmissions: Vec<Readmission> = (0..count)
                .map(|_| Readmission {
                    start_day: rng.random_range(0..=last_day),
                    length_days: Some(stay_gamma.sample(&mut rng)),
                })
                .collect();
            readmissions.sort_by(|a, b| a.start_day.cmp(&b.start_day));
            let hosp: f64 =
                readmissions.iter().map(|r| cfg.per_admission + r.length_days.unwrap_or(0.0) * cfg.per_day).sum();
            let cost = hosp + if arm == Arm::Intervention { int_cost } else { 0.0 };
            let qaly = qaly_auc(&UtilityTrajectory { utilities, death_day });
            let eq5d = core::array::from_fn(|t| {
                let alive = death_day.is_none_or(|d| TIMEPOINT_DAYS[t] < d) || t == 0;
                Eq5dObservation { profile: None, utility: alive.then_some(utilities[t]) }
            });
            let index_stay = stay_gamma.sample(&mut rng);
            patients.push(PatientRecord {
                patient_id: patient_id.clone(),
                arm,
                ward_id: ward_id.clone(),
                age: age_v,
                sex_male: male,
                eq5d,
                death_day,
                readmissions,
                index_stay_days: Some(index_stay),
                resource_use: CRF_RESOURCES.iter().map(|r| (r.to_string(), None)).collect(),
            });
            latent.push(LatentOutcome { patient_id, arm, utilities, qaly, cost });
        }
    }
    let arm_mean = |f: &dyn Fn(&LatentOutcome) -> f64, arm: Arm| {
        let v: Vec<f64> = latent.iter().filter(|l| l.arm == arm).map(f).collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    };
    let sample_delta_cost = arm_mean(&|l| l.cost, Arm::Intervention) - arm_mean(&|l| l.cost, Arm::Control);
    let sample_delta_qaly = arm_mean(&|l| l.qaly, Arm::Intervention) - arm_mean(&|l| l.qaly, Arm::Control);
    let merged = MergedDataset::new(patients, wards)?;
    Ok((
        merged,
        GroundTruth {
            delta_cost: cfg.delta_cost,
            delta_qaly: cfg.delta_qaly,
            utility_shift: shift,
            admission_rates: rates,
            latent,
            sample_delta_cost,
            sample_delta_qaly,
        },
    ))
}

/// One deleted cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deletion {
    pub patient_id: String,
    /// Analysis-table column name (`eq5d_10`, `hospitalisation`, ...).
    pub variable: String,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

/// Deletes cells according to `spec`, drawing from the stream
/// `(seed, MISSINGNESS)`. Only present values are eligible; follow-up visits
/// after death are never touched.
pub fn apply_missingness(dataset: &MergedDataset, spec: &MissingnessSpec, seed: u64) -> Result<(MergedDataset, Vec<Deletion>)> {
    spec.validate()?;
    let mut rng = stream(seed, &[MISSINGNESS]);
    let mut deletions = Vec::new();
    let mut patients = dataset.patients().to_vec();
    for p in &mut patients {
        let base = p.eq5d[0].utility;
        for t in 1..4 {
            let Some(u) = p.eq5d[t].utility else { continue };
            if !p.alive_at(TIMEPOINT_DAYS[t]) {
                continue;
            }
            let prob = match spec.utility {
                Mechanism::Mcar { p } => p,
                Mechanism::Mar { intercept, slope, center } => match base {
                    Some(b) => logistic(intercept + slope * (b - center)),
                    None => logistic(intercept),
                },
                Mechanism::Mnar { intercept, slope, center } => logistic(intercept + slope * (u - center)),
            };
            if rng.random_bool(prob.clamp(0.0, 1.0)) {
                p.eq5d[t] = Eq5dObservation::default();
                deletions.push(Deletion { patient_id: p.patient_id.clone(), variable: COL_UTILITY[t].to_string() });
            }
        }
        if base.is_some() && rng.random_bool(spec.baseline_p) {
            p.eq5d[0] = Eq5dObservation::default();
            deletions.push(Deletion { patient_id: p.patient_id.clone(), variable: COL_UTILITY[0].to_string() });
        }
        if !p.readmissions.is_empty() && p.readmissions[0].length_days.is_some() && rng.random_bool(spec.cost_p) {
            p.readmissions[0].length_days = None;
            deletions.push(Deletion { patient_id: p.patient_id.clone(), variable: COL_HOSPITALISATION.to_string() });
        }
    }
    Ok((dataset.with_patients(patients)?, deletions))
}
