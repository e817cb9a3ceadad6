//! Outcome valuation (EQ-5D value sets, AUC QALYs) and per-patient costing.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::baseline::SummaryStat;
use crate::error::{CeaError, Result};
use crate::trial::{Arm, Eq5dObservation, Eq5dProfile, MergedDataset, Readmission, FOLLOW_UP_DAYS, TIMEPOINT_DAYS};

pub const DAYS_PER_YEAR: f64 = 365.0;
const N_PROFILES: usize = 3125;

/// Lookup from five-level EQ-5D states to index utilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSet {
    utilities: Vec<Option<f64>>,
}

impl ValueSet {
    /// Builds a complete value set: every one of the 3,125 states must be
    /// present exactly once, full health must map to 1 and nothing may
    /// exceed 1.
    pub fn new(entries: impl IntoIterator<Item = (Eq5dProfile, f64)>) -> Result<Self> {
        let vs = Self::partial(entries)?;
        if let Some(missing) = vs.utilities.iter().position(Option::is_none) {
            return Err(CeaError::ValueSet(format!(
                "value set has no entry for profile {}",
                Eq5dProfile::from_ordinal(missing).unwrap()
            )));
        }
        Ok(vs)
    }

    /// Builds a value set that may have gaps; lookups of absent states fail.
    pub fn partial(entries: impl IntoIterator<Item = (Eq5dProfile, f64)>) -> Result<Self> {
        let mut utilities = vec![None; N_PROFILES];
        for (profile, u) in entries {
            if !u.is_finite() || u > 1.0 {
                return Err(CeaError::ValueSet(format!("profile {profile} has utility {u} above 1")));
            }
            let slot = &mut utilities[profile.ordinal()];
            if slot.is_some() {
                return Err(CeaError::ValueSet(format!("profile {profile} listed twice")));
            }
            *slot = Some(u);
        }
        if let Some(u) = utilities[0] {
            if u != 1.0 {
                return Err(CeaError::ValueSet(format!("full health 11111 maps to {u}, expected 1")));
            }
        }
        Ok(ValueSet { utilities })
    }

    pub fn utility(&self, profile: Eq5dProfile) -> Result<f64> {
        self.utilities[profile.ordinal()]
            .ok_or_else(|| CeaError::ValueSet(format!("profile {profile} absent from value set")))
    }

    pub fn entries(&self) -> impl Iterator<Item = (Eq5dProfile, f64)> + '_ {
        self.utilities
            .iter()
            .enumerate()
            .filter_map(|(k, u)| u.map(|u| (Eq5dProfile::from_ordinal(k).unwrap(), u)))
    }
}

/// Maps raw dimension levels to a utility.
pub fn map_profile(levels: [u8; 5], valueset: &ValueSet) -> Result<f64> {
    valueset.utility(Eq5dProfile::new(levels)?)
}

/// Utility of one observation: a recorded index value wins over a profile.
pub fn resolve_utility(obs: &Eq5dObservation, valueset: Option<&ValueSet>) -> Result<Option<f64>> {
    match (obs.utility, obs.profile, valueset) {
        (Some(u), _, _) => Ok(Some(u)),
        (None, Some(p), Some(vs)) => vs.utility(p).map(Some),
        (None, Some(p), None) => Err(CeaError::Config(format!("profile {p} recorded but no value set supplied"))),
        (None, None, _) => Ok(None),
    }
}

/// Utilities at days 0, 10, 30 and 90 plus an optional death day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityTrajectory {
    pub utilities: [f64; 4],
    pub death_day: Option<u32>,
}

/// Area under the utility curve over the 90-day follow-up, in years.
///
/// With a death on day `d` the curve runs linearly from the last
/// measurement before `d` down to zero at `d` and stays at zero.
pub fn qaly_auc(traj: &UtilityTrajectory) -> f64 {
    let u = &traj.utilities;
    let t = TIMEPOINT_DAYS.map(|d| d as f64);
    let mut area = 0.0;
    match traj.death_day {
        None => {
            for k in 0..3 {
                area += 0.5 * (u[k] + u[k + 1]) * (t[k + 1] - t[k]);
            }
        }
        Some(d) => {
            let d = d.min(FOLLOW_UP_DAYS) as f64;
            for k in 0..3 {
                if t[k] >= d {
                    break;
                }
                if t[k + 1] < d {
                    area += 0.5 * (u[k] + u[k + 1]) * (t[k + 1] - t[k]);
                } else {
                    area += 0.5 * u[k] * (d - t[k]);
                    break;
                }
            }
        }
    }
    area / DAYS_PER_YEAR
}

/// Unit costs in a single currency year.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitCostTable {
    pub currency_year: u16,
    /// Cost per unit of each CRF resource.
    pub resources: BTreeMap<String, f64>,
    /// Staff cost per minute, keyed by staff type.
    pub wages_per_minute: BTreeMap<String, f64>,
    pub per_admission: f64,
    pub per_day: f64,
    /// Whether the index (pre-discharge) stay is charged. Off by default
    /// because follow-up starts at discharge.
    pub charge_index_stay: bool,
}

impl UnitCostTable {
    pub fn validate(&self) -> Result<()> {
        let bad = self
            .resources
            .iter()
            .chain(&self.wages_per_minute)
            .map(|(k, v)| (k.as_str(), *v))
            .chain([("per_admission", self.per_admission), ("per_day", self.per_day)])
            .find(|(_, v)| !(*v >= 0.0) || !v.is_finite());
        match bad {
            Some((k, v)) => Err(CeaError::Config(format!("unit cost {k} = {v} must be a nonnegative number"))),
            None => Ok(()),
        }
    }

    /// Every price multiplied by `k`.
    pub fn scaled(&self, k: f64) -> UnitCostTable {
        UnitCostTable {
            currency_year: self.currency_year,
            resources: self.resources.iter().map(|(n, v)| (n.clone(), v * k)).collect(),
            wages_per_minute: self.wages_per_minute.iter().map(|(n, v)| (n.clone(), v * k)).collect(),
            per_admission: self.per_admission * k,
            per_day: self.per_day * k,
            charge_index_stay: self.charge_index_stay,
        }
    }
}

/// One intervention delivery activity with its duration on usual-care and
/// intervention wards.
#[derive(Debug, Clone, PartialEq)]
pub struct Activity {
    pub name: String,
    pub usual_minutes: f64,
    pub intervention_minutes: f64,
    pub staff: String,
}

impl Activity {
    pub fn incremental_minutes(&self) -> f64 {
        self.intervention_minutes - self.usual_minutes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivityTable(pub Vec<Activity>);

pub const STAFF_NURSING: &str = "nursing_manager";
pub const STAFF_MEDICAL: &str = "medical";

impl ActivityTable {
    /// Delivery schedule per patient: 75 incremental nursing/manager minutes
    /// and 10 incremental medical minutes.
    pub fn trial_default() -> ActivityTable {
        let a = |name: &str, usual: f64, int: f64, staff: &str| Activity {
            name: name.to_string(),
            usual_minutes: usual,
            intervention_minutes: int,
            staff: staff.to_string(),
        };
        ActivityTable(vec![
            a("Discussion with patient about care - on admission", 5.0, 5.0, STAFF_NURSING),
            a("Discussion with patient about care - during admission", 15.0, 30.0, STAFF_NURSING),
            a("Discussion with patient about care - during admission", 15.0, 25.0, STAFF_MEDICAL),
            a("Discussion with patient about care - discharge", 15.0, 20.0, STAFF_NURSING),
            a("Assisting with activities of daily living", 70.0, 105.0, STAFF_NURSING),
            a("Instructions/education for patient and/or caregiver", 5.0, 25.0, STAFF_NURSING),
        ])
    }

    pub fn incremental_minutes_by_staff(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for a in &self.0 {
            *out.entry(a.staff.clone()).or_insert(0.0) += a.incremental_minutes();
        }
        out
    }
}

/// Intervention delivery cost per patient: zero for control, otherwise the
/// incremental staff minutes priced at each staff type's wage.
pub fn intervention_cost(activities: &ActivityTable, costs: &UnitCostTable, arm: Arm) -> Result<f64> {
    let mut total = 0.0;
    for (staff, minutes) in activities.incremental_minutes_by_staff() {
        let wage = costs
            .wages_per_minute
            .get(&staff)
            .ok_or_else(|| CeaError::Config(format!("no wage configured for staff type {staff}")))?;
        total += minutes * wage;
    }
    Ok(match arm {
        Arm::Control => 0.0,
        Arm::Intervention => total,
    })
}

/// Cost of post-discharge readmissions; `None` when a stay length is
/// unrecorded.
pub fn hospitalisation_cost(
    readmissions: &[Readmission],
    index_stay_days: Option<f64>,
    costs: &UnitCostTable,
) -> Result<Option<f64>> {
    let mut total = 0.0;
    for r in readmissions {
        match r.length_days {
            Some(len) if len < 0.0 => {
                return Err(CeaError::validation(format!("negative readmission length {len}")));
            }
            Some(len) => total += costs.per_admission + len * costs.per_day,
            None => return Ok(None),
        }
    }
    if costs.charge_index_stay {
        match index_stay_days {
            Some(len) if len < 0.0 => return Err(CeaError::validation(format!("negative index stay {len}"))),
            Some(len) => total += len * costs.per_day,
            None => return Ok(None),
        }
    }
    Ok(Some(total))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostBreakdown {
    pub intervention: f64,
    pub hospitalisation: f64,
    /// Costs of resources that enter the totals.
    pub other_resources: BTreeMap<String, f64>,
    /// Costs of resources reported separately and never summed.
    pub excluded_resources: BTreeMap<String, f64>,
    pub total: f64,
}

/// Which resources enter total costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostRules {
    pub activities: ActivityTable,
    pub imputable_resources: Vec<String>,
}

/// Assembles a breakdown from complete components.
pub fn compose_cost(
    arm: Arm,
    hospitalisation: f64,
    counts: &BTreeMap<String, f64>,
    rules: &CostRules,
    costs: &UnitCostTable,
) -> Result<CostBreakdown> {
    let intervention = intervention_cost(&rules.activities, costs, arm)?;
    let mut other = BTreeMap::new();
    let mut excluded = BTreeMap::new();
    for (name, count) in counts {
        let unit = costs
            .resources
            .get(name)
            .ok_or_else(|| CeaError::Config(format!("no unit cost for resource {name}")))?;
        if rules.imputable_resources.iter().any(|r| r == name) {
            other.insert(name.clone(), count * unit);
        } else {
            excluded.insert(name.clone(), count * unit);
        }
    }
    let total = intervention + hospitalisation + other.values().sum::<f64>();
    Ok(CostBreakdown { intervention, hospitalisation, other_resources: other, excluded_resources: excluded, total })
}

/// Per-patient costs from observed data. Imputable resources and
/// hospitalisation must be observed; missing excluded resources are skipped.
pub fn total_cost(
    patient: &crate::trial::PatientRecord,
    rules: &CostRules,
    costs: &UnitCostTable,
) -> Result<CostBreakdown> {
    let hosp = hospitalisation_cost(&patient.readmissions, patient.index_stay_days, costs)?.ok_or_else(|| {
        CeaError::InsufficientData(format!("patient {}: hospitalisation cost missing", patient.patient_id))
    })?;
    let mut counts = BTreeMap::new();
    for (name, count) in &patient.resource_use {
        let imputable = rules.imputable_resources.iter().any(|r| r == name);
        match count {
            Some(c) => {
                counts.insert(name.clone(), *c);
            }
            None if imputable => {
                return Err(CeaError::InsufficientData(format!(
                    "patient {}: {name} missing",
                    patient.patient_id
                )));
            }
            None => {}
        }
    }
    compose_cost(patient.arm, hosp, &counts, rules, costs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadmissionSummary {
    /// Number of patients with k readmissions, keyed by k.
    pub distribution: BTreeMap<usize, usize>,
    pub stat: SummaryStat,
}

fn summarise_counts(counts: &[usize]) -> ReadmissionSummary {
    let mut distribution = BTreeMap::new();
    for &c in counts {
        *distribution.entry(c).or_insert(0) += 1;
    }
    let values: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    ReadmissionSummary { distribution, stat: SummaryStat::from_values(&values) }
}

/// Readmission count distribution by arm (`[control, intervention]`) and
/// overall.
pub fn readmission_summary(merged: &MergedDataset) -> ([ReadmissionSummary; 2], ReadmissionSummary) {
    let by_arm = Arm::BOTH.map(|arm| {
        let counts: Vec<usize> =
            merged.patients().iter().filter(|p| p.arm == arm).map(|p| p.readmissions.len()).collect();
        summarise_counts(&counts)
    });
    let all: Vec<usize> = merged.patients().iter().map(|p| p.readmissions.len()).collect();
    (by_arm, summarise_counts(&all))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UsageCell {
    /// Respondents with an observed count.
    pub n: usize,
    /// Percent of respondents with a nonzero count; `None` when `n == 0`.
    pub percent_using: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompleteCaseRow {
    pub resource: String,
    pub by_arm: [UsageCell; 2],
    pub total: UsageCell,
}

fn usage(values: impl Iterator<Item = f64>) -> UsageCell {
    let (mut n, mut users) = (0usize, 0usize);
    for v in values {
        n += 1;
        if v > 0.0 {
            users += 1;
        }
    }
    UsageCell { n, percent_using: (n > 0).then(|| 100.0 * users as f64 / n as f64) }
}

/// Complete-case usage of the resources excluded from the main analysis.
pub fn complete_case_resource_table(merged: &MergedDataset, excluded: &[String]) -> Vec<CompleteCaseRow> {
    excluded
        .iter()
        .map(|name| {
            let observed = |arm: Option<Arm>| {
                merged
                    .patients()
                    .iter()
                    .filter(move |p| arm.is_none_or(|a| p.arm == a))
                    .filter_map(|p| p.resource_use.get(name).copied().flatten())
            };
            CompleteCaseRow {
                resource: name.clone(),
                by_arm: [usage(observed(Some(Arm::Control))), usage(observed(Some(Arm::Intervention)))],
                total: usage(observed(None)),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(u: [f64; 4], death: Option<u32>) -> UtilityTrajectory {
        UtilityTrajectory { utilities: u, death_day: death }
    }

    #[test]
    fn auc_of_constant_full_health() {
        assert!((qaly_auc(&traj([1.0; 4], None)) - 90.0 / 365.0).abs() < 1e-15);
        assert_eq!(qaly_auc(&traj([1.0; 4], Some(0))), 0.0);
    }

    #[test]
    fn death_tapers_to_zero() {
        // death at day 20: full segment 0-10, then 0.5*u10*10
        let q = qaly_auc(&traj([0.6, 0.4, 0.9, 0.9], Some(20)));
        let expected = (0.5 * (0.6 + 0.4) * 10.0 + 0.5 * 0.4 * 10.0) / 365.0;
        assert!((q - expected).abs() < 1e-15);
        // death exactly on a measurement day
        let q = qaly_auc(&traj([0.6, 0.4, 0.9, 0.9], Some(30)));
        let expected = (0.5 * (0.6 + 0.4) * 10.0 + 0.5 * 0.4 * 20.0) / 365.0;
        assert!((q - expected).abs() < 1e-15);
    }

    #[test]
    fn hospitalisation_arithmetic_and_errors() {
        let costs = UnitCostTable {
            currency_year: 2022,
            resources: BTreeMap::new(),
            wages_per_minute: BTreeMap::new(),
            per_admission: 500.0,
            per_day: 300.0,
            charge_index_stay: false,
        };
        assert_eq!(hospitalisation_cost(&[], Some(4.0), &costs).unwrap(), Some(0.0));
        let one = [Readmission { start_day: 12, length_days: Some(3.0) }];
        assert_eq!(hospitalisation_cost(&one, Some(4.0), &costs).unwrap(), Some(1400.0));
        let unknown = [Readmission { start_day: 12, length_days: None }];
        assert_eq!(hospitalisation_cost(&unknown, None, &costs).unwrap(), None);
        let neg = [Readmission { start_day: 12, length_days: Some(-1.0) }];
        assert!(hospitalisation_cost(&neg, None, &costs).is_err());
    }

    #[test]
    fn missing_wage_is_a_configuration_error() {
        let costs = UnitCostTable {
            currency_year: 2022,
            resources: BTreeMap::new(),
            wages_per_minute: [(STAFF_NURSING.to_string(), 0.9)].into_iter().collect(),
            per_admission: 0.0,
            per_day: 0.0,
            charge_index_stay: false,
        };
        let err = intervention_cost(&ActivityTable::trial_default(), &costs, Arm::Intervention).unwrap_err();
        assert!(matches!(err, CeaError::Config(m) if m.contains(STAFF_MEDICAL)));
    }

    #[test]
    fn value_set_rejects_bad_anchor_and_gaps() {
        let bad = ValueSet::partial([(Eq5dProfile::FULL_HEALTH, 0.9)]);
        assert!(bad.is_err());
        let gap = ValueSet::new([(Eq5dProfile::FULL_HEALTH, 1.0)]);
        assert!(matches!(gap, Err(CeaError::ValueSet(_))));
        let vs = ValueSet::partial([(Eq5dProfile::FULL_HEALTH, 1.0)]).unwrap();
        assert!(matches!(map_profile([2, 1, 1, 1, 1], &vs), Err(CeaError::ValueSet(_))));
        assert!(matches!(map_profile([0, 1, 1, 1, 1], &vs), Err(CeaError::Validation(_))));
    }
}
