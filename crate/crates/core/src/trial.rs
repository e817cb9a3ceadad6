//! Trial records, source datasets and the merged analysis dataset.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::error::{CeaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Arm {
    Control,
    Intervention,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Control, Arm::Intervention];

    pub fn index(self) -> usize {
        match self {
            Arm::Control => 0,
            Arm::Intervention => 1,
        }
    }

    /// Value of the arm dummy in design matrices.
    pub fn indicator(self) -> f64 {
        self.index() as f64
    }

    pub fn from_code(code: u8) -> Option<Arm> {
        match code {
            0 => Some(Arm::Control),
            1 => Some(Arm::Intervention),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Arm::Control => "control",
            Arm::Intervention => "intervention",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Measurement schedule in days after discharge; index 0 is the baseline
/// (in-hospital) measurement, which doubles as the day-0 utility.
pub const TIMEPOINT_DAYS: [u32; 4] = [0, 10, 30, 90];
pub const TIMEPOINT_LABELS: [&str; 4] = ["base", "10", "30", "90"];
pub const FOLLOW_UP_DAYS: u32 = 90;

pub const EQ5D_DIMENSIONS: [&str; 5] = ["mo", "sc", "ua", "pd", "ad"];

/// Resource-use items collected on the case report form.
pub const CRF_RESOURCES: [&str; 12] = [
    "outpatient",
    "daycase",
    "ae",
    "gp_surgery",
    "gp_home",
    "gp_phone",
    "nurse_surgery",
    "nurse_home",
    "nurse_phone",
    "therapist",
    "homecare",
    "socialworker",
];

/// A five-level EQ-5D health state; each dimension is in 1..=5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Eq5dProfile([u8; 5]);

impl Eq5dProfile {
    pub const FULL_HEALTH: Eq5dProfile = Eq5dProfile([1; 5]);

    pub fn new(levels: [u8; 5]) -> Result<Self> {
        if let Some((d, l)) = EQ5D_DIMENSIONS.iter().zip(levels).find(|(_, l)| !(1..=5).contains(l)) {
            return Err(CeaError::validation(format!("EQ-5D dimension {d} has level {l}, expected 1-5")));
        }
        Ok(Eq5dProfile(levels))
    }

    pub fn levels(&self) -> [u8; 5] {
        self.0
    }

    /// Position in the lexicographic enumeration of all 3,125 states.
    pub fn ordinal(&self) -> usize {
        self.0.iter().fold(0, |acc, &l| acc * 5 + (l as usize - 1))
    }

    pub fn from_ordinal(ordinal: usize) -> Option<Self> {
        if ordinal >= 3125 {
            return None;
        }
        let mut levels = [0u8; 5];
        let mut rest = ordinal;
        for slot in levels.iter_mut().rev() {
            *slot = (rest % 5) as u8 + 1;
            rest /= 5;
        }
        Some(Eq5dProfile(levels))
    }
}

impl fmt::Display for Eq5dProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d, e] = self.0;
        write!(f, "{a}{b}{c}{d}{e}")
    }
}

/// One EQ-5D measurement occasion. Either part may be missing.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Eq5dObservation {
    pub profile: Option<Eq5dProfile>,
    pub utility: Option<f64>,
}

impl Eq5dObservation {
    pub fn is_missing(&self) -> bool {
        self.profile.is_none() && self.utility.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Readmission {
    pub start_day: u32,
    /// `None` when the stay length was not recorded.
    pub length_days: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    pub patient_id: String,
    pub arm: Arm,
    pub ward_id: String,
    pub age: f64,
    pub sex_male: bool,
    pub eq5d: [Eq5dObservation; 4],
    pub death_day: Option<u32>,
    pub readmissions: Vec<Readmission>,
    pub index_stay_days: Option<f64>,
    pub resource_use: BTreeMap<String, Option<f64>>,
}

impl PatientRecord {
    pub fn validate(&self) -> Result<()> {
        let id = &self.patient_id;
        if let Some(d) = self.death_day {
            if d > FOLLOW_UP_DAYS {
                return Err(CeaError::validation(format!("patient {id}: death_day {d} outside 0-90")));
            }
        }
        for r in &self.readmissions {
            if r.start_day > FOLLOW_UP_DAYS {
                return Err(CeaError::validation(format!(
                    "patient {id}: readmission start day {} outside 0-90",
                    r.start_day
                )));
            }
            if let Some(len) = r.length_days {
                if !(len >= 0.0) {
                    return Err(CeaError::validation(format!("patient {id}: negative readmission length {len}")));
                }
            }
        }
        for (t, obs) in self.eq5d.iter().enumerate() {
            if let Some(u) = obs.utility {
                if !(u <= 1.0) || !u.is_finite() {
                    return Err(CeaError::validation(format!(
                        "patient {id}: utility {u} at {} exceeds 1",
                        TIMEPOINT_LABELS[t]
                    )));
                }
            }
        }
        for (name, count) in &self.resource_use {
            if let Some(c) = count {
                if !(*c >= 0.0) {
                    return Err(CeaError::validation(format!("patient {id}: negative {name} count {c}")));
                }
            }
        }
        Ok(())
    }

    /// True when the record died within 30 days of discharge with no
    /// readmission (excluded from the clinical cohort, kept for costing).
    pub fn is_early_decedent(&self) -> bool {
        matches!(self.death_day, Some(d) if d <= 30) && self.readmissions.is_empty()
    }

    /// Whether the patient was alive at a given day of follow-up.
    pub fn alive_at(&self, day: u32) -> bool {
        self.death_day.is_none_or(|d| day < d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WardInfo {
    pub ward_id: String,
    /// Elderly and intermediate care specialty.
    pub specialty_elderly: bool,
    /// Ward readmission rate before the trial, percent. May be unrecorded.
    pub baseline_readmission_rate: Option<f64>,
    pub pct_over_75: f64,
}

impl WardInfo {
    pub fn validate(&self) -> Result<()> {
        let in_range = |v: f64| (0.0..=100.0).contains(&v);
        if let Some(r) = self.baseline_readmission_rate {
            if !in_range(r) {
                return Err(CeaError::validation(format!(
                    "ward {}: baseline readmission rate {r} outside [0, 100]",
                    self.ward_id
                )));
            }
        }
        if !in_range(self.pct_over_75) {
            return Err(CeaError::validation(format!(
                "ward {}: pct_over_75 {} outside [0, 100]",
                self.ward_id, self.pct_over_75
            )));
        }
        Ok(())
    }
}

/// Routine (administrative) data for one patient.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutineRecord {
    pub patient_id: String,
    pub ward_id: String,
    pub arm: Arm,
    pub age: f64,
    pub sex_male: bool,
    pub death_day: Option<u32>,
    pub readmissions: Vec<Readmission>,
    pub index_stay_days: Option<f64>,
}

/// Case report form data for one patient.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfRecord {
    pub patient_id: String,
    pub eq5d: [Eq5dObservation; 4],
    pub resource_use: BTreeMap<String, Option<f64>>,
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a str>, source: &str) -> Result<()> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(CeaError::Integrity(format!("duplicate patient_id {id} in {source} data")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutineDataset {
    pub records: Vec<RoutineRecord>,
    pub wards: Vec<WardInfo>,
}

impl RoutineDataset {
    pub fn new(records: Vec<RoutineRecord>, wards: Vec<WardInfo>) -> Result<Self> {
        check_unique(records.iter().map(|r| r.patient_id.as_str()), "routine")?;
        let mut ward_ids = BTreeSet::new();
        for w in &wards {
            w.validate()?;
            if !ward_ids.insert(w.ward_id.as_str()) {
                return Err(CeaError::Integrity(format!("duplicate ward_id {}", w.ward_id)));
            }
        }
        Ok(RoutineDataset { records, wards })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrfDataset {
    pub records: Vec<CrfRecord>,
}

impl CrfDataset {
    pub fn new(records: Vec<CrfRecord>) -> Result<Self> {
        check_unique(records.iter().map(|r| r.patient_id.as_str()), "CRF")?;
        Ok(CrfDataset { records })
    }
}

/// The analysis dataset: one row per patient present in both sources.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedDataset {
    patients: Vec<PatientRecord>,
    wards: Vec<WardInfo>,
    ward_of_patient: Vec<usize>,
}

impl MergedDataset {
    pub fn new(patients: Vec<PatientRecord>, wards: Vec<WardInfo>) -> Result<Self> {
        check_unique(patients.iter().map(|p| p.patient_id.as_str()), "merged")?;
        let mut lookup = BTreeMap::new();
        for (i, w) in wards.iter().enumerate() {
            w.validate()?;
            if lookup.insert(w.ward_id.as_str(), i).is_some() {
                return Err(CeaError::Integrity(format!("duplicate ward_id {}", w.ward_id)));
            }
        }
        let mut ward_of_patient = Vec::with_capacity(patients.len());
        for p in &patients {
            p.validate()?;
            let w = lookup.get(p.ward_id.as_str()).ok_or_else(|| {
                CeaError::Integrity(format!("patient {} references unknown ward {}", p.patient_id, p.ward_id))
            })?;
            ward_of_patient.push(*w);
        }
        for arm in Arm::BOTH {
            if !patients.iter().any(|p| p.arm == arm) {
                return Err(CeaError::validation(format!("{arm} arm is empty")));
            }
        }
        Ok(MergedDataset { patients, wards, ward_of_patient })
    }

    pub fn patients(&self) -> &[PatientRecord] {
        &self.patients
    }

    pub fn wards(&self) -> &[WardInfo] {
        &self.wards
    }

    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    /// Index into [`Self::wards`] for patient `i`.
    pub fn ward_index(&self, i: usize) -> usize {
        self.ward_of_patient[i]
    }

    pub fn ward_of(&self, i: usize) -> &WardInfo {
        &self.wards[self.ward_of_patient[i]]
    }

    pub fn arm_count(&self, arm: Arm) -> usize {
        self.patients.iter().filter(|p| p.arm == arm).count()
    }

    /// Number of distinct wards contributing patients to `arm`.
    pub fn ward_count(&self, arm: Arm) -> usize {
        let set: BTreeSet<usize> = self
            .patients
            .iter()
            .zip(&self.ward_of_patient)
            .filter(|(p, _)| p.arm == arm)
            .map(|(_, w)| *w)
            .collect();
        set.len()
    }

    /// Splits back into the two source datasets.
    pub fn to_sources(&self) -> (RoutineDataset, CrfDataset) {
        let routine = self
            .patients
            .iter()
            .map(|p| RoutineRecord {
                patient_id: p.patient_id.clone(),
                ward_id: p.ward_id.clone(),
                arm: p.arm,
                age: p.age,
                sex_male: p.sex_male,
                death_day: p.death_day,
                readmissions: p.readmissions.clone(),
                index_stay_days: p.index_stay_days,
            })
            .collect();
        let crf = self
            .patients
            .iter()
            .map(|p| CrfRecord {
                patient_id: p.patient_id.clone(),
                eq5d: p.eq5d,
                resource_use: p.resource_use.clone(),
            })
            .collect();
        (
            RoutineDataset { records: routine, wards: self.wards.clone() },
            CrfDataset { records: crf },
        )
    }

    /// Returns a copy with patients rearranged into a new order; wards untouched.
    pub fn with_patients(&self, patients: Vec<PatientRecord>) -> Result<Self> {
        MergedDataset::new(patients, self.wards.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MergeOptions {
    /// Keep patients who died within 30 days without readmission.
    pub include_early_decedents: bool,
}

impl Default for MergeOptions {
    fn default() -> Self {
        MergeOptions { include_early_decedents: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct JoinReport {
    pub routine_count: usize,
    pub crf_count: usize,
    pub merged_count: usize,
    pub ward_count: usize,
    pub per_arm: [usize; 2],
    pub wards_per_arm: [usize; 2],
    pub unmatched_routine: Vec<String>,
    pub unmatched_crf: Vec<String>,
    pub dropped_early_decedents: Vec<String>,
}

/// Inner join on `patient_id` under intention-to-treat: each patient keeps
/// the arm recorded in the routine data. Patients appear in routine order;
/// only wards with merged patients are retained.
pub fn merge_datasets(
    routine: &RoutineDataset,
    crf: &CrfDataset,
    options: MergeOptions,
) -> Result<(MergedDataset, JoinReport)> {
    let crf_by_id: BTreeMap<&str, &CrfRecord> = crf.records.iter().map(|r| (r.patient_id.as_str(), r)).collect();
    let routine_ids: BTreeSet<&str> = routine.records.iter().map(|r| r.patient_id.as_str()).collect();

    let mut report = JoinReport {
        routine_count: routine.records.len(),
        crf_count: crf.records.len(),
        ..JoinReport::default()
    };
    let mut patients = Vec::new();
    for r in &routine.records {
        let Some(c) = crf_by_id.get(r.patient_id.as_str()) else {
            report.unmatched_routine.push(r.patient_id.clone());
            continue;
        };
        let p = PatientRecord {
            patient_id: r.patient_id.clone(),
            arm: r.arm,
            ward_id: r.ward_id.clone(),
            age: r.age,
            sex_male: r.sex_male,
            eq5d: c.eq5d,
            death_day: r.death_day,
            readmissions: r.readmissions.clone(),
            index_stay_days: r.index_stay_days,
            resource_use: c.resource_use.clone(),
        };
        if !options.include_early_decedents && p.is_early_decedent() {
            report.dropped_early_decedents.push(p.patient_id.clone());
            continue;
        }
        patients.push(p);
    }
    report.unmatched_crf = crf
        .records
        .iter()
        .filter(|c| !routine_ids.contains(c.patient_id.as_str()))
        .map(|c| c.patient_id.clone())
        .collect();
    if patients.is_empty() {
        return Err(CeaError::Merge("routine and CRF datasets share no patient_id".to_string()));
    }
    let used: BTreeSet<&str> = patients.iter().map(|p| p.ward_id.as_str()).collect();
    let wards: Vec<WardInfo> = routine.wards.iter().filter(|w| used.contains(w.ward_id.as_str())).cloned().collect();
    let merged = MergedDataset::new(patients, wards)?;
    report.merged_count = merged.len();
    report.ward_count = merged.wards().len();
    for arm in Arm::BOTH {
        report.per_arm[arm.index()] = merged.arm_count(arm);
        report.wards_per_arm[arm.index()] = merged.ward_count(arm);
    }
    Ok((merged, report))
}
