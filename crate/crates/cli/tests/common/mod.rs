#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use crt_cea::commands::{cmd_simulate, GlobalOptions, Run};

pub fn opts(config: Option<&Path>, out: Option<&Path>) -> GlobalOptions {
    GlobalOptions {
        config: config.map(Path::to_path_buf),
        seed: None,
        out: out.map(Path::to_path_buf),
        serial: false,
        strict: false,
    }
}

/// Simulates a small trial under `dir` and returns the generated config
/// with `extra` TOML appended.
pub fn simulated_config(dir: &Path, simulate: &str, extra: &str) -> PathBuf {
    let sim_cfg = dir.join("sim.toml");
    fs::write(&sim_cfg, format!("seed = 4242\n\n[simulate]\n{simulate}\n")).unwrap();
    let run = Run::new(&opts(Some(&sim_cfg), Some(dir))).unwrap();
    cmd_simulate(&run).unwrap();
    let cfg = dir.join("simulated").join("config.toml");
    let mut text = fs::read_to_string(&cfg).unwrap();
    text.push('\n');
    text.push_str(extra);
    fs::write(&cfg, text).unwrap();
    cfg
}

pub const SMALL_TRIAL: &str = "wards_per_arm = 5\npatients_per_ward = [10, 12]\n";

pub const QUICK_ANALYSIS: &str =
    "[imputation]\nm = 3\ncycles = 5\n\n[analysis]\nbootstrap_reps = 20\nthresholds = [0.0, 15000.0, 20000.0, 30000.0, 40000.0]\n";

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

use std::collections::BTreeMap;

use crt_cea::csvio::{write_crf_csv, write_routine_csv, write_wards_csv};
use crt_cea_core::trial::{Arm, CrfRecord, Eq5dObservation, Eq5dProfile, Readmission, RoutineRecord, WardInfo};

pub const FIXTURE_WARDS: usize = 35;
pub const FIXTURE_MERGED: usize = 468;
pub const FIXTURE_ROUTINE: usize = 615;
pub const FIXTURE_CRF: usize = 622;
/// Patients missing the day-10 questionnaire in the fixture.
pub const FIXTURE_DAY10_GAPS: usize = 149;

fn fixture_ward(k: usize) -> WardInfo {
    WardInfo {
        ward_id: format!("W{k:02}"),
        specialty_elderly: k % 3 == 0,
        baseline_readmission_rate: Some(9.0 + (k % 7) as f64),
        pct_over_75: 55.0 + (k % 11) as f64,
    }
}

fn profile_for(i: usize, t: usize) -> Eq5dProfile {
    let lvl = |d: usize| 1 + ((i * (d + 2) + t * 3 + d) % 7 / 2) as u8;
    Eq5dProfile::new([lvl(0), lvl(1), lvl(2), lvl(3), lvl(4)]).unwrap()
}

/// Routine, CRF and ward files whose join has 468 patients over 35 wards
/// from 615 routine and 622 CRF rows. Returns a config path.
pub fn linkage_fixture(dir: &Path) -> PathBuf {
    let wards: Vec<WardInfo> = (0..FIXTURE_WARDS).map(fixture_ward).collect();
    let arm_of = |w: usize| if w < 18 { Arm::Control } else { Arm::Intervention };
    let routine: Vec<RoutineRecord> = (0..FIXTURE_ROUTINE)
        .map(|i| {
            let w = i % FIXTURE_WARDS;
            let id = if i < FIXTURE_MERGED { format!("P{i:04}") } else { format!("R{i:04}") };
            RoutineRecord {
                patient_id: id,
                ward_id: wards[w].ward_id.clone(),
                arm: arm_of(w),
                age: 76.0 + (i % 17) as f64,
                sex_male: i % 2 == 0,
                death_day: (i % 41 == 7).then_some(60),
                readmissions: if i % 3 == 0 {
                    vec![Readmission { start_day: 15 + (i % 50) as u32, length_days: Some(1.0 + (i % 6) as f64) }]
                } else {
                    Vec::new()
                },
                index_stay_days: Some(3.0 + (i % 9) as f64),
            }
        })
        .collect();
    let crf: Vec<CrfRecord> = (0..FIXTURE_CRF)
        .map(|j| {
            let id = if j < FIXTURE_MERGED { format!("P{j:04}") } else { format!("C{j:04}") };
            let mut eq5d = [0, 1, 2, 3].map(|t| Eq5dObservation { profile: Some(profile_for(j, t)), utility: None });
            if (j * 5) % FIXTURE_MERGED < FIXTURE_DAY10_GAPS && j < FIXTURE_MERGED {
                eq5d[1] = Eq5dObservation::default();
            }
            if (j * 7 + 1) % FIXTURE_MERGED < 120 {
                eq5d[3] = Eq5dObservation::default();
            }
            let mut resource_use = BTreeMap::new();
            resource_use.insert("outpatient".to_string(), (j % 4 != 0).then_some((j % 5) as f64));
            resource_use.insert("gp_surgery".to_string(), Some((j % 3) as f64));
            CrfRecord { patient_id: id, eq5d, resource_use }
        })
        .collect();
    write_routine_csv(&dir.join("routine.csv"), &routine).unwrap();
    write_crf_csv(&dir.join("crf.csv"), &crf).unwrap();
    write_wards_csv(&dir.join("wards.csv"), &wards).unwrap();
    let cfg = dir.join("config.toml");
    fs::write(
        &cfg,
        format!(
            "seed = 11\noutput_dir = \"out\"\n\n[inputs]\nroutine = \"routine.csv\"\ncrf = \"crf.csv\"\nwards = \"wards.csv\"\n\n{QUICK_ANALYSIS}"
        ),
    )
    .unwrap();
    cfg
}
