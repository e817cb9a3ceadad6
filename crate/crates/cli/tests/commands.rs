use std::fs;
use std::path::Path;
use std::process::Command;

use crt_cea::commands::{cmd_analyze, cmd_ceac, cmd_impute, cmd_ingest, cmd_missing, cmd_mnar, GlobalOptions, Run};

mod common;
use common::*;

fn run_with(cfg: &Path, out: &Path, serial: bool) -> Run {
    Run::new(&GlobalOptions { serial, ..opts(Some(cfg), Some(out)) }).unwrap()
}

#[test]
fn linkage_counts_survive_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = linkage_fixture(dir.path());
    let out = dir.path().join("out");
    cmd_ingest(&run_with(&cfg, &out, false)).unwrap();
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["routine_count"], FIXTURE_ROUTINE);
    assert_eq!(report["crf_count"], FIXTURE_CRF);
    assert_eq!(report["merged_count"], FIXTURE_MERGED);
    assert_eq!(report["ward_count"], FIXTURE_WARDS);
    assert_eq!(report["unmatched_routine"].as_array().unwrap().len(), FIXTURE_ROUTINE - FIXTURE_MERGED);
    assert_eq!(report["unmatched_crf"].as_array().unwrap().len(), FIXTURE_CRF - FIXTURE_MERGED);
    let merged = fs::read_to_string(out.join("merged.csv")).unwrap();
    let data_rows = merged.lines().filter(|l| !l.starts_with('#')).count() - 1;
    assert_eq!(data_rows, FIXTURE_MERGED);
}

#[test]
fn missingness_profile_reports_day_ten_share() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = linkage_fixture(dir.path());
    let out = dir.path().join("out");
    cmd_missing(&run_with(&cfg, &out, false)).unwrap();
    let m = read_json(&out.join("missingness.json"));
    let day10 = m["variables"].as_array().unwrap().iter().find(|v| v["name"] == "eq5d_10").unwrap();
    assert_eq!(day10["missing"], FIXTURE_DAY10_GAPS);
    assert_eq!(format!("{:.2}", day10["percent"].as_f64().unwrap()), "31.84");
    assert_eq!(m["patients"], FIXTURE_MERGED);
}

#[test]
fn simulated_trial_ingests_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simulated_config(dir.path(), SMALL_TRIAL, QUICK_ANALYSIS);
    let sim = dir.path().join("simulated");
    for f in ["routine.csv", "crf.csv", "wards.csv", "unit_costs.toml", "deletions.csv", "ground_truth.json"] {
        assert!(sim.join(f).exists(), "{f} missing");
    }
    let out = dir.path().join("ingest");
    cmd_ingest(&run_with(&cfg, &out, false)).unwrap();
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["ward_count"], 10);
    assert_eq!(report["routine_count"], report["crf_count"]);
    assert_eq!(report["merged_count"], report["routine_count"]);
    assert!(report["unmatched_routine"].as_array().unwrap().is_empty());
}

#[test]
fn large_benefit_at_lower_cost_is_dominant() {
    let dir = tempfile::tempdir().unwrap();
    let sim = format!("{SMALL_TRIAL}delta_cost = -1000.0\ndelta_qaly = 0.05\nmechanism = \"none\"\n");
    let cfg = simulated_config(dir.path(), &sim, QUICK_ANALYSIS);
    let out = dir.path().join("a");
    cmd_analyze(&run_with(&cfg, &out, false), None).unwrap();
    let est = read_json(&out.join("pooled_estimates.json"));
    assert_eq!(est["mixed"]["icer"], "Dominant");
    assert_eq!(est["decision"]["icer"], "Dominant");
    assert!(est["mixed"]["icer_value"].is_null());
    assert!(est["decision"]["nmb"].as_f64().unwrap() > 0.0);
}

#[test]
fn outputs_are_byte_identical_across_reruns_and_executors() {
    let dir = tempfile::tempdir().unwrap();
    let sim = format!("{SMALL_TRIAL}mechanism = \"mar\"\nmissing_rate = 0.3\n");
    let cfg = simulated_config(dir.path(), &sim, QUICK_ANALYSIS);
    let runs = [("p1", false), ("p2", false), ("s1", true)];
    for (name, serial) in runs {
        cmd_analyze(&run_with(&cfg, &dir.path().join(name), serial), None).unwrap();
    }
    for file in ["pooled_estimates.json", "ceac.csv", "ce_plane.csv", "ce_plane_quadrants.json"] {
        let read = |n: &str| fs::read(dir.path().join(n).join(file)).unwrap();
        assert_eq!(read("p1"), read("p2"), "{file} differs between reruns");
        assert_eq!(read("p1"), read("s1"), "{file} differs between serial and parallel");
    }
}

#[test]
fn ceac_has_one_probability_per_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simulated_config(dir.path(), SMALL_TRIAL, QUICK_ANALYSIS);
    let out = dir.path().join("c");
    cmd_ceac(&run_with(&cfg, &out, false), None).unwrap();
    let text = fs::read_to_string(out.join("ceac.csv")).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(lines.next().unwrap(), "lambda,probability");
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![0.0, 15000.0, 20000.0, 30000.0, 40000.0]);
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.1)));
    let plane = fs::read_to_string(out.join("ce_plane.csv")).unwrap();
    let plane_rows = plane.lines().filter(|l| !l.starts_with('#')).count() - 1;
    assert_eq!(plane_rows, 3 * 20);
}

#[test]
fn first_scenario_matches_the_base_case_and_stored_imputations_match_inline() {
    let dir = tempfile::tempdir().unwrap();
    let sim = format!("{SMALL_TRIAL}mechanism = \"mcar\"\nmissing_rate = 0.25\n");
    let cfg = simulated_config(dir.path(), &sim, QUICK_ANALYSIS);
    let base = dir.path().join("base");
    cmd_analyze(&run_with(&cfg, &base, false), None).unwrap();
    let est = read_json(&base.join("pooled_estimates.json"));

    let imp = dir.path().join("imp");
    cmd_impute(&run_with(&cfg, &imp, false)).unwrap();
    let stored = dir.path().join("stored");
    cmd_analyze(&run_with(&cfg, &stored, false), Some(&imp.join("imputations"))).unwrap();
    assert_eq!(
        fs::read(base.join("pooled_estimates.json")).unwrap(),
        fs::read(stored.join("pooled_estimates.json")).unwrap()
    );

    let mnar = dir.path().join("mnar");
    cmd_mnar(&run_with(&cfg, &mnar, false), Some(&imp.join("imputations"))).unwrap();
    let sc = read_json(&mnar.join("scenarios.json"));
    let first = &sc["scenarios"][0];
    assert_eq!(first["id"], 1);
    assert_eq!(first["delta_c"], est["decision"]["delta_c"]);
    assert_eq!(first["delta_e"], est["decision"]["delta_e"]);
    assert_eq!(sc["scenarios"].as_array().unwrap().len(), 7);
}

#[test]
fn binary_reports_missing_input_with_io_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = linkage_fixture(dir.path());
    fs::remove_file(dir.path().join("wards.csv")).unwrap();
    let output = Command::new(env!("CARGO_BIN_EXE_crt-cea"))
        .args(["ingest", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(4));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("file not found"), "{stderr}");
    assert!(stderr.contains("wards.csv"), "{stderr}");
}

#[test]
fn binary_rejects_unknown_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "seed = 1\n[analysis]\nbootstrap_rep = 5\n").unwrap();
    let output = Command::new(env!("CARGO_BIN_EXE_crt-cea")).args(["ingest", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}
