use std::fs;

use crt_cea::csvio::{parse_crf_csv, parse_routine_csv, parse_wards_csv, Strictness};
use crt_cea::CliError;
use crt_cea_core::trial::{CrfDataset, Eq5dProfile};

const ROUTINE_HEADER: &str = "patient_id,ward_id,arm,age,sex_male,death_day,readm_start_1,readm_len_1,index_stay_days";

fn crf_header() -> String {
    let mut cols = vec!["patient_id".to_string()];
    for t in ["base", "10", "30", "90"] {
        for d in ["mo", "sc", "ua", "pd", "ad"] {
            cols.push(format!("eq5d_{t}_{d}"));
        }
    }
    cols.push("outpatient".into());
    cols.join(",")
}

fn crf_row(id: &str, base: [&str; 5], outpatient: &str) -> String {
    let mut cells = vec![id.to_string()];
    cells.extend(base.iter().map(|s| s.to_string()));
    cells.extend(std::iter::repeat_n(String::new(), 15));
    cells.push(outpatient.into());
    cells.join(",")
}

#[test]
fn routine_rows_parse_with_missing_markers() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("routine.csv");
    fs::write(
        &p,
        format!("{ROUTINE_HEADER}\nA,w1,0,81,1,,12,3,4\nB,w1,0,79,0,20,,,5\nC,w2,1,88,0,,40,,6\n"),
    )
    .unwrap();
    let parsed = parse_routine_csv(&p, Strictness::Strict).unwrap();
    assert_eq!(parsed.records.len(), 3);
    let [a, b, c] = [&parsed.records[0], &parsed.records[1], &parsed.records[2]];
    assert_eq!(a.readmissions[0].length_days, Some(3.0));
    assert_eq!(b.death_day, Some(20));
    assert!(b.readmissions.is_empty());
    // a blank length stays missing rather than becoming zero
    assert_eq!(c.readmissions[0].length_days, None);
}

#[test]
fn strict_mode_aborts_and_lenient_mode_skips() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("routine.csv");
    fs::write(&p, format!("{ROUTINE_HEADER}\nA,w1,0,81,1,,,,4\nB,w1,7,79,0,,,,5\nC,w2,1,88,0,,,,6\n")).unwrap();
    match parse_routine_csv(&p, Strictness::Strict) {
        Err(CliError::Row { line, message, .. }) => {
            assert_eq!(line, 3);
            assert!(message.contains("arm"), "{message}");
        }
        other => panic!("expected a row error, got {other:?}"),
    }
    let lenient = parse_routine_csv(&p, Strictness::Lenient).unwrap();
    assert_eq!(lenient.records.len(), 2);
    assert_eq!(lenient.skipped.len(), 1);
    assert_eq!(lenient.skipped[0].line, 3);
}

#[test]
fn crf_blank_count_is_missing_and_profiles_are_validated() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("crf.csv");
    fs::write(
        &p,
        format!("{}\n{}\n{}\n", crf_header(), crf_row("A", ["1"; 5], ""), crf_row("B", ["2", "1", "1", "3", "1"], "2")),
    )
    .unwrap();
    let parsed = parse_crf_csv(&p, Strictness::Strict).unwrap();
    let a = &parsed.records[0];
    assert_eq!(a.eq5d[0].profile, Some(Eq5dProfile::FULL_HEALTH));
    assert!(a.eq5d[1].is_missing() && a.eq5d[3].is_missing());
    assert_eq!(a.resource_use.get("outpatient"), Some(&None));
    assert_eq!(parsed.records[1].resource_use.get("outpatient"), Some(&Some(2.0)));

    fs::write(&p, format!("{}\n{}\n", crf_header(), crf_row("A", ["1", "1", "6", "1", "1"], ""))).unwrap();
    assert!(matches!(parse_crf_csv(&p, Strictness::Strict), Err(CliError::Row { .. })));
}

#[test]
fn duplicate_ids_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("crf.csv");
    fs::write(&p, format!("{}\n{}\n{}\n", crf_header(), crf_row("X1", ["1"; 5], ""), crf_row("X1", ["1"; 5], ""))).unwrap();
    let parsed = parse_crf_csv(&p, Strictness::Strict).unwrap();
    let err = CrfDataset::new(parsed.records).unwrap_err();
    assert!(err.to_string().contains("X1"));
}

#[test]
fn wards_need_their_columns() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("wards.csv");
    fs::write(&p, "ward_id,specialty_elderly,baseline_readm_rate_pct,pct_over_75\nw1,1,12.5,70\nw2,0,,55\n").unwrap();
    let w = parse_wards_csv(&p, Strictness::Strict).unwrap().records;
    assert_eq!(w.len(), 2);
    assert_eq!(w[1].baseline_readmission_rate, None);
    fs::write(&p, "ward_id,specialty_elderly\nw1,1\n").unwrap();
    let err = parse_wards_csv(&p, Strictness::Strict).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn absent_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = parse_wards_csv(&dir.path().join("nope.csv"), Strictness::Strict).unwrap_err();
    assert!(matches!(err, CliError::NotFound(_)));
    assert_eq!(err.exit_code(), 4);
    assert!(err.to_string().contains("file not found"));
}
