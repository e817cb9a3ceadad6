use std::collections::BTreeMap;

use crt_cea_core::outcomes::{
    complete_case_resource_table, hospitalisation_cost, intervention_cost, map_profile, qaly_auc,
    readmission_summary, ActivityTable, UnitCostTable, UtilityTrajectory, ValueSet, DAYS_PER_YEAR,
};
use crt_cea_core::trial::{Arm, Eq5dProfile, MergedDataset, PatientRecord, Readmission, WardInfo};
use crt_cea_core::CeaError;
use proptest::prelude::*;

fn traj(u: [f64; 4], death: Option<u32>) -> UtilityTrajectory {
    UtilityTrajectory { utilities: u, death_day: death }
}

/// Trapezoid oracle on an explicit (day, utility) polyline.
fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum::<f64>() / 365.0
}

fn costs(per_admission: f64, per_day: f64) -> UnitCostTable {
    UnitCostTable {
        currency_year: 2022,
        resources: [("outpatient".to_string(), 120.0)].into_iter().collect(),
        wages_per_minute: [("nursing_manager".to_string(), 0.90), ("medical".to_string(), 2.682)].into_iter().collect(),
        per_admission,
        per_day,
        charge_index_stay: false,
    }
}

/// Additive decrement model covering all 3,125 states.
fn toy_valueset() -> ValueSet {
    ValueSet::new((0..3125).map(|k| {
        let p = Eq5dProfile::from_ordinal(k).unwrap();
        let lv = p.levels();
        let dec: f64 = lv.iter().map(|&l| 0.07 * (l as f64 - 1.0)).sum();
        (p, 1.0 - dec)
    }))
    .unwrap()
}

#[test]
fn arm_mean_trajectories_give_anchor_qalys() {
    let control = qaly_auc(&traj([0.5010, 0.4788, 0.4747, 0.4945], None));
    let intervention = qaly_auc(&traj([0.4782, 0.4498, 0.4384, 0.4156], None));
    assert!((control - 0.1191).abs() <= 0.0005, "{control}");
    assert!((intervention - 0.1072).abs() <= 0.0005, "{intervention}");
}

#[test]
fn full_health_and_immediate_death() {
    assert!((qaly_auc(&traj([1.0; 4], None)) - 90.0 / DAYS_PER_YEAR).abs() < 1e-15);
    assert_eq!(qaly_auc(&traj([0.8; 4], Some(0))), 0.0);
}

#[test]
fn hospitalisation_single_readmission() {
    let r = [Readmission { start_day: 15, length_days: Some(3.0) }];
    assert_eq!(hospitalisation_cost(&r, None, &costs(500.0, 300.0)).unwrap(), Some(1400.0));
}

#[test]
fn intervention_delivery_cost_by_arm() {
    let a = ActivityTable::trial_default();
    let c = costs(0.0, 0.0);
    let i = intervention_cost(&a, &c, Arm::Intervention).unwrap();
    assert!((i - (75.0 * 0.90 + 10.0 * 2.682)).abs() < 1e-9);
    assert!((i - 94.32).abs() < 1e-9);
    assert_eq!(intervention_cost(&a, &c, Arm::Control).unwrap(), 0.0);
}

#[test]
fn profile_mapping() {
    let vs = toy_valueset();
    assert_eq!(map_profile([1; 5], &vs).unwrap(), 1.0);
    assert!((map_profile([5; 5], &vs).unwrap() - (1.0 - 5.0 * 4.0 * 0.07)).abs() < 1e-12);
    assert!(matches!(map_profile([0, 1, 1, 1, 1], &vs), Err(CeaError::Validation(_))));
    assert!(map_profile([1, 1, 6, 1, 1], &vs).is_err());
}

fn patient(id: &str, arm: Arm, readmissions: usize, outpatient: Option<f64>) -> PatientRecord {
    PatientRecord {
        patient_id: id.into(),
        arm,
        ward_id: if arm == Arm::Control { "w1".into() } else { "w2".into() },
        age: 80.0,
        sex_male: true,
        eq5d: Default::default(),
        death_day: None,
        readmissions: (0..readmissions).map(|k| Readmission { start_day: 5 + k as u32, length_days: Some(2.0) }).collect(),
        index_stay_days: Some(4.0),
        resource_use: [("outpatient".to_string(), outpatient)].into_iter().collect::<BTreeMap<_, _>>(),
    }
}

fn ward(id: &str) -> WardInfo {
    WardInfo { ward_id: id.into(), specialty_elderly: false, baseline_readmission_rate: Some(10.0), pct_over_75: 60.0 }
}

#[test]
fn readmission_counts_summarised() {
    let m = MergedDataset::new(
        vec![
            patient("a", Arm::Control, 0, None),
            patient("b", Arm::Control, 0, None),
            patient("c", Arm::Intervention, 1, None),
            patient("d", Arm::Intervention, 2, None),
        ],
        vec![ward("w1"), ward("w2")],
    )
    .unwrap();
    let (by_arm, all) = readmission_summary(&m);
    assert_eq!(all.stat.mean, 0.75);
    assert_eq!(all.distribution, [(0, 2), (1, 1), (2, 1)].into_iter().collect());
    assert_eq!(by_arm[Arm::Control.index()].stat.mean, 0.0);
    assert_eq!(by_arm[Arm::Intervention.index()].stat.mean, 1.5);
}

#[test]
fn complete_case_usage_percentages() {
    let m = MergedDataset::new(
        vec![
            patient("a", Arm::Control, 0, Some(0.0)),
            patient("b", Arm::Control, 0, Some(0.0)),
            patient("c", Arm::Intervention, 0, Some(2.0)),
            patient("d", Arm::Intervention, 0, Some(0.0)),
            patient("e", Arm::Intervention, 0, None),
        ],
        vec![ward("w1"), ward("w2")],
    )
    .unwrap();
    let rows = complete_case_resource_table(&m, &["outpatient".to_string()]);
    assert_eq!(rows[0].total.n, 4);
    assert_eq!(rows[0].total.percent_using, Some(25.0));

    let none = MergedDataset::new(
        vec![patient("y", Arm::Control, 0, None), patient("z", Arm::Intervention, 0, None)],
        vec![ward("w1"), ward("w2")],
    )
    .unwrap();
    let rows = complete_case_resource_table(&none, &["outpatient".to_string()]);
    assert_eq!(rows[0].total.n, 0);
    assert_eq!(rows[0].total.percent_using, None);
}

fn utility() -> impl Strategy<Value = f64> {
    -0.594f64..=1.0
}

fn utilities() -> impl Strategy<Value = [f64; 4]> {
    [utility(), utility(), utility(), utility()]
}

proptest! {
    #[test]
    fn auc_matches_polyline_oracle(u in utilities(), death in proptest::option::of(0u32..=120)) {
        let days = [0.0, 10.0, 30.0, 90.0];
        let mut pts: Vec<(f64, f64)> = Vec::new();
        match death {
            None => pts.extend(days.iter().copied().zip(u)),
            Some(d) => {
                let d = d.min(90) as f64;
                for k in 0..4 {
                    if days[k] < d {
                        pts.push((days[k], u[k]));
                    }
                }
                if !pts.is_empty() {
                    pts.push((d, 0.0));
                }
            }
        }
        let expected = trapezoid(&pts);
        let got = qaly_auc(&traj(u, death));
        prop_assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn auc_is_linear_in_utilities(u in utilities(), v in utilities(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let mix: [f64; 4] = core::array::from_fn(|k| a * u[k] + b * v[k]);
        let lhs = qaly_auc(&traj(mix, None));
        let rhs = a * qaly_auc(&traj(u, None)) + b * qaly_auc(&traj(v, None));
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn auc_bounded_by_extreme_utilities(u in utilities(), death in proptest::option::of(0u32..=90)) {
        let q = qaly_auc(&traj(u, death));
        let span = death.unwrap_or(90) as f64 / 365.0;
        let lo = u.iter().cloned().fold(f64::INFINITY, f64::min).min(0.0);
        let hi = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(0.0);
        prop_assert!(q >= lo * span - 1e-12 && q <= hi * span + 1e-12);
    }

    #[test]
    fn earlier_death_never_adds_qalys(u in [0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0], d1 in 0u32..=90, d2 in 0u32..=90) {
        let (early, late) = (d1.min(d2), d1.max(d2));
        prop_assert!(qaly_auc(&traj(u, Some(early))) <= qaly_auc(&traj(u, Some(late))) + 1e-15);
        prop_assert!(qaly_auc(&traj(u, Some(late))) <= qaly_auc(&traj(u, None)) + 1e-15);
    }

    #[test]
    fn costs_scale_with_unit_prices(k in 0.0f64..10.0, n in 0usize..5, len in 0.0f64..30.0) {
        let base = costs(500.0, 300.0);
        let r: Vec<Readmission> = (0..n).map(|j| Readmission { start_day: j as u32, length_days: Some(len) }).collect();
        let c1 = hospitalisation_cost(&r, None, &base).unwrap().unwrap();
        let ck = hospitalisation_cost(&r, None, &base.scaled(k)).unwrap().unwrap();
        prop_assert!((ck - k * c1).abs() <= 1e-9 * (1.0 + ck.abs()));
        let a = ActivityTable::trial_default();
        let i1 = intervention_cost(&a, &base, Arm::Intervention).unwrap();
        let ik = intervention_cost(&a, &base.scaled(k), Arm::Intervention).unwrap();
        prop_assert!((ik - k * i1).abs() <= 1e-9 * (1.0 + ik.abs()));
    }
}
