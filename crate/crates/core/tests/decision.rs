use crt_cea_core::decision::{apply_mnar_rescale, icer, nhb, nmb, scenario_table, DecisionSummary, Icer, MnarScenario};
use crt_cea_core::missing::{CellStatus, COL_UTILITY};
use crt_cea_core::CeaError;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

#[test]
fn nmb_is_threshold_times_nhb_on_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10_000 {
        let dc = rng.random_range(-5000.0..5000.0);
        let de = rng.random_range(-0.5..0.5);
        let lambda = rng.random_range(1.0..100_000.0);
        let a = nmb(dc, de, lambda).unwrap();
        let b = lambda * nhb(dc, de, lambda).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0), "{dc} {de} {lambda}: {a} vs {b}");
    }
}

#[test]
fn icer_sign_partition() {
    assert_eq!(icer(-268.78, 0.0057), Icer::Dominant);
    assert_eq!(icer(300.0, 0.02), Icer::Ratio(15000.0));
    assert_eq!(icer(100.0, -0.01), Icer::Dominated);
    assert_eq!(icer(100.0, 0.0), Icer::Undefined);
    assert_eq!(Icer::Dominant.label(), "Dominant");
}

#[test]
fn break_even_gives_zero_benefit() {
    assert_eq!(nhb(150.0, 0.01, 15000.0).unwrap(), 0.0);
    assert_eq!(nmb(150.0, 0.01, 15000.0).unwrap(), 0.0);
}

#[test]
fn net_health_benefit_arithmetic() {
    let v = nhb(-268.78, 0.0057, 15000.0).unwrap();
    assert!((v - 0.023619).abs() < 5e-7, "{v}");
    let d = DecisionSummary::new(-268.78, 0.0057, 15000.0, 0.89).unwrap();
    assert_eq!(d.icer, Icer::Dominant);
    assert!((d.nmb - 15000.0 * d.nhb).abs() < 1e-9);
}

#[test]
fn nonpositive_threshold_rejected() {
    assert!(matches!(nhb(1.0, 0.1, 0.0), Err(CeaError::Domain(_))));
    assert!(matches!(nmb(1.0, 0.1, -1.0), Err(CeaError::Domain(_))));
    assert!(nhb(1.0, 0.1, f64::INFINITY).is_err());
}

#[test]
fn scenario_table_is_the_seven_factor_pairs() {
    let pairs: Vec<(u8, f64, f64)> = scenario_table().iter().map(|s| (s.id, s.c_control, s.c_intervention)).collect();
    assert_eq!(
        pairs,
        [(1, 1.0, 1.0), (2, 1.0, 0.95), (3, 0.95, 1.0), (4, 0.95, 0.95), (5, 0.95, 0.90), (6, 0.90, 0.95), (7, 0.90, 0.90)]
    );
    assert!(scenario_table()[0].is_identity());
}

fn checksum(values: impl Iterator<Item = Option<f64>>) -> u64 {
    values.fold(0u64, |acc, v| acc.rotate_left(7) ^ v.map_or(u64::MAX, f64::to_bits))
}

#[test]
fn rescaling_touches_only_imputed_utilities() {
    let (cfg, merged, _) = common::simulated(21, common::mar_30());
    let table = common::table_for(&merged, &cfg);
    let sets = common::impute(&table, 3, 4, &crt_cea_core::Serial);
    let scen = MnarScenario { id: 7, c_control: 0.90, c_intervention: 0.90 };
    let out = apply_mnar_rescale(&sets, &scen).unwrap();
    let mask = sets.mask.as_ref().unwrap();
    for (a, b) in sets.datasets.iter().zip(&out.datasets) {
        for (ca, cb) in a.columns.iter().zip(&b.columns) {
            let status = mask.column(&ca.name);
            let is_util = COL_UTILITY.contains(&ca.name.as_str());
            let untouched = |i: usize| !is_util || status.is_none_or(|s| s[i] != CellStatus::Imputed);
            let keep_a = checksum((0..ca.values.len()).filter(|&i| untouched(i)).map(|i| ca.values[i]));
            let keep_b = checksum((0..cb.values.len()).filter(|&i| untouched(i)).map(|i| cb.values[i]));
            assert_eq!(keep_a, keep_b, "column {} changed outside imputed cells", ca.name);
            for i in (0..ca.values.len()).filter(|&i| !untouched(i)) {
                assert_eq!(cb.values[i].unwrap(), ca.values[i].unwrap() * 0.90);
            }
        }
    }
}

#[test]
fn rescale_of_a_half_utility() {
    let (cfg, merged, _) = common::simulated(22, common::mar_30());
    let table = common::table_for(&merged, &cfg);
    let mut sets = common::impute(&table, 2, 4, &crt_cea_core::Serial);
    let mask = sets.mask.clone().unwrap();
    let status = mask.column(COL_UTILITY[1]).unwrap();
    let i = status.iter().position(|s| *s == CellStatus::Imputed).expect("an imputed cell");
    let j = sets.datasets[0].column_index(COL_UTILITY[1]).unwrap();
    sets.datasets[0].columns[j].values[i] = Some(0.50);
    let arm = sets.datasets[0].rows[i].arm;
    let scen = MnarScenario {
        id: 9,
        c_control: if arm == crt_cea_core::trial::Arm::Control { 0.90 } else { 1.0 },
        c_intervention: if arm == crt_cea_core::trial::Arm::Control { 1.0 } else { 0.90 },
    };
    let out = apply_mnar_rescale(&sets, &scen).unwrap();
    assert!((out.datasets[0].columns[j].values[i].unwrap() - 0.45).abs() < 1e-15);
}

#[test]
fn rescale_without_mask_fails() {
    let (cfg, merged, _) = common::simulated(23, common::mar_30());
    let table = common::table_for(&merged, &cfg);
    let mut sets = common::impute(&table, 2, 4, &crt_cea_core::Serial);
    sets.mask = None;
    assert!(matches!(apply_mnar_rescale(&sets, &scenario_table()[1]), Err(CeaError::MissingMask)));
}

proptest! {
    #[test]
    fn nhb_nmb_identity(dc in -1e5f64..1e5, de in -1.0f64..1.0, lambda in 1e-3f64..1e6) {
        let a = nmb(dc, de, lambda).unwrap();
        let b = lambda * nhb(dc, de, lambda).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0));
    }

    #[test]
    fn icer_ratio_only_in_trade_off_quadrants(dc in -1e4f64..1e4, de in -1.0f64..1.0) {
        match icer(dc, de) {
            Icer::Dominant => prop_assert!(dc < 0.0 && de > 0.0),
            Icer::Dominated => prop_assert!(dc > 0.0 && de < 0.0),
            Icer::Undefined => prop_assert!(de == 0.0),
            Icer::Ratio(r) => prop_assert!((r - dc / de).abs() <= 1e-12 * r.abs().max(1.0)),
        }
    }

    #[test]
    fn nhb_monotone_in_effect(dc in -1e4f64..1e4, de in -1.0f64..1.0, step in 0.0f64..1.0, lambda in 1.0f64..1e5) {
        prop_assert!(nhb(dc, de + step, lambda).unwrap() >= nhb(dc, de, lambda).unwrap());
    }
}
