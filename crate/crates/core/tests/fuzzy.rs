use doa_core::fuzzy::{decode_mf, encode_mf, FuzzyEngine, FuzzyGains, MfGeometry, RuleBase, MIN_CENTER_GAP};
use proptest::array::uniform9;
use proptest::prelude::*;

fn as_array(g: FuzzyGains) -> [f64; 3] {
    [g.kp_norm, g.ki_norm, g.kd_norm]
}

fn default_engine() -> FuzzyEngine {
    FuzzyEngine::new(MfGeometry::default(), RuleBase::default())
}

fn check_geometry(g: &MfGeometry) {
    for (set, lo, hi) in [(&g.error, -1.0, 1.0), (&g.derivative, -1.0, 1.0), (&g.output, 0.0, 1.0)] {
        let c = set.centers();
        assert_eq!((c[0], c[4]), (lo, hi));
        for w in c.windows(2) {
            assert!(w[1] - w[0] >= MIN_CENTER_GAP - 1e-12, "{c:?}");
        }
    }
    assert_eq!(g.error.centers()[2], 0.0);
    assert_eq!(g.derivative.centers()[2], 0.0);
}

#[test]
fn origin_is_neutral() {
    assert_eq!(as_array(default_engine().infer(0.0, 0.0)), [0.5; 3]);
}

#[test]
fn antisymmetry_over_grid() {
    let engine = default_engine();
    for i in -20..=20 {
        for j in -20..=20 {
            let (e, de) = (i as f64 / 17.0, j as f64 / 13.0);
            let g = as_array(engine.infer(e, de));
            let m = as_array(engine.infer(-e, -de));
            for k in 0..3 {
                assert!((g[k] + m[k] - 1.0).abs() < 1e-9, "({e}, {de})");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn repaired_vectors_round_trip(v in uniform9(-3.0..3.0f64)) {
        let g = encode_mf(&v).unwrap();
        check_geometry(&g);
        let canonical = decode_mf(&g);
        let again = encode_mf(&canonical).unwrap();
        for (a, b) in [(&g.error, &again.error), (&g.derivative, &again.derivative), (&g.output, &again.output)] {
            for (x, y) in a.centers().iter().zip(b.centers()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
        for (x, y) in decode_mf(&again).iter().zip(canonical) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn antisymmetric_under_default_rules(e in -1.5..1.5f64, de in -1.5..1.5f64) {
        let engine = default_engine();
        let g = as_array(engine.infer(e, de));
        let m = as_array(engine.infer(-e, -de));
        for k in 0..3 {
            prop_assert!((g[k] + m[k] - 1.0).abs() < 1e-9);
        }
    }
}

proptest! {
    #[test]
    fn outputs_bounded_for_any_geometry(v in uniform9(-2.0..2.0f64), e in -1e6..1e6f64, de in -1e6..1e6f64) {
        let engine = FuzzyEngine::new(encode_mf(&v).unwrap(), RuleBase::default());
        for x in as_array(engine.infer(e, de)) {
            prop_assert!((0.0..=1.0).contains(&x));
        }
    }

    #[test]
    fn small_perturbations_give_small_changes(v in uniform9(-1.0..1.0f64), e in -1.2..1.2f64, de in -1.2..1.2f64) {
        let engine = FuzzyEngine::new(encode_mf(&v).unwrap(), RuleBase::default());
        let a = as_array(engine.infer(e, de));
        let b = as_array(engine.infer(e + 1e-6, de - 1e-6));
        for k in 0..3 {
            prop_assert!((a[k] - b[k]).abs() < 1e-3);
        }
    }
}
