use fairscope::metrics::{
    classifier_bias_curve, geometric_parity_check, group_parity_bias, model_bias,
    quantile_bias_curve, renormalized_bias, statistical_parity_check, split_by_class, BiasReport,
    GroupParitySpec, LinkFunction, ParityPoint,
};
use fairscope::models::{generate, ModelId, SynthParams};
use fairscope::{Error, FavorableSign};
use proptest::prelude::*;

const UP: FavorableSign = FavorableSign::Up;
const DOWN: FavorableSign = FavorableSign::Down;

fn two_class(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut s = a.to_vec();
    s.extend_from_slice(b);
    let g = (0..s.len()).map(|i| usize::from(i >= a.len())).collect();
    (s, g)
}

#[test]
fn point_mass_report() {
    let (s, g) = two_class(&[0.7; 3], &[0.4; 5]);
    let r = model_bias(&s, &g, UP).unwrap();
    let close = |a: f64, b: f64| (a - b).abs() < 1e-15;
    assert!(close(r.total, 0.3) && close(r.positive, 0.3) && r.negative == 0.0 && close(r.net, 0.3));
    let json = serde_json::to_value(&r).unwrap();
    assert_eq!(json["favorable_sign"], 1);
    for key in ["total", "positive", "negative", "net", "metric"] {
        assert!(json.get(key).is_some());
    }
    let back: BiasReport<f64> = serde_json::from_value(json).unwrap();
    assert_eq!(back, r);
}

#[test]
fn equal_subpopulations_report_zero() {
    let (s, g) = two_class(&[0.1, 0.5, 0.9], &[0.9, 0.1, 0.5]);
    let r = model_bias(&s, &g, DOWN).unwrap();
    assert_eq!((r.total, r.positive, r.negative, r.net), (0.0, 0.0, 0.0, 0.0));
    let q = quantile_bias_curve(&s, &g, DOWN, None).unwrap();
    assert!(q.signed_values.iter().all(|&v| v == 0.0));
}

#[test]
fn input_errors() {
    assert!(matches!(model_bias(&[0.1, 0.2], &[0, 0], UP), Err(Error::MissingClass(1))));
    assert!(matches!(model_bias::<f64>(&[], &[], UP), Err(Error::EmptyInput(_))));
    assert!(matches!(model_bias(&[0.1], &[0, 1], UP), Err(Error::LengthMismatch { .. })));
    assert!(matches!(model_bias(&[0.1, f64::NAN], &[0, 1], UP), Err(Error::NonFinite { .. })));
    assert!(matches!(split_by_class(&[1.0, 2.0], &[0, 2]), Err(Error::InvalidLabel(2))));
}

#[test]
fn m2_true_score_has_mixed_bias() {
    let (ds, model) = generate(ModelId::M2, &SynthParams::default(), 200_000, 21).unwrap();
    let s = model.score_all(&ds.features).unwrap();
    let r = model_bias(&s, &ds.protected, model.favorable_sign).unwrap();
    assert!(r.positive > 0.0 && r.negative > 0.0, "{r:?}");

    let q = quantile_bias_curve(&s, &ds.protected, model.favorable_sign, None).unwrap();
    let pos = q.signed_values.iter().any(|&v| v > 1e-3);
    let neg = q.signed_values.iter().any(|&v| v < -1e-3);
    assert!(pos && neg);
    // Closed form: class 1 has the larger spread, so its lower quantiles of
    // X sit below class 0's, which under score logistic(mu - x) favors it at
    // p near 1 of the score and disfavors it at p near 0.
    let mid = |p: f64| {
        let i = q.grid.iter().position(|&g| g >= p).unwrap();
        q.signed_values[i]
    };
    assert!(mid(0.05) * mid(0.95) < 0.0);
}

#[test]
fn classifier_curve_vanishes_outside_the_support() {
    let (s, g) = two_class(&[0.2, 0.4, 0.6], &[0.3, 0.5]);
    let c = classifier_bias_curve(&s, &g, UP, Some(&[-1.0, 0.25, 0.45, 2.0])).unwrap();
    assert_eq!(c.signed_values[0], 0.0);
    assert_eq!(c.signed_values[3], 0.0);
    assert!((c.signed_values[1] - (0.0 - 1.0 / 3.0)).abs() < 1e-15);
}

#[test]
fn m1_classifier_curve_is_one_signed_up_to_tail_noise() {
    // The population curve never changes sign. Samples can still dip below
    // zero in the extreme tails, by the mass of a sample or two.
    let (ds, model) = generate(ModelId::M1, &SynthParams::default(), 200_000, 22).unwrap();
    let s = model.score_all(&ds.features).unwrap();
    let c = classifier_bias_curve(&s, &ds.protected, DOWN, None).unwrap();
    let one_sample = 2.0 / 200_000.0 * 1.01;
    assert!(c.signed_values.iter().all(|&v| v >= -2.0 * one_sample));
    assert!(c.integral_negative() < 1e-6);
    assert!(c.integral_positive() > 0.1);
}

#[test]
fn curve_csv_is_plot_ready() {
    let (s, g) = two_class(&[0.0], &[1.0]);
    let c = classifier_bias_curve(&s, &g, UP, None).unwrap();
    let mut buf = Vec::new();
    c.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], c.csv_header().join(","));
    assert_eq!(lines.len(), c.grid.len() + 1);
}

#[test]
fn parity_checks() {
    let (s, g) = two_class(&[0.2, 0.5, 0.7], &[0.7, 0.2, 0.5]);
    for p in [0.1, 0.5, 1.0] {
        assert!(geometric_parity_check(&s, &g, ParityPoint::Quantile(p), 1e-12).unwrap());
    }
    let (s, g) = two_class(&[0.0], &[1.0]);
    assert!(!geometric_parity_check(&s, &g, ParityPoint::Quantile(0.5), 1e-12).unwrap());

    // Same law below 3.5, different above it.
    let (s, g) = two_class(&[1.0, 2.0, 3.0, 4.0], &[3.0, 1.0, 10.0, 2.0]);
    for t in [1.5, 2.5, 3.5, 4.0, 5.0] {
        let stat = statistical_parity_check(&s, &g, t, 1e-12).unwrap();
        let geo = geometric_parity_check(&s, &g, ParityPoint::Threshold(t), 1e-12).unwrap();
        assert_eq!(stat, geo, "t = {t}");
    }
    assert!(!statistical_parity_check(&s, &g, 5.0, 1e-12).unwrap());
}

#[test]
fn binary_group_parity_reduces_to_model_bias() {
    let (s, g) = two_class(&[0.1, 0.35, 0.8, 0.8], &[0.2, 0.9, 0.05]);
    let direct = model_bias(&s, &g, UP).unwrap();
    let spec = GroupParitySpec::binary(s.len());
    let res = group_parity_bias(&s, &g, &spec, UP).unwrap();
    let a = &res.aggregate;
    assert_eq!(
        (a.total.to_bits(), a.positive.to_bits(), a.negative.to_bits(), a.net.to_bits()),
        (direct.total.to_bits(), direct.positive.to_bits(), direct.negative.to_bits(), direct.net.to_bits())
    );
}

#[test]
fn equalized_odds_cells() {
    let s = [0.1, 0.6, 0.3, 0.9, 0.2, 0.4, 0.8, 0.5, 0.7, 0.65];
    let g = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
    let y = [false, true, false, true, true, false, true, false, true, true];
    let spec = GroupParitySpec::from_labels(2, &y);
    let res = group_parity_bias(&s, &g, &spec, UP).unwrap();
    let mut expect = 0.0;
    for label in [false, true] {
        let idx: Vec<usize> = (0..10).filter(|&i| y[i] == label).collect();
        let ss: Vec<f64> = idx.iter().map(|&i| s[i]).collect();
        let gg: Vec<usize> = idx.iter().map(|&i| g[i]).collect();
        expect += 0.5 * model_bias(&ss, &gg, UP).unwrap().total;
    }
    assert!((res.aggregate.total - expect).abs() < 1e-15);
    assert_eq!(res.cells.len(), 2);
    assert!(res.cells.iter().all(|c| c.weight == 0.5));
}

#[test]
fn group_parity_with_three_classes() {
    let s = [0.5, 0.5, 0.5, 0.5, 0.5, 0.5];
    let g = [0, 1, 2, 0, 1, 2];
    let spec = GroupParitySpec {
        n_classes: 3,
        events: vec![vec![true; 6]],
        weights: None,
    };
    let res = group_parity_bias(&s, &g, &spec, UP).unwrap();
    assert_eq!(res.aggregate.total, 0.0);
    assert_eq!(res.cells.len(), 2);
}

#[test]
fn group_parity_errors() {
    let s = [0.1, 0.2, 0.3, 0.4];
    let g = [0, 0, 1, 1];
    let overlapping = GroupParitySpec {
        n_classes: 2,
        events: vec![vec![true, true, true, false], vec![true, false, false, true]],
        weights: None,
    };
    assert!(matches!(group_parity_bias(&s, &g, &overlapping, UP), Err(Error::InvalidParity(_))));
    let bad_weights = GroupParitySpec {
        n_classes: 2,
        events: vec![vec![true; 4]],
        weights: Some(vec![vec![0.7]]),
    };
    assert!(group_parity_bias(&s, &g, &bad_weights, UP).is_err());
    // Event {3} has no class-0 sample, so its cell may not carry weight.
    let empty_cell = GroupParitySpec {
        n_classes: 2,
        events: vec![vec![true, true, true, false], vec![false, false, false, true]],
        weights: Some(vec![vec![0.5, 0.5]]),
    };
    assert!(group_parity_bias(&s, &g, &empty_cell, UP).is_err());
    let default_weights = GroupParitySpec { weights: None, ..empty_cell };
    let res = group_parity_bias(&s, &g, &default_weights, UP).unwrap();
    assert_eq!(res.cells.iter().filter(|c| c.report.is_none()).count(), 1);
    assert_eq!(res.cells.iter().map(|c| c.weight).sum::<f64>(), 1.0);
}

#[test]
fn renormalization() {
    let report = |total: f64| BiasReport { total, ..BiasReport::zero(UP, "w1") };
    for link in [LinkFunction::Exponential, LinkFunction::Reciprocal] {
        assert_eq!(renormalized_bias(&report(0.0), 2.0, link).unwrap(), 0.0);
        assert!((renormalized_bias(&report(0.8), 2.0, link).unwrap() - 0.4).abs() < 1e-15);
        assert!(renormalized_bias(&report(5.0), 1.0, link).unwrap() < 1.0);
        let far = renormalized_bias(&report(1e3), 1.0, link).unwrap();
        assert!(far <= 1.0 && far > 0.999);
        // Continuous with unit slope at the joint.
        let h = 1e-6;
        let slope = (link.apply(0.5 + h) - link.apply(0.5)) / h;
        assert!((slope - 1.0).abs() < 1e-4);
        let mut prev = -1.0;
        for i in 0..200 {
            let v = link.apply(i as f64 * 0.05);
            assert!(v > prev);
            prev = v;
        }
    }
    assert!(renormalized_bias(&report(1.0), 0.0, LinkFunction::default()).is_err());
}

fn class_pair() -> impl Strategy<Value = (Vec<f64>, Vec<usize>)> {
    let value = prop_oneof![0.0f64..1.0, (0u8..=8).prop_map(|v| v as f64 / 8.0)];
    (
        prop::collection::vec(value.clone(), 1..50),
        prop::collection::vec(value, 1..50),
    )
        .prop_map(|(a, b)| two_class(&a, &b))
}

proptest! {
    #[test]
    fn report_identities((s, g) in class_pair(), up in any::<bool>()) {
        let sign = if up { UP } else { DOWN };
        let r = model_bias(&s, &g, sign).unwrap();
        let (a, b) = split_by_class(&s, &g).unwrap();
        let gap = a.iter().sum::<f64>() / a.len() as f64 - b.iter().sum::<f64>() / b.len() as f64;
        prop_assert!((r.total - (r.positive + r.negative)).abs() <= 1e-10);
        prop_assert!((r.net - (r.positive - r.negative)).abs() <= 1e-10);
        prop_assert!((r.net - sign.value::<f64>() * gap).abs() <= 1e-9);
        for v in [r.total, r.positive, r.negative] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn flipping_the_sign_swaps_the_parts((s, g) in class_pair()) {
        let up = model_bias(&s, &g, UP).unwrap();
        let down = model_bias(&s, &g, DOWN).unwrap();
        prop_assert_eq!(up.total, down.total);
        prop_assert_eq!(up.positive, down.negative);
        prop_assert_eq!(up.negative, down.positive);
        prop_assert_eq!(up.net, -down.net);
    }

    #[test]
    fn curves_integrate_to_the_report((s, g) in class_pair(), up in any::<bool>()) {
        let sign = if up { UP } else { DOWN };
        let r = model_bias(&s, &g, sign).unwrap();
        let c = classifier_bias_curve(&s, &g, sign, None).unwrap();
        let q = quantile_bias_curve(&s, &g, sign, None).unwrap();
        prop_assert!((c.integral_abs() - r.total).abs() <= 1e-10);
        prop_assert!((q.integral_abs() - r.total).abs() <= 1e-10);
        prop_assert!((c.integral_positive() - r.positive).abs() <= 1e-10);
        prop_assert!((q.integral_negative() - r.negative).abs() <= 1e-10);
    }

    #[test]
    fn single_precision_reports((s, g) in class_pair()) {
        let s32: Vec<f32> = s.iter().map(|&v| v as f32).collect();
        let r = model_bias(&s32, &g, UP).unwrap();
        prop_assert!((r.total - (r.positive + r.negative)).abs() <= 1e-5);
        let r64 = model_bias(&s, &g, UP).unwrap();
        prop_assert!((r.total as f64 - r64.total).abs() <= 1e-5);
    }
}
