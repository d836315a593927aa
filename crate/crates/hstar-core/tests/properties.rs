//! Property tests for the statistic's route equivalences, range bounds,
//! and invariances.

use hstar_core::stat::{
    difference_space, h_star_algebraic, h_star_definitional, h_star_generalized,
    h_star_weighted, Sample, Side, WeightSpec, H_STAR_MIN,
};
use proptest::prelude::*;

fn sample_values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3..1e3f64, 4..60).prop_filter("not all identical", |v| {
        v.iter().any(|x| *x != v[0])
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn routes_agree(values in sample_values()) {
        let s = Sample::new(values, Side::Max).unwrap();
        let d = h_star_definitional(&s).unwrap();
        let a = h_star_algebraic(&s).unwrap();
        let ds = difference_space(&s).unwrap();
        if d.h_star.is_finite() {
            prop_assert!((d.h_star - a.h_star).abs() / d.h_star <= 1e-10,
                "def {} vs alg {}", d.h_star, a.h_star);
            prop_assert!((d.h_star - ds.h_star).abs() / d.h_star <= 1e-10,
                "def {} vs diff-space {}", d.h_star, ds.h_star);
            let expect_tilde = (2.0 / (d.n as f64 - 2.0)).sqrt() * d.h_star;
            prop_assert!((d.h_tilde - expect_tilde).abs() / expect_tilde <= 1e-10);
        } else {
            prop_assert!(a.h_star.is_infinite());
            prop_assert!(ds.h_tilde.is_infinite());
        }
    }

    #[test]
    fn range_bounds(values in sample_values()) {
        let n = values.len();
        let s = Sample::new(values, Side::Max).unwrap();
        let out = h_star_definitional(&s).unwrap();
        prop_assert!(out.h_star >= H_STAR_MIN - 1e-12);
        prop_assert!(out.h_tilde >= 1.0 / ((n as f64 - 2.0).sqrt()) - 1e-12);
        // Q²/R² always lies in [1, n−1]
        prop_assert!(out.q_over_r_sq >= 1.0 - 1e-9, "{}", out.q_over_r_sq);
        prop_assert!(out.q_over_r_sq <= (n - 1) as f64 + 1e-9, "{}", out.q_over_r_sq);
    }

    #[test]
    fn affine_invariance(values in sample_values(), a in 1e-3..1e3f64, b in -1e6..1e6f64) {
        let s = Sample::new(values.clone(), Side::Max).unwrap();
        let h = h_star_definitional(&s).unwrap().h_star;
        let mapped: Vec<f64> = values.iter().map(|v| a * v + b).collect();
        let sm = Sample::new(mapped, Side::Max).unwrap();
        let hm = h_star_definitional(&sm).unwrap().h_star;
        if h.is_finite() {
            prop_assert!((h - hm).abs() / h <= 1e-10, "{h} vs {hm} (a={a}, b={b})");
        } else {
            prop_assert!(hm.is_infinite());
        }
    }

    #[test]
    fn min_side_reversal_exact(values in sample_values()) {
        let lo = Sample::new(values.clone(), Side::Min).unwrap();
        let neg: Vec<f64> = values.iter().map(|v| -v).collect();
        let hi = Sample::new(neg, Side::Max).unwrap();
        let a = h_star_definitional(&lo).unwrap().h_star;
        let b = h_star_definitional(&hi).unwrap().h_star;
        prop_assert!(a == b || (a.is_infinite() && b.is_infinite()));
    }

    #[test]
    fn unit_weights_reduce(values in sample_values()) {
        let s = Sample::new(values.clone(), Side::Max).unwrap();
        let plain = h_star_definitional(&s).unwrap().h_star;
        prop_assume!(plain.is_finite());
        let w = WeightSpec::uniform(values.len());
        let hw = h_star_weighted(&s, &w).unwrap();
        let hg = h_star_generalized(&s, &w).unwrap();
        prop_assert!((hw - plain).abs() <= 1e-12 * plain.max(1.0));
        prop_assert!((hg - plain).abs() <= 1e-12 * plain.max(1.0));
    }

    #[test]
    fn h_tilde_diverges_with_q_over_r(values in sample_values()) {
        let s = Sample::new(values, Side::Max).unwrap();
        let ds = difference_space(&s).unwrap();
        let n = ds.u.len() + 1;
        // h̃* is infinite exactly when Q²/R² attains n−1
        if ds.h_tilde.is_infinite() {
            prop_assert!((ds.q_over_r_sq - (n as f64 - 1.0)).abs() < 1e-9);
        } else {
            prop_assert!(ds.q_over_r_sq < n as f64 - 1.0);
        }
    }
}
