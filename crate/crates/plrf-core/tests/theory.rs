use plrf_core::theory::*;
use plrf_core::Error;
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn aa_terms_balance_at_the_reference_point() {
    let t = signsgd_terms(1.0, 0.0, 100.0, 1e4, 1e-2).unwrap();
    assert!(rel(t.approx, 0.01) < 1e-12);
    assert!(rel(t.drift_aligned, 0.01) < 1e-12);
    assert!(rel(t.noise, 0.01) < 1e-12);
    assert_eq!(t.drift_distorted, 0.0);
    assert!(rel(t.total, 0.03) < 1e-12);
    assert!(t.regime_flags.is_empty());
}

#[test]
fn ab_uses_capped_exponents() {
    let m: f64 = 50.0;
    let t = signsgd_terms(0.4, 0.4, m, 1e3, 0.1).unwrap();
    assert!(rel(t.noise, 0.01 * m.powf(1.2)) < 1e-12);
    let p = 2.0 * (0.8 + 0.8 - 1.0) / (0.8 - 0.8 + 1.0);
    assert!(rel(t.drift_aligned, (m.powf(0.4) * 1e3 * 0.1).powf(-p)) < 1e-12);
}

#[test]
fn term_signs_follow_exponents() {
    let base = signsgd_terms(0.8, 0.7, 100.0, 1e4, 1e-3).unwrap();
    let big_m = signsgd_terms(0.8, 0.7, 1000.0, 1e4, 1e-3).unwrap();
    assert!(big_m.approx < base.approx);
    assert!(big_m.noise > base.noise);
    assert!(big_m.drift_aligned < base.drift_aligned);
    assert!(big_m.drift_distorted < base.drift_distorted);
    assert!(base.regime_flags.contains(&RegimeFlag::PhaseB));
}

#[test]
fn finite_horizon_branch_is_flagged_and_vanishes() {
    let t = signsgd_terms(0.4, 1.0, 100.0, 1e6, 1e-2).unwrap();
    assert!(t.regime_flags.contains(&RegimeFlag::BetaAboveAlphaHalf));
    assert_eq!(t.drift_aligned, 0.0);
    let t = signsgd_terms(0.4, 1.0, 100.0, 1.0, 1e-3).unwrap();
    assert!(t.drift_aligned > 0.0 && t.drift_aligned < 1.0);
}

#[test]
fn region_is_checked() {
    assert!(matches!(signsgd_terms(0.1, 0.1, 10.0, 10.0, 0.1), Err(Error::Region(m)) if m.contains("alpha+beta must exceed 0.5")));
    assert!(sgd_terms(0.0, 1.0, 10.0, 10.0, 0.1).is_err());
}

#[test]
fn sgd_examples() {
    let e = std::f64::consts::E;
    let t = sgd_terms(0.5, 0.5, 10.0, e, 1.0).unwrap();
    assert!(rel(t.drift_aligned, 1.0 / e) < 1e-12);
    assert!(rel(t.drift_distorted, 0.1) < 1e-12);
    // The SGD drift exponent 0.5 maps to the signSGD exponent 2/3 under x -> 2x/(2-x).
    let x = sgd_drift_exponent(1.0, 0.0);
    assert!((x - 0.5).abs() < 1e-15);
    assert!((2.0 * x / (2.0 - x) - signsgd_drift_exponent(1.0, 0.0)).abs() < 1e-15);
    assert!((signsgd_drift_exponent(1.0, 0.0) - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn drift_exponent_map_on_grid() {
    let mut n = 0;
    for i in 0..10 {
        for j in 0..10 {
            let a = 0.1 + 1.9 * i as f64 / 9.0;
            let b = (0.5 - a + 0.01) + (a + 0.49 - (0.5 - a + 0.01)) * j as f64 / 9.0;
            let x = sgd_drift_exponent(a, b);
            let y = signsgd_drift_exponent(a, b);
            assert!((y - 2.0 * x / (2.0 - x)).abs() <= 1e-12 * y.abs().max(1.0), "({a},{b})");
            assert!(y > x);
            n += 1;
        }
    }
    assert_eq!(n, 100);
}

#[test]
fn adam_alias() {
    let s = signsgd_terms(0.7, 0.3, 64.0, 1e3, 0.01).unwrap();
    let a = adam_terms(0.7, 0.3, 64.0, 1e3, 0.01).unwrap();
    assert_eq!(s.total, a.total);
    assert_eq!(a.optimizer, TheoryOptimizer::AdamConjecture);
    let js = serde_json::to_string(&a).unwrap();
    assert!(js.contains("\"adam_conjecture\"") && js.contains("\"flags\""));
    let back: TheoryEvaluation = serde_json::from_str(&js).unwrap();
    assert_eq!(back, a);
}

#[test]
fn wsd_bound_examples() {
    let (a, b, m, n) = (1.0, 0.0, 100.0f64, 1e4f64);
    let g = m.powf(-5.0 / 6.0);
    let t = wsd_bound_terms(a, b, m, n, g, 1.0 / 11.0);
    assert!(t.iter().all(|v| v.is_finite() && *v > 0.0));
    let constant_noise = signsgd_terms(a, b, m, n, g).unwrap().noise;
    assert!(t[2] + t[3] < constant_noise);
    let near1 = wsd_bound_terms(a, b, m, n, g, 1.0 - 1e-12);
    assert!(rel(near1[2], g * g * m / (n * n)) < 1e-9);
    assert!(rel(near1[3], g.sqrt() * m.powf(0.25)) < 1e-9);
    let one = wsd_loss_bound(a, b, m, 1.0, g, 0.5).unwrap();
    assert!(one >= t[0] + (m.sqrt() * g).powf(-2.0 / 3.0));
    assert!(wsd_loss_bound(0.6, 0.6, m, n, g, 0.5).is_err());
    assert!(wsd_loss_bound(a, b, m, n, g, 1.0).is_err());
}

#[test]
fn noisy_examples() {
    let t = noisy_signsgd_terms(0.8, 0.2, 100.0, 1e4, 0.01, 0.1).unwrap();
    assert_eq!(t.regime_flags, vec![RegimeFlag::NoisyLabel]);
    // p = 2(2α+2β−1)/(2α+1−2β) = 2/2.2 and p' = (2α+2β−1)/(2α) = 1/1.6.
    let base = 10.0 * 1e4 * 0.01;
    let expected = f64::powf(base, -2.0 / 2.2) + f64::powf(base / 0.1, -1.0 / 1.6);
    assert!(rel(t.drift_aligned, expected) < 1e-12);
    let small = noisy_signsgd_terms(0.8, 0.2, 100.0, 1e4, 0.01, 1e-12).unwrap();
    assert!(small.noise - 1e-4 * 100.0 < 1e-12);
    let far = noisy_signsgd_terms(0.8, 0.2, 100.0, 1e30, 0.01, 0.1).unwrap();
    let floor = 1e-4 * 100.0 + 0.1 * 0.01 * 10.0 + 100f64.powf(-1.0);
    assert!(rel(far.total, floor) < 1e-9, "{far:?} vs {floor}");
    assert!(noisy_signsgd_terms(0.8, 0.2, 100.0, 1e4, 0.01, 0.0).is_err());
}

proptest! {
    #[test]
    fn signsgd_aligned_drift_depends_on_n_gamma_product(a in 0.2f64..2.0, t in 0.05f64..0.95, lam in 0.1f64..10.0) {
        let b = (0.5 - a + 0.01) + t * (a + 0.49 - (0.5 - a + 0.01));
        let x = signsgd_terms(a, b, 64.0, 1e3, 1e-3).unwrap();
        let y = signsgd_terms(a, b, 64.0, 1e3 * lam, 1e-3 / lam).unwrap();
        prop_assert!(rel(x.drift_aligned, y.drift_aligned) < 1e-10);
    }

    #[test]
    fn sgd_noise_scales_with_the_exact_exponent(a in 0.3f64..2.0, lam in 0.1f64..10.0) {
        let x = sgd_terms(a, 0.5, 64.0, 1e3, 1e-3).unwrap();
        let y = sgd_terms(a, 0.5, 64.0, 1e3 * lam, 1e-3 / lam).unwrap();
        prop_assert!(rel(y.noise / x.noise, 1.0 / lam) < 1e-10);
    }

    #[test]
    fn signsgd_noise_ignores_n_and_sgd_noise_decreases(a in 0.3f64..2.0, n in 1.0f64..1e6) {
        let x = signsgd_terms(a, 0.5, 64.0, n, 1e-3).unwrap();
        let y = signsgd_terms(a, 0.5, 64.0, 2.0 * n, 1e-3).unwrap();
        prop_assert_eq!(x.noise, y.noise);
        let s = sgd_terms(a, 0.5, 64.0, n, 1e-3).unwrap();
        let u = sgd_terms(a, 0.5, 64.0, 2.0 * n, 1e-3).unwrap();
        prop_assert!(u.noise < s.noise);
    }

    #[test]
    fn total_is_the_sum_of_terms(a in 0.1f64..2.0, b in -0.5f64..2.5, m in 1.0f64..1e4, n in 1.0f64..1e6, g in 1e-5f64..1.0) {
        prop_assume!(a + b > 0.5);
        for t in [signsgd_terms(a, b, m, n, g).unwrap(), sgd_terms(a, b, m, n, g).unwrap()] {
            prop_assert!(t.approx >= 0.0 && t.drift_aligned >= 0.0 && t.drift_distorted >= 0.0 && t.noise >= 0.0);
            prop_assert_eq!(t.total, t.approx + t.drift_aligned + t.drift_distorted + t.noise);
        }
    }

    #[test]
    fn finite_horizon_flag_tracks_the_diagonal(a in 0.1f64..1.5, d in 0.01f64..1.0) {
        let above = signsgd_terms(a, a + 0.5 + d, 16.0, 10.0, 1e-3).unwrap();
        let below = signsgd_terms(a, a + 0.5 - d.min(a), 16.0, 10.0, 1e-3).unwrap();
        prop_assert!(above.regime_flags.contains(&RegimeFlag::BetaAboveAlphaHalf));
        prop_assert!(!below.regime_flags.contains(&RegimeFlag::BetaAboveAlphaHalf));
    }
}
