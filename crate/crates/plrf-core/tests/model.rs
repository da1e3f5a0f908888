use plrf_core::model::*;
use plrf_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn inst(alpha: f64, beta: f64, m: usize, d: usize, seed: u64) -> PlrfInstance {
    build_instance(PlrfParams { alpha, beta, model_size: m, ambient_dim: d, seed }).unwrap()
}

fn random_theta(m: usize, seed: u64, scale: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m).map(|_| scale * (rng.random::<f64>() * 2.0 - 1.0)).collect()
}

/// `(Sᵀθ − w*)ᵀ H (Sᵀθ − w*)` computed entry by entry from the stored sketch.
fn brute_loss(p: &PlrfInstance, theta: &[f64]) -> f64 {
    let (m, d) = (p.model_size(), p.ambient_dim());
    let mut total = 0.0;
    for j in 0..d {
        let mut s = 0.0;
        for i in 0..m {
            s += p.sketch[(i, j)] * theta[i];
        }
        let h = ((j + 1) as f64).powf(-2.0 * p.params.alpha);
        let w = ((j + 1) as f64).powf(-p.params.beta);
        total += h * (s - w) * (s - w);
    }
    total
}

#[test]
fn one_dimensional_case_is_exact() {
    let p = inst(0.5, 0.3, 1, 1, 5);
    let s = p.sketch[(0, 0)];
    assert!((p.k[(0, 0)] - s * s).abs() < 1e-15);
    assert!((p.theta_star[0] - 1.0 / s).abs() < 1e-12 * (1.0 / s).abs());
    assert!(p.w_perp_energy.abs() < 1e-24);
    assert!(p.population_loss(&p.theta_star) < 1e-24);
    let (lo, hi) = p.diag_scale_check();
    assert_eq!(lo, hi);
}

#[test]
fn approximation_level_at_reference_point() {
    let p = inst(1.0, 0.0, 200, 800, 11);
    let v = p.w_perp_energy * 200.0;
    assert!((0.1..=10.0).contains(&v), "w_perp * M = {v}");
}

#[test]
fn trace_of_sqrt_diag_scales_like_m_to_three_quarters() {
    let mean: f64 = (0..20).map(|s| inst(0.25, 0.5, 64, 256, s).trace_sqrt_diag).sum::<f64>() / 20.0;
    let r = mean / 64f64.powf(0.75);
    assert!((0.2..=5.0).contains(&r), "ratio {r}");
}

#[test]
fn loss_reference_values() {
    let p = inst(0.8, 0.3, 8, 32, 2);
    let zero = vec![0.0; 8];
    let expected: f64 = (1..=32).map(|j| (j as f64).powf(-1.6 - 0.6)).sum();
    assert!((p.population_loss(&zero) - expected).abs() < 1e-10 * expected);
    assert!((p.population_loss(&p.theta_star) - p.w_perp_energy).abs() < 1e-12);
    for s in 0..10 {
        let t = random_theta(8, s, 2.0);
        let b = brute_loss(&p, &t);
        assert!((p.population_loss(&t) - b).abs() < 1e-10 * b.max(1.0));
        assert!((p.population_loss_direct(&t) - b).abs() < 1e-10 * b.max(1.0));
    }
}

#[test]
fn k_equals_s_h_st() {
    let p = inst(0.7, 0.2, 6, 24, 9);
    for a in 0..6 {
        for b in 0..6 {
            let mut v = 0.0;
            for j in 0..24 {
                v += p.sketch[(a, j)] * p.sketch[(b, j)] * ((j + 1) as f64).powf(-1.4);
            }
            assert!((p.k[(a, b)] - v).abs() < 1e-12);
            assert_eq!(p.k[(a, b)], p.k[(b, a)]);
        }
    }
}

#[test]
fn diag_sandwich_over_twenty_seeds() {
    for &alpha in &[1.0, 0.25] {
        for seed in 0..20 {
            let (lo, hi) = inst(alpha, 0.0, 200, 800, seed).diag_scale_check();
            assert!(lo >= 0.05 && hi <= 20.0, "alpha {alpha} seed {seed}: ({lo}, {hi})");
        }
    }
}

#[test]
fn structural_invariants() {
    for &(a, b, seed) in &[(1.0, 0.0, 1u64), (0.4, 0.8, 2), (0.7, 1.1, 3), (0.3, 0.3, 4)] {
        let p = inst(a, b, 40, 160, seed);
        let m = 40;
        // K_σ range and diagonal.
        for r in 0..m {
            assert_eq!(p.k_sigma[(r, r)], std::f64::consts::FRAC_PI_2);
            for c in 0..m {
                assert!(p.k_sigma[(r, c)].abs() <= std::f64::consts::FRAC_PI_2);
            }
        }
        // S H w_⊥ = 0.
        let shw_norm = p.target_proj.iter().map(|v| v * v).sum::<f64>().sqrt();
        let kt: Vec<f64> = (0..m).map(|r| (0..m).map(|c| p.k[(r, c)] * p.theta_star[c]).sum()).collect();
        let resid = kt.iter().zip(&p.target_proj).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        assert!(resid <= 1e-8 * shw_norm, "({a},{b}) residual {resid}");
        // Sorted spectrum and eigen relations of K̄ = D^{-1/2} K.
        assert!(p.k_bar_spectrum.windows(2).all(|w| w[0] >= w[1]));
        let l1 = p.k_bar_spectrum[0];
        for i in 0..m {
            let u = p.right_modes.column(i);
            let w = p.left_modes.column(i);
            let li = p.k_bar_spectrum[i];
            for r in 0..m {
                let kbu: f64 = (0..m).map(|c| p.k[(r, c)] * u[c]).sum::<f64>() / p.k_diag[r].sqrt();
                assert!((kbu - li * u[r]).abs() <= 1e-8 * l1);
                let wkb: f64 = (0..m).map(|c| w[c] * p.k[(c, r)] / p.k_diag[c].sqrt()).sum();
                assert!((wkb - li * w[r]).abs() <= 1e-8 * l1);
            }
            for j in 0..m {
                let ip = w.dot(&p.right_modes.column(j));
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((ip - target).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn modal_reconstruction_for_random_thetas() {
    let p = inst(0.9, 0.2, 24, 96, 17);
    for s in 0..100 {
        let t = random_theta(24, 1000 + s, 1.5);
        let r: f64 = p.mode_energies(&t).iter().sum();
        let l = p.population_loss(&t);
        assert!(((r + p.w_perp_energy) - l).abs() <= 1e-6 * l);
    }
}

#[test]
fn noise_coefficients_sum_rule() {
    // Σ V_i / λ_i = (π/2) Tr(D^{1/2}) since the diagonal of K_σ is π/2.
    let p = inst(0.6, 0.4, 16, 64, 3);
    let s: f64 = p.noise_coeffs.iter().zip(&p.k_bar_spectrum).map(|(v, l)| v / l).sum();
    let want = std::f64::consts::FRAC_PI_2 * p.trace_sqrt_diag;
    assert!((s - want).abs() < 1e-8 * want);
    assert!(p.noise_coeffs.iter().all(|&v| v >= -1e-12));
}

#[test]
fn deterministic_given_seed() {
    let a = inst(1.0, 0.0, 12, 48, 77);
    let b = inst(1.0, 0.0, 12, 48, 77);
    assert_eq!(a.sketch, b.sketch);
    assert_eq!(a.theta_star, b.theta_star);
    let c = inst(1.0, 0.0, 12, 48, 78);
    assert_ne!(a.sketch, c.sketch);
}

#[test]
fn parameter_validation_and_cap() {
    let bad = PlrfParams { alpha: 0.0, beta: 0.0, model_size: 4, ambient_dim: 16, seed: 0 };
    assert!(matches!(build_instance(bad), Err(Error::InvalidParameter(_))));
    let bad = PlrfParams { alpha: 1.0, beta: 0.0, model_size: 4, ambient_dim: 2, seed: 0 };
    assert!(build_instance(bad).is_err());
    let big = PlrfParams::new(1.0, 0.0, 64, 0);
    let err = PlrfInstance::build(big, BuildOptions { max_elements: 100 }).unwrap_err();
    assert!(matches!(err, Error::DimensionCap { m: 64, d: 256, cap: 100 }));
    assert_eq!(PlrfParams::new(1.0, 0.0, 50, 0).ambient_dim, 200);
}

#[test]
fn metadata_serializes() {
    let p = inst(1.0, 0.0, 8, 32, 1);
    let js = serde_json::to_string(&p.meta()).unwrap();
    assert!(js.contains("w_perp_energy"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn loss_is_bounded_below_by_the_projection_residual(seed in 0u64..1000, ts in 0u64..1000, a in 0.2f64..1.5, b in -0.2f64..1.5) {
        prop_assume!(a + b > 0.5);
        let p = inst(a, b, 10, 40, seed);
        let t = random_theta(10, ts, 3.0);
        prop_assert!(p.population_loss(&t) >= p.w_perp_energy);
        let e = p.mode_energies(&t);
        prop_assert!(e.iter().all(|&r| r >= -1e-12 * p.population_loss(&t)));
    }
}
