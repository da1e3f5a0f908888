use plrf_core::ode::*;
use plrf_core::trajectory::RecordingGrid;
use plrf_core::{build_instance, PlrfInstance, PlrfParams, Schedule};

fn inst(alpha: f64, beta: f64, m: usize, d: usize, seed: u64) -> PlrfInstance {
    build_instance(PlrfParams { alpha, beta, model_size: m, ambient_dim: d, seed }).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn rhs_scaling_in_gamma0() {
    let p = inst(1.0, 0.0, 16, 64, 1);
    let r = initial_mode_energies(&p);
    let loss = r.iter().sum::<f64>() + p.w_perp_energy;
    let st = OdeState { t: 0.0, r: r.clone(), loss };
    let sch = Schedule::constant(100);
    let a = ode_rhs(&p, &sch, 1e-3, 0.0, &st);
    let b = ode_rhs(&p, &sch, 2e-3, 0.0, &st);
    // Drift part is independent of γ₀; noise part is linear in γ₀.
    let v = &p.noise_coeffs;
    for i in 0..16 {
        let noise_a = 2.0 * 1e-3 / std::f64::consts::PI * v[i];
        let drift_a = a[i] - noise_a;
        let drift_b = b[i] - 2.0 * noise_a;
        assert!((drift_a - drift_b).abs() <= 1e-12 * drift_a.abs().max(1e-300));
    }
}

#[test]
fn stationary_point_has_zero_derivative() {
    for &sigma in &[0.0, 0.3] {
        let p = inst(1.0, 0.0, 32, 128, 2);
        let g = 0.003;
        let r = stationary_modes(&p, g, sigma);
        let loss = r.iter().sum::<f64>() + p.w_perp_energy;
        assert!(rel(loss, limit_risk(&p, g, sigma)) < 1e-10);
        let d = ode_rhs(&p, &Schedule::constant(10), g, sigma, &OdeState { t: 0.0, r: r.clone(), loss });
        let scale: f64 = p.noise_coeffs.iter().map(|v| 2.0 * g / std::f64::consts::PI * v).fold(0.0, f64::max);
        assert!(d.iter().all(|x| x.abs() <= 1e-10 * scale), "{d:?}");
    }
}

#[test]
fn finite_difference_of_solution_matches_rhs() {
    let p = inst(1.0, 0.0, 32, 128, 3);
    let g = 0.003;
    let mut cfg = OdeConfig::new(g, Schedule::constant(1));
    cfg.rtol = 1e-10;
    let k0 = 300u64;
    let grid = RecordingGrid::from_steps(k0 + 1, &[k0 - 1, k0]);
    let sol = integrate(&p, &cfg, k0 + 1, &grid);
    let at = |s: u64| sol.records.iter().find(|r| r.step == s).unwrap();
    let (lo, mid, hi) = (at(k0 - 1), at(k0), at(k0 + 1));
    let d = ode_rhs(&p, &Schedule::constant(k0 + 1), g, 0.0, &mid.state);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..32 {
        let fd = (hi.state.r[i] - lo.state.r[i]) / (2.0 * g);
        num += (fd - d[i]).powi(2);
        den += d[i].powi(2);
    }
    assert!((num / den).sqrt() < 1e-4, "relative error {}", (num / den).sqrt());
}

#[test]
fn drift_only_is_monotone_with_zero_noise() {
    let p = inst(1.0, 0.0, 32, 128, 4);
    let mut cfg = OdeConfig::new(0.01, Schedule::constant(1));
    cfg.drift_only = true;
    let sol = integrate(&p, &cfg, 20_000, &RecordingGrid::default_for(20_000));
    assert!(sol.records.iter().all(|r| r.split.noise == 0.0));
    assert!(sol.records.windows(2).all(|w| w[1].state.loss <= w[0].state.loss));
}

#[test]
fn sum_rule_and_loss_identity() {
    let p = inst(1.0, 0.0, 32, 128, 5);
    let sol = integrate(&p, &OdeConfig::new(0.003, Schedule::constant(1)), 50_000, &RecordingGrid::default_for(50_000));
    assert!(sol.flag.is_none());
    assert_eq!(sol.records[0].step, 0);
    assert_eq!(sol.records.last().unwrap().step, 50_000);
    for r in &sol.records {
        let s = r.split.drift + r.split.noise + r.split.approx;
        assert!(rel(s, r.state.loss) < 1e-6);
        let modal: f64 = r.state.r.iter().sum::<f64>() + p.w_perp_energy;
        assert!(rel(modal, r.state.loss) < 1e-9);
        assert!(r.state.r.iter().all(|&x| x >= 0.0));
    }
    assert!(rel(sol.records[0].state.loss, p.initial_loss) < 1e-9);
}

#[test]
fn drift_component_matches_spectral_formula() {
    let p = inst(0.8, 0.1, 24, 96, 6);
    let sol = integrate(&p, &OdeConfig::new(0.005, Schedule::constant(1)), 10_000, &RecordingGrid::default_for(10_000));
    for r in sol.records.iter().step_by(50) {
        let exact = drift_exact_spectral(&p, r.q) - p.w_perp_energy;
        assert!(rel(r.split.drift, exact) < 1e-5, "step {}: {} vs {}", r.step, r.split.drift, exact);
    }
}

#[test]
fn spectral_routes_agree() {
    let p = inst(1.0, 0.0, 16, 64, 7);
    let a = drift_exact_spectral(&p, 3.7);
    let b = drift_exact_spectral_ambient(&p, 3.7, AMBIENT_EIGEN_CAP).unwrap();
    assert!(rel(a, b) < 1e-8, "{a} vs {b}");
    assert!(rel(drift_exact_spectral(&p, 0.0), p.initial_loss) < 1e-10);
    assert!(rel(drift_exact_spectral_ambient(&p, 0.0, 64).unwrap(), p.initial_loss) < 1e-10);
    assert!(rel(drift_exact_spectral(&p, 1e12), p.w_perp_energy) < 1e-10);
    assert!(drift_exact_spectral_ambient(&p, 1.0, 32).is_err());
    assert!(rel(drift_exact_spectral_auto(&p, 3.7), a) < 1e-8);
}

#[test]
fn limit_risk_edge_cases() {
    let p = inst(1.0, 0.0, 32, 128, 8);
    assert!(rel(limit_risk(&p, 0.0, 0.0), p.w_perp_energy) < 1e-12);
    let q = inst(1.0, 0.0, 8, 8, 8);
    let a = 0.01 * std::f64::consts::PI / 4.0 * q.trace_sqrt_diag;
    assert!(q.w_perp_energy < 1e-20);
    assert!(rel(limit_risk(&q, 0.01, 0.0), a * a) < 1e-9);
}

#[test]
fn loss_decreases_far_above_the_floor() {
    let p = inst(1.0, 0.0, 32, 128, 9);
    let g = 0.003;
    let floor = limit_risk(&p, g, 0.0);
    let sol = integrate(&p, &OdeConfig::new(g, Schedule::constant(1)), 100_000, &RecordingGrid::default_for(100_000));
    let sch = Schedule::constant(100_000);
    let mut checked = 0;
    for r in &sol.records {
        if r.state.loss > 10.0 * floor {
            let d: f64 = ode_rhs(&p, &sch, g, 0.0, &r.state).iter().sum();
            assert!(d < 0.0);
            checked += 1;
        }
    }
    assert!(checked > 10);
    let last = sol.records.last().unwrap().state.loss;
    assert!(rel(last, floor) < 0.05, "{last} vs {floor}");
}

#[test]
fn stable_branch_matches_constant() {
    let p = inst(1.0, 0.0, 32, 128, 10);
    let n = 20_000;
    let grid = RecordingGrid::default_for(n);
    let c = integrate(&p, &OdeConfig::new(0.003, Schedule::constant(1)), n, &grid);
    let s = integrate(&p, &OdeConfig::new(0.003, Schedule::stable_decay(1, 0.8, 0.5, 1.0)), n, &grid);
    for (a, b) in c.records.iter().zip(&s.records) {
        if a.step <= (0.8 * n as f64) as u64 {
            assert!(rel(b.state.loss, a.state.loss) < 1e-6);
        }
    }
}

#[test]
fn tolerance_refinement_is_stable() {
    let p = inst(1.0, 0.0, 32, 128, 11);
    let grid = RecordingGrid::default_for(30_000);
    let a = integrate(&p, &OdeConfig::new(0.003, Schedule::constant(1)), 30_000, &grid);
    let mut cfg = OdeConfig::new(0.003, Schedule::constant(1));
    cfg.rtol = 5e-7;
    let b = integrate(&p, &cfg, 30_000, &grid);
    let (x, y) = (a.records.last().unwrap().state.loss, b.records.last().unwrap().state.loss);
    assert!(rel(x, y) < 1e-4);
}

/// Steps until the drift falls below `1e-6` of its start, in units of `(γ₀ M^α)^{-1}`.
fn collapse_in_horizons(m: usize, g: f64) -> f64 {
    let p = inst(0.4, 1.0, m, 4 * m, 12);
    let horizon = 1.0 / (g * (m as f64).powf(0.4));
    let n = (1000.0 * horizon) as u64;
    let mut cfg = OdeConfig::new(g, Schedule::constant(1));
    cfg.drift_only = true;
    let sol = integrate(&p, &cfg, n, &RecordingGrid::geometric(n, 50, 2000));
    let d0 = sol.records[0].split.drift;
    let hit = sol.records.iter().find(|r| r.split.drift < 1e-6 * d0).expect("drift never collapsed");
    hit.step as f64 / horizon
}

#[test]
fn finite_horizon_collapse_above_the_diagonal() {
    let a = collapse_in_horizons(64, 0.002);
    let b = collapse_in_horizons(128, 0.002);
    let c = collapse_in_horizons(64, 0.0005);
    for v in [a, b, c] {
        assert!(v < 500.0, "{a} {b} {c}");
    }
    let (lo, hi) = (a.min(b).min(c), a.max(b).max(c));
    assert!(hi / lo < 2.0, "{a} {b} {c}");
}
