//! Acceptance criteria 1 to 11 at their stated tolerances. Each test prints one PASS/FAIL line.
//! `PLRF_ACCEPTANCE_SCALE` (default 1) shrinks the simulation-based criteria the same way as
//! `plrf validate --scale`.
//!
//! Report lines go straight to the stderr handle so they show up without `--nocapture`.

use std::io::Write;

use plrf::validate::{run_criterion, Options};

fn options() -> Options {
    let scale = std::env::var("PLRF_ACCEPTANCE_SCALE").ok().and_then(|s| s.parse().ok()).unwrap_or(1.0);
    Options { scale, ..Options::default() }
}

fn criterion(id: u8) {
    let r = run_criterion(id, &options());
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{}", r.line());
    for c in &r.checks {
        let status = if c.passed { "ok" } else { "FAIL" };
        let _ = writeln!(err, "    {status} {} = {:.6} (expected {})", c.label, c.measured, c.expected);
    }
    drop(err);
    assert!(r.passed(), "{}", r.line());
}

#[test]
fn criterion_01_closed_form_matches_oracle() {
    criterion(1);
}

#[test]
fn criterion_02_sign_gaussian_identity() {
    criterion(2);
}

#[test]
fn criterion_03_one_step_formula() {
    criterion(3);
}

#[test]
fn criterion_04_ode_fidelity() {
    criterion(4);
}

#[test]
fn criterion_05_compute_optimal_slopes() {
    criterion(5);
}

#[test]
fn criterion_06_wsd_improvement() {
    criterion(6);
}

#[test]
fn criterion_07_limit_risk() {
    criterion(7);
}

#[test]
fn criterion_08_aligned_drift_exponent() {
    criterion(8);
}

#[test]
fn criterion_09_noisy_label_slope() {
    criterion(9);
}

#[test]
fn criterion_10_adam_slope() {
    criterion(10);
}

#[test]
fn criterion_11_property_suite() {
    criterion(11);
}

#[test]
fn perturbed_exponent_fails_criterion_1() {
    let r = run_criterion(1, &Options { perturb_eta: 1e-3, ..Options::default() });
    println!("{} (canary, expected to fail)", r.line());
    assert!(!r.passed());
    assert!(r.checks.iter().any(|c| !c.passed && c.label.contains('η')));
}
