//! The acceptance suite: eleven criteria, each a set of numeric checks with fixed tolerances.
//!
//! `quick` runs the checks that need no long simulation (1, 2, 3 and 11). `full` runs all of
//! them. `scale < 1` shrinks model sizes and seed counts and divides every simulation tolerance
//! by `scale`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::Instant;

use plrf_core::optimal::{noisy_compute_optimal, table1_closed_form, wsd_compute_optimal};
use plrf_core::{build_instance, OptimizerConfig, OptimizerKind, PlrfParams, Schedule};
use serde::Serialize;

use crate::error::RunError;
use crate::experiments::{self as ex, signsgd_config};
use crate::sweep::{analyze, run_sweep, Engine, SweepFits, SweepMode, SweepSpec, WindowSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Quick,
    Full,
}

pub const QUICK: [u8; 4] = [1, 2, 3, 11];

impl Level {
    pub fn criteria(self) -> Vec<u8> {
        match self {
            Level::Quick => QUICK.to_vec(),
            Level::Full => (1..=11).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Options {
    pub scale: f64,
    /// Added to every closed-form `η` in criterion 1.
    pub perturb_eta: f64,
}

impl Default for Options {
    fn default() -> Self {
        Self { scale: 1.0, perturb_eta: 0.0 }
    }
}

impl Options {
    fn tol(&self, t: f64) -> f64 {
        if self.scale < 1.0 {
            t / self.scale
        } else {
            t
        }
    }

    fn sizes(&self, sizes: &[usize]) -> Vec<usize> {
        let mut out: Vec<usize> = sizes.iter().map(|&m| ((m as f64 * self.scale).round() as usize).max(8)).collect();
        out.dedup();
        out
    }

    fn seeds(&self, n: usize) -> usize {
        ((n as f64 * self.scale.min(1.0)).ceil() as usize).max(2)
    }

    /// FLOPS budgets move with the size range as `M^{1/x}`.
    fn flops(&self, f: f64, x_star: f64) -> f64 {
        f * self.scale.powf(1.0 / x_star)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub label: String,
    pub measured: f64,
    pub expected: String,
    pub passed: bool,
}

impl Check {
    pub fn within(label: impl Into<String>, measured: f64, target: f64, tol: f64) -> Self {
        Self {
            label: label.into(),
            measured,
            expected: format!("{target:.4} ± {tol}"),
            passed: (measured - target).abs() <= tol,
        }
    }

    pub fn range(label: impl Into<String>, measured: f64, lo: f64, hi: f64) -> Self {
        Self { label: label.into(), measured, expected: format!("in [{lo}, {hi}]"), passed: measured >= lo && measured <= hi }
    }

    pub fn at_most(label: impl Into<String>, measured: f64, limit: f64) -> Self {
        Self { label: label.into(), measured, expected: format!("<= {limit:e}"), passed: measured <= limit }
    }

    pub fn at_least(label: impl Into<String>, measured: f64, limit: f64) -> Self {
        Self { label: label.into(), measured, expected: format!(">= {limit}"), passed: measured >= limit }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub title: &'static str,
    pub checks: Vec<Check>,
    pub seconds: f64,
    pub error: Option<String>,
}

impl CriterionReport {
    pub fn passed(&self) -> bool {
        self.error.is_none() && !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    /// One summary line, `PASS`/`FAIL` first.
    pub fn line(&self) -> String {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        let mut s = format!("{verdict} criterion {:>2} {} ({:.1} s)", self.id, self.title, self.seconds);
        if let Some(e) = &self.error {
            let _ = write!(s, ": error: {e}");
        }
        for c in self.checks.iter().filter(|c| !c.passed) {
            let _ = write!(s, "; {} = {:.6} (expected {})", c.label, c.measured, c.expected);
        }
        s
    }
}

pub fn title(id: u8) -> &'static str {
    match id {
        1 => "closed form equals oracle",
        2 => "sign-Gaussian identity",
        3 => "one-step formula",
        4 => "ODE fidelity",
        5 => "compute-optimal slopes",
        6 => "WSD improvement",
        7 => "limit risk",
        8 => "aligned-drift exponent",
        9 => "noisy-label slope",
        10 => "Adam slope",
        11 => "property suite",
        _ => "unknown",
    }
}

pub fn run_criterion(id: u8, opts: &Options) -> CriterionReport {
    let t = Instant::now();
    let res = match id {
        1 => criterion1(opts),
        2 => criterion2(opts),
        3 => criterion3(opts),
        4 => criterion4(opts),
        5 => criterion5(opts),
        6 => criterion6(opts),
        7 => criterion7(opts),
        8 => criterion8(opts),
        9 => criterion9(opts),
        10 => criterion10(opts),
        11 => criterion11(opts),
        _ => Err(RunError::config(format!("no criterion {id}"))),
    };
    let (checks, error) = match res {
        Ok(c) => (c, None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    CriterionReport { id, title: title(id), checks, seconds: t.elapsed().as_secs_f64(), error }
}

pub fn run(ids: &[u8], opts: &Options) -> Vec<CriterionReport> {
    ids.iter().map(|&id| run_criterion(id, opts)).collect()
}

pub fn table(reports: &[CriterionReport]) -> String {
    let mut s = String::new();
    for r in reports {
        let _ = writeln!(s, "{}", r.line());
        for c in &r.checks {
            let _ = writeln!(
                s,
                "    {} {:<44} {:>14.6}  expected {}",
                if c.passed { "ok  " } else { "FAIL" },
                c.label,
                c.measured,
                c.expected
            );
        }
    }
    let n = reports.iter().filter(|r| r.passed()).count();
    let _ = writeln!(s, "{n}/{} criteria passed", reports.len());
    s
}

type Checks = Result<Vec<Check>, RunError>;

fn criterion1(opts: &Options) -> Checks {
    let c = ex::closed_form_vs_oracle(opts.perturb_eta)?;
    Ok(vec![
        Check::at_most("max |x* closed form − oracle|", c.max_x_error, 1e-6),
        Check::at_most("max |e* closed form − oracle|", c.max_e_error, 1e-6),
        Check::at_most("max |η closed form − oracle|", c.max_eta_error, 1e-6),
        Check::at_most("balancing-term mismatches", c.term_mismatches as f64, 0.0),
        Check::at_least("phases covered", c.phases as f64, 6.0),
    ])
}

pub const SIGN_RHOS: [f64; 5] = [0.0, 0.25, 0.5, 0.8, 1.0];

fn criterion2(_: &Options) -> Checks {
    Ok(SIGN_RHOS
        .iter()
        .enumerate()
        .map(|(i, &rho)| {
            let mc = ex::sign_product_mean(rho, 1_000_000, 0x5167 + i as u64);
            Check::within(format!("E[sign·sign] at rho={rho}"), mc, 2.0 / PI * rho.asin(), 4e-3)
        })
        .collect())
}

fn criterion3(_: &Options) -> Checks {
    let inst = build_instance(PlrfParams { alpha: 1.0, beta: 0.0, model_size: 32, ambient_dim: 128, seed: 1 })?;
    let theta = ex::near_optimum_theta(&inst, 1);
    let rows = ex::one_step_check(&inst, &theta, 0.01, &[0, 15, 31], 1_000_000, 0x0a5e);
    Ok(rows
        .iter()
        .map(|r| {
            let z = (r.mean - r.predicted).abs() / r.std_error;
            Check::at_most(format!("mode {} |MC − formula| / SE", r.mode + 1), z, 5.0)
        })
        .collect())
}

fn criterion4(opts: &Options) -> Checks {
    let m = opts.sizes(&[200])[0];
    let cfg = signsgd_config(1.0, 0.0, m, 4 * m, 0.003, 200_000, opts.seeds(10), 4);
    let f = ex::ode_fidelity(&cfg, 100)?;
    Ok(vec![
        Check::at_least("min ODE / empirical (steps >= 100)", f.min_ratio, 1.0 / 3.0),
        Check::at_most("max ODE / empirical (steps >= 100)", f.max_ratio, 3.0),
        Check::at_most("sum rule relative error", f.max_sum_rule_error, 1e-6),
        Check::at_most("diverged runs", f.n_diverged as f64, 0.0),
    ])
}

/// Sizes used by every compute-optimal sweep.
pub const SWEEP_SIZES: [usize; 4] = [64, 128, 256, 512];
/// `γ₀ = LR_SCALE · M^{−e}` in the simulated sweeps.
pub const LR_SCALE: f64 = 0.1;

/// `(α, β, max FLOPS, seeds)` for criterion 5.
pub const SLOPE_SETTINGS: [(f64, f64, f64, usize); 4] =
    [(0.6, 0.4, 1.5e8, 24), (0.4, 0.8, 3e7, 24), (0.4, 1.0, 3e7, 24), (0.7, 1.1, 3e7, 24)];

pub fn slope_sweep(alpha: f64, beta: f64, max_flops: f64, seeds: usize, opts: &Options) -> SweepSpec {
    let mut s = SweepSpec::new(alpha, beta, opts.sizes(&SWEEP_SIZES));
    s.lr_scale = LR_SCALE;
    s.n_seeds = opts.seeds(seeds);
    s.window = WindowSpec::Interior;
    s.base_seed = 5;
    s.op_cap = 1e16;
    let x = s.theory().and_then(|t| t.x_star).unwrap_or(0.5);
    s.max_flops = Some(opts.flops(max_flops, x));
    s
}

fn fit(spec: &SweepSpec) -> Result<SweepFits, RunError> {
    let res = run_sweep(spec)?;
    Ok(analyze(spec, &res)?.1)
}

fn criterion5(opts: &Options) -> Checks {
    let mut out = Vec::new();
    for &(a, b, f, n) in &SLOPE_SETTINGS {
        let spec = slope_sweep(a, b, f, n, opts);
        let r = table1_closed_form(a, b)?;
        let fits = fit(&spec)?;
        let tag = format!("({a},{b}) {}", r.phase.label.as_str());
        out.push(Check::within(format!("{tag} envelope exponent"), fits.measured_eta, r.eta, opts.tol(0.06)));
        out.push(Check::within(format!("{tag} argmin-size exponent"), fits.argmin_size.slope, r.x_star, opts.tol(0.06)));
    }
    Ok(out)
}

/// `(lr_scale, max FLOPS, seeds, endpoints per decade)` for the WSD comparison at `(1, 0)`.
pub const WSD_PROTOCOL: (f64, f64, usize, usize) = (0.3, 1e9, 6, 8);

pub fn wsd_sweeps(opts: &Options) -> (SweepSpec, SweepSpec) {
    let (scale, flops, seeds, per_decade) = WSD_PROTOCOL;
    let mut c = slope_sweep(1.0, 0.0, flops, seeds, opts);
    c.lr_scale = scale;
    let mut w = c.clone();
    w.optimizer.schedule = Schedule::wsd(1, 0.05, 0.9, 1.0 / 11.0, 1.0);
    w.mode = SweepMode::Endpoint;
    w.grid_per_decade = per_decade;
    (c, w)
}

fn criterion6(opts: &Options) -> Checks {
    let (c, w) = wsd_sweeps(opts);
    let h = wsd_compute_optimal(1.0, 0.0)?.h_star;
    let fc = fit(&c)?;
    let fw = fit(&w)?;
    Ok(vec![
        Check::at_least("WSD exponent − constant exponent", fw.measured_eta - fc.measured_eta, 0.005),
        Check::within("WSD envelope exponent", fw.measured_eta, h, opts.tol(0.04)),
    ])
}

/// `(α, β, M, d, γ₀, steps, seeds)` for the plateau checks.
pub const PLATEAU_SETTINGS: [(f64, f64, usize, usize, f64, u64, usize); 2] =
    [(1.0, 0.0, 200, 800, 0.003, 400_000, 10), (0.6, 0.4, 128, 512, 0.002, 400_000, 10)];

fn criterion7(opts: &Options) -> Checks {
    let mut out = Vec::new();
    for &(a, b, m, d, g, n, s) in &PLATEAU_SETTINGS {
        let m2 = opts.sizes(&[m])[0];
        let cfg = signsgd_config(a, b, m2, d * m2 / m, g, n, opts.seeds(s), 7);
        let p = ex::plateau_vs_limit_risk(&cfg)?;
        out.push(Check::range(format!("({a},{b}) M={m2} γ₀={g} plateau / limit risk"), p.ratio, 0.5, 2.0));
    }
    Ok(out)
}

/// `(α, β, M, d, γ₀, steps, seeds, target, tolerance)`.
pub const ALIGNED_SETTINGS: [(f64, f64, usize, usize, f64, u64, usize, f64, f64); 2] = [
    (0.75, 0.0, 200, 400, 0.0012, 200_000, 5, -0.4, 0.1),
    (1.0, 0.2, 400, 1600, 0.0006, 200_000, 5, -1.077, 0.15),
];
/// Early segment: from this many drift horizons until drift falls to this multiple of the rest.
pub const EARLY_START: f64 = 3.0;
pub const EARLY_DOMINANCE: f64 = 3.0;

fn criterion8(opts: &Options) -> Checks {
    let mut out = Vec::new();
    for &(a, b, m, d, g, n, s, target, tol) in &ALIGNED_SETTINGS {
        let m2 = opts.sizes(&[m])[0];
        let cfg = signsgd_config(a, b, m2, d * m2 / m, g, n, opts.seeds(s), 8);
        let e = ex::early_drift_slope(&cfg, EARLY_START, EARLY_DOMINANCE)?;
        out.push(Check::within(format!("({a},{b}) early-segment slope"), e.slope, target, opts.tol(tol)));
    }
    Ok(out)
}

/// `(lr_scale, max FLOPS, seeds)` for the noisy-label sweep at `(0.8, 0.2)`, `σ = 0.1`.
pub const NOISY_PROTOCOL: (f64, f64, usize) = (1.0, 2e9, 16);

pub fn noisy_sweep(opts: &Options) -> SweepSpec {
    let (scale, flops, seeds) = NOISY_PROTOCOL;
    let mut s = slope_sweep(0.8, 0.2, flops, seeds, opts);
    s.optimizer.label_noise_sigma = 0.1;
    s.lr_scale = scale;
    s.max_flops = Some(opts.flops(flops, noisy_compute_optimal(0.8, 0.2).map(|r| r.x_star).unwrap_or(0.5)));
    s
}

fn criterion9(opts: &Options) -> Checks {
    let spec = noisy_sweep(opts);
    let eta = noisy_compute_optimal(0.8, 0.2)?.eta;
    let f = fit(&spec)?;
    Ok(vec![Check::within("(0.8,0.2) σ=0.1 excess-risk exponent", f.measured_eta, eta, opts.tol(0.06))])
}

/// `(α, β, lr_scale, max FLOPS, seeds)` for the Adam sweep.
pub const ADAM_PROTOCOL: (f64, f64, f64, f64, usize) = (0.7, 1.1, 0.1, 3e8, 16);

pub fn adam_sweep(opts: &Options) -> SweepSpec {
    let (a, b, scale, flops, seeds) = ADAM_PROTOCOL;
    let mut s = slope_sweep(a, b, flops, seeds, opts);
    s.optimizer = OptimizerConfig { kind: OptimizerKind::Adam, ..OptimizerConfig::default() };
    s.lr_scale = scale;
    s.engine = Engine::Simulate;
    s
}

fn criterion10(opts: &Options) -> Checks {
    let spec = adam_sweep(opts);
    let r = table1_closed_form(spec.alpha, spec.beta)?;
    let f = fit(&spec)?;
    Ok(vec![Check::within(
        format!("Adam ({},{}) envelope exponent vs signSGD η", spec.alpha, spec.beta),
        f.measured_eta,
        r.eta,
        opts.tol(0.08),
    )])
}

fn criterion11(_: &Options) -> Checks {
    let p = ex::property_suite()?;
    Ok(vec![
        Check::range("diag sandwich ratio, min over 20 seeds", p.sandwich_min, 0.05, 20.0),
        Check::range("diag sandwich ratio, max over 20 seeds", p.sandwich_max, 0.05, 20.0),
        Check::at_most("modal reconstruction relative error", p.modal_max_error, 1e-6),
        Check::at_most("drift modal vs ambient relative error", p.dual_route_error, 1e-8),
        Check::at_most("antiderivative error / (h·Lip f)", p.antiderivative_worst, 1.0),
        Check::at_least("suboptimal-rate slope unimodal", if p.suboptimal_unimodal { 1.0 } else { 0.0 }, 1.0),
        Check::at_most("suboptimal-rate peak vs table", p.suboptimal_peak_error, 1e-9),
        Check::at_most("exponent map 2x/(2−x) relative error", p.exponent_map_max_error, 1e-12),
    ])
}
