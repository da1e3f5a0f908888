//! Mode-wise deterministic dynamics of signSGD on a PLRF instance.
//!
//! In step units the mode energies follow
//!
//! ```text
//! dr_i/dk = −(4 γ₀ f(k) / (π √(L + σ²))) λ_i r_i + (2 γ₀² f(k)² / π) V_i,   L = Σ r_i + ‖H^{1/2} w_⊥‖²
//! ```
//!
//! which is the continuous-time system with `t = k γ₀`. Each `r_i` is carried as a drift part
//! `d_i` (zero forcing, `d_i(0) = r_i(0)`) plus a noise part `n_i` (`n_i(0) = 0`), together with the
//! damping exponent `Q(k) = ∫ 4 γ₀ f / (π √(L + σ²))`, so `d_i = r_i(0) e^{−λ_i Q}`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::sorted_symmetric_eigen;
use crate::model::PlrfInstance;
use crate::optim::OptimizerConfig;
use crate::schedule::Schedule;
use crate::trajectory::RecordingGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeConfig {
    pub gamma0: f64,
    pub schedule: Schedule,
    pub sigma: f64,
    pub rtol: f64,
    /// Replace every `V_i` by zero.
    pub drift_only: bool,
    /// Keep the per-mode energies in every record.
    pub keep_modes: bool,
    pub max_steps: u64,
}

impl OdeConfig {
    pub fn new(gamma0: f64, schedule: Schedule) -> Self {
        Self {
            gamma0,
            schedule,
            sigma: 0.0,
            rtol: 1e-6,
            drift_only: false,
            keep_modes: true,
            max_steps: 10_000_000,
        }
    }

    pub fn from_optimizer(cfg: &OptimizerConfig) -> Self {
        Self { sigma: cfg.label_noise_sigma, ..Self::new(cfg.gamma0, cfg.schedule) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeState {
    /// Continuous time `k γ₀`.
    pub t: f64,
    pub r: Vec<f64>,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftNoiseSplit {
    pub drift: f64,
    pub noise: f64,
    pub approx: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeRecord {
    pub step: u64,
    pub state: OdeState,
    pub split: DriftNoiseSplit,
    /// Accumulated damping exponent `Q`.
    pub q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OdeFlag {
    StepUnderflow { step: f64 },
    MaxStepsReached { step: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeSolution {
    pub records: Vec<OdeRecord>,
    pub flag: Option<OdeFlag>,
    pub steps: u64,
    pub rejected_steps: u64,
}

impl OdeSolution {
    pub fn losses(&self) -> Vec<(u64, f64)> {
        self.records.iter().map(|r| (r.step, r.state.loss)).collect()
    }
}

/// `r_i(0)` for `θ₀ = 0`.
pub fn initial_mode_energies(inst: &PlrfInstance) -> Vec<f64> {
    inst.mode_energies(&vec![0.0; inst.model_size()])
}

/// `dr/dt` in continuous time `t = k γ₀` at the state's time.
pub fn ode_rhs(inst: &PlrfInstance, schedule: &Schedule, gamma0: f64, sigma: f64, state: &OdeState) -> Vec<f64> {
    let f = if gamma0 > 0.0 { schedule.multiplier(state.t / gamma0) } else { 1.0 };
    let s = (state.loss + sigma * sigma).sqrt();
    let a = 4.0 * f / (PI * s);
    let b = 2.0 * gamma0 * f * f / PI;
    state
        .r
        .iter()
        .zip(&inst.k_bar_spectrum)
        .zip(&inst.noise_coeffs)
        .map(|((r, l), v)| -a * l * r + b * v)
        .collect()
}

struct System<'a> {
    lambda: &'a [f64],
    r0: Vec<f64>,
    v: Vec<f64>,
    approx: f64,
    gamma0: f64,
    sigma2: f64,
    schedule: Schedule,
    m: usize,
}

impl System<'_> {
    /// State layout: `[Q, d_1..d_M, n_1..n_M]`.
    fn loss(&self, y: &[f64]) -> f64 {
        let m = self.m;
        y[1..1 + 2 * m].iter().map(|v| v.max(0.0)).sum::<f64>() + self.approx
    }

    /// Damping rate `a = 4 γ₀ f / (π √(L+σ²))` and the forcing per unit damping
    /// `g = (2 γ₀² f² / π) / a = γ₀ f √(L+σ²) / 2` at step `k`.
    fn rates(&self, k: f64, y: &[f64]) -> (f64, f64) {
        let f = self.schedule.multiplier(k);
        let s = (self.loss(y) + self.sigma2).sqrt();
        (4.0 * self.gamma0 * f / (PI * s), 0.5 * self.gamma0 * f * s)
    }

    /// Advances `Q` by `dq`. In the variable `Q` mode `i` decays at the constant rate `λ_i`; the
    /// forcing `g V_i` is taken linear in `Q` from `g0` to `g1` and integrated exactly.
    fn propagate(&self, y: &[f64], dq: f64, g0: f64, g1: f64, out: &mut [f64]) {
        let m = self.m;
        out[0] = y[0] + dq;
        for i in 0..m {
            let l = self.lambda[i];
            out[1 + i] = self.r0[i] * (-l * out[0]).exp();
            let x = l * dq;
            let (phi1, phi2) = phi12(x);
            out[1 + m + i] = y[1 + m + i] * (-x).exp() + self.v[i] * (g0 * phi1 + (g1 - g0) * phi2) * dq;
        }
    }

    /// Second-order step: predictor with rates frozen at `k`, then trapezoid damping and linear
    /// forcing between the two ends.
    fn step2(&self, k: f64, y: &[f64], h: f64, out: &mut [f64], tmp: &mut [f64]) {
        let (a0, g0) = self.rates(k, y);
        self.propagate(y, a0 * h, g0, g0, tmp);
        let (a1, g1) = self.rates(k + h, tmp);
        self.propagate(y, 0.5 * (a0 + a1) * h, g0, g1, out);
    }
}

/// `φ₁(x) = (1 − e^{−x})/x` and `φ₂(x) = (x − 1 + e^{−x})/x²`.
fn phi12(x: f64) -> (f64, f64) {
    if x < 1e-4 {
        (1.0 - x / 2.0 + x * x / 6.0, 0.5 - x / 6.0 + x * x / 24.0)
    } else {
        let em1 = (-x).exp_m1();
        (-em1 / x, (x + em1) / (x * x))
    }
}

/// Integrates the mode ODE from `θ₀ = 0` over `n_steps` optimizer steps, recording on `grid`.
///
/// Steps are taken in the damping variable `Q`, where the linear part is solved exactly (an
/// exponential integrator), so the step size follows the variation of the loss and the schedule
/// rather than the stiffness of the fastest mode. The local error is estimated by step doubling.
pub fn integrate(inst: &PlrfInstance, cfg: &OdeConfig, n_steps: u64, grid: &RecordingGrid) -> OdeSolution {
    let m = inst.model_size();
    let dim = 1 + 2 * m;
    let r0: Vec<f64> = initial_mode_energies(inst).into_iter().map(|r| r.max(0.0)).collect();
    let sys = System {
        lambda: &inst.k_bar_spectrum,
        v: if cfg.drift_only { vec![0.0; m] } else { inst.noise_coeffs.clone() },
        r0,
        approx: inst.w_perp_energy,
        gamma0: cfg.gamma0,
        sigma2: cfg.sigma * cfg.sigma,
        schedule: cfg.schedule.with_total_steps(n_steps.max(1)),
        m,
    };
    let mut y = vec![0.0; dim];
    y[1..1 + m].copy_from_slice(&sys.r0);
    let loss0: f64 = sys.loss(&y);
    let atol = 1e-12 * loss0.max(f64::MIN_POSITIVE) / m as f64;

    let mut y1 = vec![0.0; dim];
    let mut y2 = vec![0.0; dim];
    let mut tmp = vec![0.0; dim];
    let mut records = Vec::with_capacity(grid.steps().len());
    let mut flag = None;
    let mut steps = 0u64;
    let mut rejected = 0u64;

    let mut k = 0.0f64;
    let mut h = 0.1f64;

    for &target in grid.steps() {
        let target_f = (target.min(n_steps)) as f64;
        while k < target_f && flag.is_none() {
            let mut hh = h.min(target_f - k);
            // Land exactly on schedule breakpoints.
            for bp in sys.schedule.breakpoints() {
                if bp > k + 1e-12 && bp < k + hh {
                    hh = bp - k;
                }
            }
            if hh < 1e-12 * k.max(1.0) {
                flag = Some(OdeFlag::StepUnderflow { step: k });
                break;
            }
            if steps + rejected >= cfg.max_steps {
                flag = Some(OdeFlag::MaxStepsReached { step: k });
                break;
            }
            sys.step2(k, &y, hh, &mut y1, &mut tmp);
            sys.step2(k, &y, 0.5 * hh, &mut y2, &mut tmp);
            sys.step2(k + 0.5 * hh, &y2.clone(), 0.5 * hh, &mut y2, &mut tmp);
            let mut err_sq = 0.0;
            for j in 0..dim {
                let sc = if j == 0 {
                    cfg.rtol * y2[0].abs().max(y[0].abs()) + 1e-14
                } else {
                    atol + cfg.rtol * y2[j].abs().max(y[j].abs())
                };
                let e = (y2[j] - y1[j]) / (3.0 * sc);
                err_sq += e * e;
            }
            let err = (err_sq / dim as f64).sqrt();
            if err <= 1.0 || hh <= 1e-10 {
                k += hh;
                core::mem::swap(&mut y, &mut y2);
                steps += 1;
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-1.0 / 3.0)).clamp(0.2, 5.0) };
                h = if hh < h { h.max(hh * fac) } else { hh * fac };
            } else {
                rejected += 1;
                h = hh * (0.9 * err.powf(-1.0 / 3.0)).clamp(0.1, 0.9);
            }
        }
        if flag.is_some() && (k as u64) < target {
            break;
        }
        records.push(make_record(inst, &sys, &y, target, cfg));
    }

    OdeSolution { records, flag, steps, rejected_steps: rejected }
}

fn make_record(inst: &PlrfInstance, sys: &System<'_>, y: &[f64], step: u64, cfg: &OdeConfig) -> OdeRecord {
    let m = sys.m;
    let drift: f64 = y[1..1 + m].iter().sum();
    let noise: f64 = y[1 + m..1 + 2 * m].iter().sum();
    let approx = inst.w_perp_energy;
    let r = if cfg.keep_modes { (0..m).map(|i| y[1 + i] + y[1 + m + i]).collect() } else { Vec::new() };
    OdeRecord {
        step,
        state: OdeState { t: step as f64 * cfg.gamma0, r, loss: drift + noise + approx },
        split: DriftNoiseSplit { drift, noise, approx },
        q: y[0],
    }
}

/// `Σ_i r_i(0) e^{−λ_i Q} + ‖H^{1/2} w_⊥‖²`.
pub fn drift_exact_spectral(inst: &PlrfInstance, q: f64) -> f64 {
    let r0 = initial_mode_energies(inst);
    r0.iter()
        .zip(&inst.k_bar_spectrum)
        .map(|(r, l)| r * (-l * q).exp())
        .sum::<f64>()
        + inst.w_perp_energy
}

pub const AMBIENT_EIGEN_CAP: usize = 2048;

/// `⟨e^{−K̄₁ Q}, (H^{1/2} w*)^{⊗2}⟩` with `K̄₁ = H^{1/2} Sᵀ D^{-1/2} S H^{1/2}`, through a
/// `d × d` eigendecomposition. Fails above `cap`.
pub fn drift_exact_spectral_ambient(inst: &PlrfInstance, q: f64, cap: usize) -> Result<f64> {
    let d = inst.ambient_dim();
    let m = inst.model_size();
    if d > cap {
        return Err(invalid("ambient dimension exceeds the eigendecomposition cap"));
    }
    let sqrt_h: Vec<f64> = inst.h_diag.iter().map(|h| h.sqrt()).collect();
    let inv_quarter: Vec<f64> = inst.k_diag.iter().map(|v| v.powf(-0.25)).collect();
    // C = D^{-1/4} S H^{1/2}, so K̄₁ = Cᵀ C.
    let c = DMatrix::from_fn(m, d, |i, j| inv_quarter[i] * inst.sketch[(i, j)] * sqrt_h[j]);
    let k1 = c.tr_mul(&c);
    let (vals, vecs) = sorted_symmetric_eigen(k1);
    let target = DVector::from_iterator(d, (0..d).map(|j| sqrt_h[j] * inst.w_star[j]));
    let coords = vecs.tr_mul(&target);
    Ok(vals.iter().zip(coords.iter()).map(|(l, c)| c * c * (-l.max(0.0) * q).exp()).sum())
}

/// Ambient route when feasible, modal route otherwise.
pub fn drift_exact_spectral_auto(inst: &PlrfInstance, q: f64) -> f64 {
    drift_exact_spectral_ambient(inst, q, AMBIENT_EIGEN_CAP).unwrap_or_else(|_| drift_exact_spectral(inst, q))
}

/// Stationary loss of the constant-rate ODE: with `a = (γ₀π/4) Tr(D^{1/2})` and
/// `s = (a + √(a² + 4(A + σ²)))/2`, returns `s² − σ²`.
pub fn limit_risk(inst: &PlrfInstance, gamma0: f64, sigma: f64) -> f64 {
    let a = gamma0 * PI / 4.0 * inst.trace_sqrt_diag;
    let c = inst.w_perp_energy + sigma * sigma;
    let s = (a + (a * a + 4.0 * c).sqrt()) / 2.0;
    (s * s - sigma * sigma).max(0.0)
}

/// Mode energies at the constant-rate fixed point, `r_i = γ₀ √(L∞ + σ²) V_i / (2 λ_i)`.
pub fn stationary_modes(inst: &PlrfInstance, gamma0: f64, sigma: f64) -> Vec<f64> {
    let l = limit_risk(inst, gamma0, sigma);
    let s = (l + sigma * sigma).sqrt();
    inst.noise_coeffs
        .iter()
        .zip(&inst.k_bar_spectrum)
        .map(|(v, lam)| gamma0 * s * v / (2.0 * lam))
        .collect()
}
