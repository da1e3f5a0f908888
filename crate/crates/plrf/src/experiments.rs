//! Measurement routines behind the validation suite. Each returns raw numbers; pass/fail
//! thresholds live in [`crate::validate`].

use std::f64::consts::PI;

use plrf_core::ode::{drift_exact_spectral, drift_exact_spectral_ambient, integrate, limit_risk, OdeConfig, AMBIENT_EIGEN_CAP};
use plrf_core::optim::sign;
use plrf_core::optimal::{
    signsgd_compute_optimal, suboptimal_lr_slope, table1_closed_form, PhaseLabel,
};
use plrf_core::rng::{hash_words, trajectory_rng};
use plrf_core::sampler::{JointSampler, PairSampler, SamplerKind};
use plrf_core::theory::{sgd_drift_exponent, signsgd_drift_exponent};
use plrf_core::trajectory::{run_trajectory, RecordingGrid};
use plrf_core::{build_instance, OptimizerConfig, PlrfInstance, PlrfParams, Schedule};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::TrajectoryConfig;
use crate::error::RunError;
use crate::run::{mean_trace, run_seeds, run_trajectories};

/// Closed form against the oracle on a 40×40 grid of `(α, β)`.
#[derive(Debug, Clone, Serialize)]
pub struct OracleComparison {
    pub points: usize,
    pub phases: usize,
    pub max_x_error: f64,
    pub max_e_error: f64,
    pub max_eta_error: f64,
    pub term_mismatches: usize,
}

/// `α ∈ (0.1, 2]` by 40 steps; `β` from just above `1/2 − α` to 2, skipping a thin band around
/// the `β = α + 1/2` boundary where both sides are valid phase labels.
pub fn phase_grid() -> Vec<(f64, f64)> {
    let mut pts = Vec::new();
    for i in 0..40 {
        let a = 0.1 + 1.9 * (i as f64 + 1.0) / 40.0;
        let lo = 0.5 - a + 0.01;
        for j in 0..40 {
            let b = lo + (2.0 - lo) * j as f64 / 39.0;
            if b > a + 0.49 && b <= a + 0.51 {
                continue;
            }
            pts.push((a, b));
        }
    }
    pts
}

/// `perturb_eta` is added to every closed-form `η` (sensitivity canary).
pub fn closed_form_vs_oracle(perturb_eta: f64) -> Result<OracleComparison, RunError> {
    let pts = phase_grid();
    let rows: Vec<_> = pts
        .par_iter()
        .map(|&(a, b)| -> Result<_, RunError> {
            let cf = table1_closed_form(a, b)?;
            let or = signsgd_compute_optimal(a, b)?;
            Ok((
                cf.phase.label,
                (cf.x_star - or.x_star).abs(),
                (cf.e_star - or.e_star).abs(),
                (cf.eta + perturb_eta - or.eta).abs(),
                cf.balancing_terms != or.balancing_terms,
            ))
        })
        .collect::<Result<_, _>>()?;
    let mut phases: Vec<PhaseLabel> = rows.iter().map(|r| r.0).collect();
    phases.sort_by_key(|p| p.as_str());
    phases.dedup();
    Ok(OracleComparison {
        points: rows.len(),
        phases: phases.len(),
        max_x_error: rows.iter().map(|r| r.1).fold(0.0, f64::max),
        max_e_error: rows.iter().map(|r| r.2).fold(0.0, f64::max),
        max_eta_error: rows.iter().map(|r| r.3).fold(0.0, f64::max),
        term_mismatches: rows.iter().filter(|r| r.4).count(),
    })
}

/// Monte Carlo `E[sign a · sign b]` for a standard bivariate normal with correlation `rho`.
pub fn sign_product_mean(rho: f64, n: usize, seed: u64) -> f64 {
    let mut rng = trajectory_rng(seed);
    let c = (1.0 - rho * rho).max(0.0).sqrt();
    let mut acc = 0i64;
    for _ in 0..n {
        let a: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        acc += (sign(a) * sign(rho * a + c * e)) as i64;
    }
    acc as f64 / n as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct OneStepMode {
    pub mode: usize,
    pub predicted: f64,
    pub mean: f64,
    pub std_error: f64,
}

/// Monte Carlo mean of `r_i(θ − γ sign g) − r_i(θ)` over `n` independent single steps at fixed
/// `θ`, next to `−(4γ/π√L) λᵢ rᵢ + (2γ²/π) Vᵢ`.
pub fn one_step_check(inst: &PlrfInstance, theta: &[f64], gamma: f64, modes: &[usize], n: usize, seed: u64) -> Vec<OneStepMode> {
    let m = inst.model_size();
    let delta: Vec<f64> = theta.iter().zip(&inst.theta_star).map(|(a, b)| a - b).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let ku: Vec<Vec<f64>> = modes.iter().map(|&i| inst.k_right_modes.column(i).iter().copied().collect()).collect();
    let wv: Vec<Vec<f64>> = modes.iter().map(|&i| inst.left_modes.column(i).iter().copied().collect()).collect();
    let a0: Vec<f64> = ku.iter().map(|k| dot(k, &delta)).collect();
    let b0: Vec<f64> = wv.iter().map(|w| dot(w, &delta)).collect();
    let mut sampler = JointSampler::new(inst, 0.0);
    let mut rng = trajectory_rng(seed);
    let mut f = vec![0.0; m];
    let mut s = vec![0.0; m];
    let mut sum = vec![0.0; modes.len()];
    let mut sq = vec![0.0; modes.len()];
    for _ in 0..n {
        let y = sampler.sample_into(&mut rng, &mut f);
        let res = sign(dot(&f, theta) - y);
        for (sj, fj) in s.iter_mut().zip(&f) {
            *sj = sign(*fj) * res;
        }
        for q in 0..modes.len() {
            let (da, db) = (-gamma * dot(&ku[q], &s), -gamma * dot(&wv[q], &s));
            let dr = (a0[q] + da) * (b0[q] + db) - a0[q] * b0[q];
            sum[q] += dr;
            sq[q] += dr * dr;
        }
    }
    let loss = inst.population_loss(theta);
    let r = inst.mode_energies(theta);
    modes
        .iter()
        .enumerate()
        .map(|(q, &i)| {
            let mean = sum[q] / n as f64;
            let var = (sq[q] / n as f64 - mean * mean).max(0.0);
            let predicted = -4.0 * gamma / (PI * loss.sqrt()) * inst.k_bar_spectrum[i] * r[i]
                + 2.0 * gamma * gamma / PI * inst.noise_coeffs[i];
            OneStepMode { mode: i, predicted, mean, std_error: (var / n as f64).sqrt() }
        })
        .collect()
}

/// A point `θ = θ* + δ` whose residual correlations are small, so the arcsine law is in its
/// linear range: `δ` is Gaussian with `δᵀKδ = w_perp_energy / 4`.
pub fn near_optimum_theta(inst: &PlrfInstance, seed: u64) -> Vec<f64> {
    let m = inst.model_size();
    let mut rng = trajectory_rng(hash_words(&[seed, 0x0e57]));
    let raw: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let zero: Vec<f64> = inst.theta_star.iter().zip(&raw).map(|(t, r)| t + r).collect();
    let excess = inst.population_loss(&zero) - inst.w_perp_energy;
    let scale = (0.25 * inst.w_perp_energy / excess).sqrt();
    inst.theta_star.iter().zip(&raw).map(|(t, r)| t + scale * r).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct OdeFidelity {
    /// Extremes of `ode / empirical` over recorded steps `≥ min_step`.
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub max_sum_rule_error: f64,
    pub n_diverged: usize,
}

pub fn ode_fidelity(cfg: &TrajectoryConfig, min_step: u64) -> Result<OdeFidelity, RunError> {
    let mut cfg = cfg.clone();
    cfg.ode = true;
    let run = run_trajectories(&cfg)?;
    let ode = run.ode.as_ref().expect("ode requested");
    let (mut lo, mut hi, mut sum_err) = (f64::INFINITY, 0.0f64, 0.0f64);
    for (o, e) in ode.iter().zip(&run.mean) {
        debug_assert_eq!(o.step, e.0);
        sum_err = sum_err.max(((o.drift + o.noise + o.approx) - o.loss).abs() / o.loss);
        if o.step >= min_step {
            let r = o.loss / e.1;
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    Ok(OdeFidelity { min_ratio: lo, max_ratio: hi, max_sum_rule_error: sum_err, n_diverged: run.n_diverged() })
}

#[derive(Debug, Clone, Serialize)]
pub struct PlateauCheck {
    pub plateau: f64,
    pub limit_risk: f64,
    pub ratio: f64,
}

/// Mean loss over the second half of the steps, averaged over seeds, against the mean limit
/// risk of the same instances.
pub fn plateau_vs_limit_risk(cfg: &TrajectoryConfig) -> Result<PlateauCheck, RunError> {
    let run = run_trajectories(cfg)?;
    let half = cfg.steps / 2;
    let tail: Vec<f64> = run.mean.iter().filter(|p| p.0 >= half).map(|p| p.1).collect();
    let plateau = tail.iter().sum::<f64>() / tail.len() as f64;
    let insts = crate::run::build_instances(cfg, &run.seeds)?;
    let lr = insts.iter().map(|p| limit_risk(p, cfg.optimizer.gamma0, cfg.optimizer.label_noise_sigma)).sum::<f64>()
        / insts.len() as f64;
    Ok(PlateauCheck { plateau, limit_risk: lr, ratio: plateau / lr })
}

#[derive(Debug, Clone, Serialize)]
pub struct EarlySlope {
    pub slope: f64,
    pub window: (u64, u64),
    pub n_points: usize,
}

/// Slope of the mean signSGD loss over the early segment where the aligned drift dominates.
///
/// The segment starts `start_factor` drift horizons `(γ₀ M^{min(α,1/2)})^{-1}` in and ends
/// where the ODE drift component falls to `dominance` times the rest of the ODE loss.
pub fn early_drift_slope(cfg: &TrajectoryConfig, start_factor: f64, dominance: f64) -> Result<EarlySlope, RunError> {
    let run = run_trajectories(cfg)?;
    let insts = crate::run::build_instances(cfg, &run.seeds)?;
    let grid = crate::run::grid_for(cfg);
    let ode = crate::run::ode_mean(&insts, cfg, &grid);
    let horizon = 1.0 / (cfg.optimizer.gamma0 * (cfg.model_size as f64).powf(cfg.alpha.min(0.5)));
    let start = (start_factor * horizon).ceil() as u64;
    let end = ode
        .iter()
        .find(|r| r.step >= start && r.drift < dominance * (r.noise + r.approx))
        .map(|r| r.step)
        .unwrap_or(cfg.steps);
    let pts: Vec<(f64, f64)> = run
        .mean
        .iter()
        .filter(|p| p.0 >= start && p.0 <= end)
        .map(|&(k, l)| ((k as f64).ln(), l.ln()))
        .collect();
    if pts.len() < plrf_core::fit::MIN_FIT_POINTS {
        return Err(RunError::config(format!("early segment [{start}, {end}] has only {} points", pts.len())));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
    let (slope, _, _) = plrf_core::fit::least_squares(&xs, &ys);
    Ok(EarlySlope { slope, window: (start, end), n_points: pts.len() })
}

#[derive(Debug, Clone, Serialize)]
pub struct PropertySuite {
    /// Extremes of the diagonal sandwich ratios over 20 seeds.
    pub sandwich_min: f64,
    pub sandwich_max: f64,
    pub modal_max_error: f64,
    pub dual_route_error: f64,
    /// Worst violation of `|(F(k+h) − F(k))/h − f(k)| ≤ h·Lip(f)`, in units of the bound.
    pub antiderivative_worst: f64,
    pub suboptimal_unimodal: bool,
    pub suboptimal_peak_error: f64,
    pub exponent_map_max_error: f64,
}

fn schedule_lipschitz(s: &Schedule, n: f64) -> f64 {
    (1.0 / (s.w * n).max(1.0)).max(s.c * s.tau).max(PI / n).max(1.0 / n)
}

pub fn property_suite() -> Result<PropertySuite, RunError> {
    let sand: Vec<(f64, f64)> = (0..20u64)
        .into_par_iter()
        .map(|s| build_instance(PlrfParams { alpha: 1.0, beta: 0.0, model_size: 200, ambient_dim: 800, seed: s }).map(|p| p.diag_scale_check()))
        .collect::<Result<_, _>>()?;

    let inst = build_instance(PlrfParams { alpha: 0.8, beta: 0.3, model_size: 32, ambient_dim: 128, seed: 3 })?;
    let mut rng = trajectory_rng(17);
    let mut modal_err = 0.0f64;
    for _ in 0..100 {
        let theta: Vec<f64> = (0..32).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let direct = inst.population_loss(&theta);
        let modal = inst.mode_energies(&theta).iter().sum::<f64>() + inst.w_perp_energy;
        modal_err = modal_err.max((modal - direct).abs() / direct);
    }

    let small = build_instance(PlrfParams { alpha: 1.0, beta: 0.0, model_size: 16, ambient_dim: 64, seed: 7 })?;
    let a = drift_exact_spectral(&small, 3.7);
    let b = drift_exact_spectral_ambient(&small, 3.7, AMBIENT_EIGEN_CAP)?;
    let dual = (a - b).abs() / b;

    let n = 10_000u64;
    let nf = n as f64;
    let h = 1e-4 * nf;
    let schedules = [
        Schedule::constant(n),
        Schedule::wsd(n, 0.05, 0.9, 1.0 / 11.0, 1.0),
        Schedule::stable_decay(n, 0.8, 0.5, 0.1),
        Schedule::linear(n),
        Schedule::cosine(n),
    ];
    let mut worst = 0.0f64;
    for s in &schedules {
        let [b0, b1] = s.breakpoints();
        for i in 0..200 {
            let k = (i as f64 + 0.5) / 200.0 * (nf - h);
            if (k - b0).abs() < 2.0 * h || (k - b1).abs() < 2.0 * h {
                continue;
            }
            let fd = (s.cumulative(k + h) - s.cumulative(k)) / h;
            let bound = h * schedule_lipschitz(s, nf) + 1e-9;
            worst = worst.max((fd - s.multiplier(k)).abs() / bound);
        }
    }

    let mut unimodal = true;
    let mut peak_err = 0.0f64;
    for &(al, be) in &[(0.6, 0.4), (1.2, 0.3), (0.9, 0.1), (2.0, 0.45)] {
        let es: Vec<f64> = (0..=400).map(|i| 0.5 + 2.5 * i as f64 / 400.0).collect();
        let vals: Vec<f64> = es.iter().map(|&e| suboptimal_lr_slope(al, be, e)).collect::<Result<_, _>>()?;
        let top = vals.iter().cloned().enumerate().fold((0, f64::MIN), |b, (i, v)| if v > b.1 { (i, v) } else { b });
        unimodal &= vals[..=top.0].windows(2).all(|w| w[1] >= w[0] - 1e-12) && vals[top.0..].windows(2).all(|w| w[1] <= w[0] + 1e-12);
        let t1 = table1_closed_form(al, be)?;
        let value_err = (suboptimal_lr_slope(al, be, t1.e_star)? - t1.eta).abs();
        let location_err = ((es[top.0] - t1.e_star).abs() - 2.5 / 400.0).max(0.0);
        peak_err = peak_err.max(value_err).max(location_err);
    }

    let mut map_err = 0.0f64;
    for i in 0..10 {
        for j in 0..10 {
            let al = 0.2 + 1.3 * i as f64 / 9.0;
            let lo = (0.5 - al).max(-1.0) + 0.02;
            let hi = al + 0.5 - 0.02;
            let be = lo + (hi - lo) * j as f64 / 9.0;
            let x = sgd_drift_exponent(al, be);
            let want = 2.0 * x / (2.0 - x);
            map_err = map_err.max((signsgd_drift_exponent(al, be) - want).abs() / want.abs().max(1.0));
        }
    }

    Ok(PropertySuite {
        sandwich_min: sand.iter().map(|s| s.0).fold(f64::INFINITY, f64::min),
        sandwich_max: sand.iter().map(|s| s.1).fold(0.0, f64::max),
        modal_max_error: modal_err,
        dual_route_error: dual,
        antiderivative_worst: worst,
        suboptimal_unimodal: unimodal,
        suboptimal_peak_error: peak_err,
        exponent_map_max_error: map_err,
    })
}

/// Mean trajectories of `n` seeds at one size, used by the variance-scaling property.
pub fn seed_traces(cfg: &TrajectoryConfig) -> Result<Vec<Vec<(u64, f64)>>, RunError> {
    let seeds = run_seeds(cfg.base_seed, cfg.model_size, cfg.n_seeds);
    let grid = RecordingGrid::geometric(cfg.steps, cfg.grid_per_decade, cfg.grid_cap);
    seeds
        .par_iter()
        .map(|&s| {
            let p = build_instance(cfg.params(s))?;
            Ok(run_trajectory(&p, &cfg.optimizer, cfg.steps, &grid, s, SamplerKind::Joint).losses)
        })
        .collect()
}

/// ODE mean for a constant-rate configuration, without simulation.
pub fn ode_losses(cfg: &TrajectoryConfig) -> Result<Vec<(u64, f64)>, RunError> {
    let seeds = run_seeds(cfg.base_seed, cfg.model_size, cfg.n_seeds);
    let grid = RecordingGrid::geometric(cfg.steps, cfg.grid_per_decade, cfg.grid_cap);
    let traces: Vec<Vec<(u64, f64)>> = seeds
        .par_iter()
        .map(|&s| -> Result<_, RunError> {
            let p = build_instance(cfg.params(s))?;
            Ok(integrate(&p, &OdeConfig::from_optimizer(&cfg.optimizer), cfg.steps, &grid).losses())
        })
        .collect::<Result<_, _>>()?;
    Ok(mean_trace(traces.iter().map(|t| t.as_slice())))
}

pub fn signsgd_config(alpha: f64, beta: f64, m: usize, d: usize, gamma0: f64, steps: u64, n_seeds: usize, base_seed: u64) -> TrajectoryConfig {
    TrajectoryConfig {
        alpha,
        beta,
        model_size: m,
        ambient_dim: Some(d),
        ratio_d_over_m: d as f64 / m as f64,
        steps,
        n_seeds,
        base_seed,
        optimizer: OptimizerConfig::sign_sgd(gamma0),
        sampler: SamplerKind::Joint,
        ode: false,
        grid_per_decade: 50,
        grid_cap: 2000,
    }
}
