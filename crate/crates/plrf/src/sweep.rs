//! FLOPS sweeps over model sizes, lower envelopes and slope fits.
//!
//! In `trajectory` mode one run per (size, seed) is recorded on a geometric step grid and read
//! as loss against FLOPS. Schedules that depend on the horizon (WSD, cosine, linear) need
//! `endpoint` mode instead, where every budget `N` on the grid gets its own run and only the
//! final loss is kept. The `ode` engine replaces simulation by the deterministic prediction.

use std::path::{Path, PathBuf};

use anyhow::Result;
use plrf_core::fit::{
    argmin_size_slope, envelope_slope, interior_window, lower_envelope, Curve, EnvelopePoint, SlopeFit,
    WindowPolicy, DEFAULT_FLOPS_FACTOR, ENVELOPE_PER_DECADE,
};
use plrf_core::ode::{integrate, OdeConfig};
use plrf_core::optimal::{noisy_compute_optimal, sgd_compute_optimal, table1_closed_form, wsd_compute_optimal};
use plrf_core::rng::hash_words;
use plrf_core::sampler::SamplerKind;
use plrf_core::trajectory::{run_trajectory, RecordingGrid};
use plrf_core::{build_instance, OptimizerConfig, OptimizerKind, PlrfParams, ScheduleKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::RunError;
use crate::io;
use crate::run::{mean_trace, run_seeds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    #[default]
    Trajectory,
    Endpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    #[default]
    Simulate,
    Ode,
}

/// Fit window. `interior` spans the size switches of the envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WindowSpec {
    Fractions { drop_start: f64, drop_end: f64 },
    Interior,
    Explicit { lo: f64, hi: f64 },
}

impl Default for WindowSpec {
    fn default() -> Self {
        let w = WindowPolicy::default();
        WindowSpec::Fractions { drop_start: w.drop_start, drop_end: w.drop_end }
    }
}

fn default_ratio() -> f64 {
    PlrfParams::DEFAULT_RATIO
}
fn one_f() -> f64 {
    1.0
}
fn one_u() -> usize {
    1
}
fn default_factor() -> f64 {
    DEFAULT_FLOPS_FACTOR
}
fn default_max_steps() -> u64 {
    10_000_000
}
fn default_per_decade() -> usize {
    50
}
fn default_cap() -> usize {
    2000
}
fn default_min_steps() -> u64 {
    100
}
fn default_op_cap() -> f64 {
    1e14
}
fn default_env_per_decade() -> usize {
    ENVELOPE_PER_DECADE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub alpha: f64,
    pub beta: f64,
    pub model_sizes: Vec<usize>,
    #[serde(default = "default_ratio")]
    pub ratio_d_over_m: f64,
    /// Template; `gamma0` is replaced per size by `lr_scale · M^{−lr_exponent}`.
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    /// Defaults to the theory-optimal exponent for the optimizer and schedule.
    #[serde(default)]
    pub lr_exponent: Option<f64>,
    #[serde(default = "one_f")]
    pub lr_scale: f64,
    #[serde(default = "one_u")]
    pub n_seeds: usize,
    #[serde(default = "default_factor")]
    pub flops_per_step_factor: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps_per_size: u64,
    /// When set, size `M` runs `min(max_steps_per_size, max_flops / (factor·M))` steps.
    #[serde(default)]
    pub max_flops: Option<f64>,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub mode: SweepMode,
    #[serde(default)]
    pub engine: Engine,
    #[serde(default)]
    pub sampler: SamplerKind,
    #[serde(default = "default_per_decade")]
    pub grid_per_decade: usize,
    #[serde(default = "default_cap")]
    pub grid_cap: usize,
    /// Smallest budget in endpoint mode.
    #[serde(default = "default_min_steps")]
    pub endpoint_min_steps: u64,
    /// Upper bound on `Σ seeds·steps·M·d` for simulated sweeps.
    #[serde(default = "default_op_cap")]
    pub op_cap: f64,
    #[serde(default)]
    pub window: WindowSpec,
    #[serde(default = "default_env_per_decade")]
    pub envelope_per_decade: usize,
}

/// Theory exponents a sweep is compared with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryReference {
    pub source: &'static str,
    pub e_star: f64,
    pub x_star: Option<f64>,
    pub eta: f64,
}

impl SweepSpec {
    pub fn new(alpha: f64, beta: f64, model_sizes: Vec<usize>) -> Self {
        serde_json::from_value(serde_json::json!({"alpha": alpha, "beta": beta, "model_sizes": model_sizes}))
            .expect("minimal sweep spec")
    }

    pub fn theory(&self) -> Option<TheoryReference> {
        let (a, b) = (self.alpha, self.beta);
        let opt = &self.optimizer;
        if opt.kind == OptimizerKind::Sgd {
            let r = sgd_compute_optimal(a, b).ok()?;
            return Some(TheoryReference { source: "sgd", e_star: r.e_star, x_star: Some(r.x_star), eta: r.eta });
        }
        if matches!(opt.schedule.kind, ScheduleKind::WarmupStableDecay | ScheduleKind::StableDecay) {
            let r = wsd_compute_optimal(a, b).ok()?;
            return Some(TheoryReference { source: "wsd", e_star: r.e_star, x_star: Some(r.m_star), eta: r.h_star });
        }
        if opt.label_noise_sigma > 0.0 {
            let r = noisy_compute_optimal(a, b).ok()?;
            return Some(TheoryReference { source: "noisy", e_star: r.e_star, x_star: Some(r.x_star), eta: r.eta });
        }
        let r = table1_closed_form(a, b).ok()?;
        Some(TheoryReference { source: "table1", e_star: r.e_star, x_star: Some(r.x_star), eta: r.eta })
    }

    pub fn lr_exponent(&self) -> Result<f64, RunError> {
        match self.lr_exponent {
            Some(e) => Ok(e),
            None => self
                .theory()
                .map(|t| t.e_star)
                .ok_or_else(|| RunError::config("lr_exponent is required outside the theory's region")),
        }
    }

    pub fn gamma0_for(&self, m: usize) -> Result<f64, RunError> {
        Ok(self.lr_scale * (m as f64).powf(-self.lr_exponent()?))
    }

    pub fn steps_for(&self, m: usize) -> u64 {
        let by_flops = self
            .max_flops
            .map(|f| (f / (self.flops_per_step_factor * m as f64)).floor() as u64)
            .unwrap_or(u64::MAX);
        self.max_steps_per_size.min(by_flops)
    }

    pub fn params(&self, m: usize, seed: u64) -> PlrfParams {
        PlrfParams::with_ratio(self.alpha, self.beta, m, self.ratio_d_over_m, seed)
    }

    /// Step counts whose losses make up the curve of size `m`.
    pub fn grid_for(&self, m: usize) -> RecordingGrid {
        let n = self.steps_for(m);
        match self.mode {
            SweepMode::Trajectory => RecordingGrid::geometric(n, self.grid_per_decade, self.grid_cap),
            SweepMode::Endpoint => {
                let steps: Vec<u64> = RecordingGrid::geometric(n, self.grid_per_decade, self.grid_cap)
                    .steps()
                    .iter()
                    .copied()
                    .filter(|&k| k >= self.endpoint_min_steps.max(1))
                    .collect();
                RecordingGrid::from_steps(n, &steps)
            }
        }
    }

    /// Estimated multiply-adds of a simulated sweep, `Σ seeds·steps·M·d`.
    pub fn estimated_ops(&self) -> f64 {
        self.model_sizes
            .iter()
            .map(|&m| {
                let d = self.params(m, 0).ambient_dim as f64;
                let steps: f64 = match self.mode {
                    SweepMode::Trajectory => self.steps_for(m) as f64,
                    SweepMode::Endpoint => self.grid_for(m).steps().iter().filter(|&&k| k > 0).map(|&k| k as f64).sum(),
                };
                self.n_seeds as f64 * steps * m as f64 * d
            })
            .sum()
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let core = plrf_core::fit::SweepConfig {
            alpha: self.alpha,
            beta: self.beta,
            model_sizes: self.model_sizes.clone(),
            ratio_d_over_m: self.ratio_d_over_m,
            optimizer: self.optimizer,
            lr_exponent: self.lr_exponent()?,
            lr_scale: self.lr_scale,
            n_seeds: self.n_seeds,
            flops_per_step_factor: self.flops_per_step_factor,
            max_steps_per_size: self.max_steps_per_size,
            base_seed: self.base_seed,
        };
        core.validate()?;
        for &m in &self.model_sizes {
            self.params(m, 0).validate()?;
            if self.steps_for(m) < 10 {
                return Err(RunError::config(format!("size {m} gets fewer than 10 steps under the FLOPS budget")));
            }
        }
        if self.grid_per_decade == 0 || self.grid_cap < 2 || self.envelope_per_decade == 0 {
            return Err(RunError::config("grid densities must be positive"));
        }
        if self.engine == Engine::Ode && self.optimizer.kind != OptimizerKind::SignSgd {
            return Err(RunError::config("the ode engine is only defined for signsgd"));
        }
        if self.engine == Engine::Simulate && self.estimated_ops() > self.op_cap {
            return Err(RunError::config(format!(
                "estimated {:.3e} operations exceed op_cap {:.3e}",
                self.estimated_ops(),
                self.op_cap
            )));
        }
        if self.mode == SweepMode::Trajectory
            && self.optimizer.schedule.kind != ScheduleKind::Constant
        {
            return Err(RunError::config("horizon-dependent schedules need mode \"endpoint\""));
        }
        Ok(())
    }
}

/// One (size, seed) run: losses on the size's step grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub model_size: usize,
    pub seed: u64,
    pub losses: Vec<(u64, f64)>,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeSummary {
    pub model_size: usize,
    pub gamma0: f64,
    pub steps: u64,
    pub n_runs: usize,
    pub n_diverged: usize,
    pub failed: bool,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub sizes: Vec<SizeSummary>,
    pub curves: Vec<Curve>,
    pub runs: Vec<RunTrace>,
    pub warnings: Vec<String>,
}

impl SweepResult {
    pub fn seeds(&self) -> Vec<u64> {
        self.runs.iter().map(|r| r.seed).collect()
    }

    /// Curves of the sizes that did not fail.
    pub fn usable_curves(&self) -> Vec<Curve> {
        self.sizes.iter().zip(&self.curves).filter(|(s, _)| !s.failed).map(|(_, c)| c.clone()).collect()
    }

    pub fn any_failed(&self) -> bool {
        self.sizes.iter().any(|s| s.failed)
    }
}

fn run_one(spec: &SweepSpec, m: usize, seed: u64, opt: &OptimizerConfig, grid: &RecordingGrid) -> Result<RunTrace, RunError> {
    let inst = build_instance(spec.params(m, seed))?;
    let n = grid.last();
    let trace = |losses: Vec<(u64, f64)>, diverged| RunTrace { model_size: m, seed, losses, diverged };
    Ok(match (spec.mode, spec.engine) {
        (SweepMode::Trajectory, Engine::Simulate) => {
            let rec = run_trajectory(&inst, opt, n, grid, seed, spec.sampler);
            let diverged = rec.diverged();
            trace(rec.losses, diverged)
        }
        (SweepMode::Trajectory, Engine::Ode) => trace(integrate(&inst, &ode_config(opt), n, grid).losses(), false),
        (SweepMode::Endpoint, engine) => {
            let mut losses = Vec::with_capacity(grid.steps().len());
            let mut diverged = false;
            for &k in grid.steps().iter().filter(|&&k| k > 0) {
                let end = RecordingGrid::from_steps(k, &[]);
                let loss = match engine {
                    Engine::Simulate => {
                        let rec = run_trajectory(&inst, opt, k, &end, hash_words(&[seed, k]), spec.sampler);
                        diverged |= rec.diverged();
                        rec.final_loss()
                    }
                    Engine::Ode => integrate(&inst, &ode_config(opt), k, &end).records.last().map_or(f64::NAN, |r| r.state.loss),
                };
                losses.push((k, loss));
            }
            trace(losses, diverged)
        }
    })
}

fn ode_config(opt: &OptimizerConfig) -> OdeConfig {
    let mut c = OdeConfig::from_optimizer(opt);
    c.keep_modes = false;
    c
}

/// Runs every (size, seed) pair in parallel and averages non-diverged runs per size.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult, RunError> {
    spec.validate()?;
    let mut jobs = Vec::new();
    for &m in &spec.model_sizes {
        let mut opt = spec.optimizer;
        opt.gamma0 = spec.gamma0_for(m)?;
        let grid = spec.grid_for(m);
        for seed in run_seeds(spec.base_seed, m, spec.n_seeds) {
            jobs.push((m, seed, opt, grid.clone()));
        }
    }
    let runs: Vec<RunTrace> = jobs
        .par_iter()
        .map(|(m, seed, opt, grid)| run_one(spec, *m, *seed, opt, grid))
        .collect::<Result<_, _>>()?;
    let mut sizes = Vec::new();
    let mut curves = Vec::new();
    let mut warnings = Vec::new();
    for &m in &spec.model_sizes {
        let mine: Vec<&RunTrace> = runs.iter().filter(|r| r.model_size == m).collect();
        let n_diverged = mine.iter().filter(|r| r.diverged).count();
        let failed = 2 * n_diverged > mine.len();
        if n_diverged > 0 {
            warnings.push(format!(
                "size {m}: {n_diverged} of {} runs diverged and were excluded{}",
                mine.len(),
                if failed { "; size marked failed" } else { "" }
            ));
        }
        let mean = mean_trace(mine.iter().filter(|r| !r.diverged).map(|r| r.losses.as_slice()));
        curves.push(Curve::from_steps(m, spec.flops_per_step_factor, &mean));
        sizes.push(SizeSummary {
            model_size: m,
            gamma0: spec.gamma0_for(m)?,
            steps: spec.steps_for(m),
            n_runs: mine.len(),
            n_diverged,
            failed,
        });
    }
    Ok(SweepResult { sizes, curves, runs, warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepFits {
    pub window: (f64, f64),
    pub envelope: SlopeFit,
    pub argmin_size: SlopeFit,
    /// `−envelope.slope`.
    pub measured_eta: f64,
    pub theory: Option<TheoryReference>,
    /// `measured_eta − theory.eta`.
    pub eta_deviation: Option<f64>,
    /// `argmin_size.slope − theory.x_star`.
    pub x_deviation: Option<f64>,
    pub failed_sizes: Vec<usize>,
}

pub fn resolve_window(spec: &WindowSpec, envelope: &[EnvelopePoint], sizes: &[usize]) -> Result<WindowPolicy, RunError> {
    Ok(match *spec {
        WindowSpec::Fractions { drop_start, drop_end } => WindowPolicy::fractions(drop_start, drop_end),
        WindowSpec::Explicit { lo, hi } => WindowPolicy::explicit(lo, hi),
        WindowSpec::Interior => interior_window(envelope, sizes).map_err(|e| RunError::config(e))?,
    })
}

pub fn analyze(spec: &SweepSpec, result: &SweepResult) -> Result<(Vec<EnvelopePoint>, SweepFits), RunError> {
    let curves = result.usable_curves();
    let sizes: Vec<usize> = curves.iter().map(|c| c.model_size).collect();
    let fit_err = |e: plrf_core::Error| RunError::config(e);
    let envelope = lower_envelope(&curves, spec.envelope_per_decade).map_err(fit_err)?;
    let policy = resolve_window(&spec.window, &envelope, &sizes)?;
    let env_fit = envelope_slope(&envelope, &policy).map_err(fit_err)?;
    let arg_fit = argmin_size_slope(&envelope, &policy).map_err(fit_err)?;
    let theory = spec.theory();
    let measured_eta = -env_fit.slope;
    let fits = SweepFits {
        window: env_fit.window,
        envelope: env_fit,
        argmin_size: arg_fit,
        measured_eta,
        theory,
        eta_deviation: theory.map(|t| measured_eta - t.eta),
        x_deviation: theory.and_then(|t| t.x_star).map(|x| arg_fit.slope - x),
        failed_sizes: result.sizes.iter().filter(|s| s.failed).map(|s| s.model_size).collect(),
    };
    Ok((envelope, fits))
}

/// Writes `curves/M<size>.csv`, `envelope.csv` and `fits.json` (when a fit was possible).
pub fn write_sweep(
    dir: &Path,
    result: &SweepResult,
    analysis: Option<&(Vec<EnvelopePoint>, SweepFits)>,
) -> Result<Vec<PathBuf>> {
    let cdir = dir.join("curves");
    io::ensure_dir(&cdir)?;
    let mut out = Vec::new();
    for c in &result.curves {
        let p = cdir.join(format!("M{}.csv", c.model_size));
        io::write_csv(&p, &["flops", "loss"], c.points.iter().map(|&(f, l)| [f.to_string(), l.to_string()]))?;
        out.push(p);
    }
    if let Some((env, fits)) = analysis {
        let p = dir.join("envelope.csv");
        io::write_csv(
            &p,
            &["flops", "loss", "best_M"],
            env.iter().map(|e| [e.flops.to_string(), e.loss.to_string(), e.argmin_size.to_string()]),
        )?;
        out.push(p);
        let p = dir.join("fits.json");
        io::write_json(&p, fits)?;
        out.push(p);
    }
    Ok(out)
}
