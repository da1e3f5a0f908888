//! Multi-seed trajectory and ODE runs for a single configuration.

use std::path::{Path, PathBuf};

use anyhow::Result;
use plrf_core::ode::{integrate, OdeConfig};
use plrf_core::rng::stream_id;
use plrf_core::trajectory::{run_trajectory, RecordingGrid, TrajectoryRecord};
use plrf_core::{build_instance, OptimizerKind, PlrfInstance};
use rayon::prelude::*;

use crate::config::TrajectoryConfig;
use crate::error::RunError;
use crate::io::{self, OdeRow};

/// Seed `i` of a run drives both the sketch and the trajectory stream (the two use disjoint
/// keystreams).
pub fn run_seeds(base_seed: u64, model_size: usize, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| stream_id(base_seed, model_size, i)).collect()
}

pub fn grid_for(cfg: &TrajectoryConfig) -> RecordingGrid {
    RecordingGrid::geometric(cfg.steps, cfg.grid_per_decade, cfg.grid_cap)
}

pub fn build_instances(cfg: &TrajectoryConfig, seeds: &[u64]) -> Result<Vec<PlrfInstance>, RunError> {
    seeds.par_iter().map(|&s| build_instance(cfg.params(s)).map_err(RunError::from)).collect()
}

#[derive(Debug, Clone)]
pub struct TrajectoryRun {
    pub seeds: Vec<u64>,
    pub records: Vec<TrajectoryRecord>,
    /// Pointwise mean over the runs that did not diverge.
    pub mean: Vec<(u64, f64)>,
    pub ode: Option<Vec<OdeRow>>,
}

impl TrajectoryRun {
    pub fn n_diverged(&self) -> usize {
        self.records.iter().filter(|r| r.diverged()).count()
    }
}

/// Pointwise mean of equal-length `(step, loss)` traces.
pub fn mean_trace<'a>(traces: impl IntoIterator<Item = &'a [(u64, f64)]>) -> Vec<(u64, f64)> {
    let mut acc: Vec<(u64, f64)> = Vec::new();
    let mut n = 0usize;
    for t in traces {
        if acc.is_empty() {
            acc = t.to_vec();
        } else {
            for (a, b) in acc.iter_mut().zip(t) {
                a.1 += b.1;
            }
        }
        n += 1;
    }
    for a in &mut acc {
        a.1 /= n as f64;
    }
    acc
}

pub fn run_trajectories(cfg: &TrajectoryConfig) -> Result<TrajectoryRun, RunError> {
    cfg.validate()?;
    if cfg.ode && cfg.optimizer.kind != OptimizerKind::SignSgd {
        return Err(RunError::config("the ODE prediction is only defined for signsgd"));
    }
    let seeds = run_seeds(cfg.base_seed, cfg.model_size, cfg.n_seeds);
    let insts = build_instances(cfg, &seeds)?;
    let grid = grid_for(cfg);
    let records: Vec<TrajectoryRecord> = insts
        .par_iter()
        .zip(&seeds)
        .map(|(p, &s)| run_trajectory(p, &cfg.optimizer, cfg.steps, &grid, s, cfg.sampler))
        .collect();
    let mean = mean_trace(records.iter().filter(|r| !r.diverged()).map(|r| r.losses.as_slice()));
    let ode = if cfg.ode { Some(ode_mean(&insts, cfg, &grid)) } else { None };
    Ok(TrajectoryRun { seeds, records, mean, ode })
}

/// ODE prediction averaged over the instances of a run.
pub fn ode_mean(insts: &[PlrfInstance], cfg: &TrajectoryConfig, grid: &RecordingGrid) -> Vec<OdeRow> {
    let mut ocfg = OdeConfig::from_optimizer(&cfg.optimizer);
    ocfg.keep_modes = false;
    let sols: Vec<Vec<OdeRow>> = insts
        .par_iter()
        .map(|p| integrate(p, &ocfg, cfg.steps, grid).records.iter().map(OdeRow::from).collect())
        .collect();
    let n = sols.len() as f64;
    let mut out = sols[0].clone();
    for r in &mut out {
        *r = OdeRow { step: r.step, loss: 0.0, drift: 0.0, noise: 0.0, approx: 0.0 };
    }
    for s in &sols {
        for (o, r) in out.iter_mut().zip(s) {
            o.loss += r.loss / n;
            o.drift += r.drift / n;
            o.noise += r.noise / n;
            o.approx += r.approx / n;
        }
    }
    out
}

pub fn ode_only(cfg: &TrajectoryConfig) -> Result<(Vec<u64>, Vec<OdeRow>), RunError> {
    cfg.validate()?;
    if cfg.optimizer.kind != OptimizerKind::SignSgd {
        return Err(RunError::config("the ODE prediction is only defined for signsgd"));
    }
    let seeds = run_seeds(cfg.base_seed, cfg.model_size, cfg.n_seeds);
    let insts = build_instances(cfg, &seeds)?;
    Ok((seeds, ode_mean(&insts, cfg, &grid_for(cfg))))
}

/// Writes `trajectory_mean.csv`, per-seed CSV/JSON pairs and `ode.csv` when present.
pub fn write_run(dir: &Path, run: &TrajectoryRun) -> Result<Vec<PathBuf>> {
    io::ensure_dir(dir)?;
    let mut out = Vec::new();
    let mean = dir.join("trajectory_mean.csv");
    io::write_losses(&mean, &run.mean)?;
    out.push(mean);
    for (i, rec) in run.records.iter().enumerate() {
        out.extend(io::write_trajectory(dir, &format!("trajectory_seed{i}"), rec)?);
    }
    if let Some(rows) = &run.ode {
        let p = dir.join("ode.csv");
        io::write_ode(&p, rows)?;
        out.push(p);
    }
    Ok(out)
}
