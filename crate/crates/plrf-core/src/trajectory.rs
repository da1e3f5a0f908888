//! One-pass training runs recorded on a geometric step grid.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::model::{PlrfInstance, PlrfParams};
use crate::optim::{apply_update, batch_gradient, AdamState, OptimizerConfig, OptimizerKind};
use crate::rng::trajectory_rng;
use crate::sampler::{ExactSampler, JointSampler, PairSampler, SamplerKind};

pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// Sorted, deduplicated step indices at which the loss is recorded. Always holds 0 and `N`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordingGrid {
    steps: Vec<u64>,
}

impl RecordingGrid {
    pub const DEFAULT_PER_DECADE: usize = 200;
    pub const DEFAULT_CAP: usize = 2000;

    /// Log-uniform grid with `per_decade` points per decade, thinned to at most `cap` records.
    pub fn geometric(n: u64, per_decade: usize, cap: usize) -> Self {
        let cap = cap.max(2);
        let decades = if n > 1 { (n as f64).log10() } else { 0.0 };
        let mut density = per_decade.max(1) as f64;
        if decades * density + 3.0 > cap as f64 {
            density = ((cap as f64 - 3.0) / decades).max(1.0);
        }
        let count = (decades * density).ceil() as usize;
        let mut steps = Vec::with_capacity(count + 2);
        steps.push(0);
        for i in 0..=count {
            let s = 10f64.powf(i as f64 / density).round() as u64;
            if s >= 1 && s < n {
                steps.push(s);
            }
        }
        steps.push(n);
        steps.sort_unstable();
        steps.dedup();
        Self { steps }
    }

    pub fn default_for(n: u64) -> Self {
        Self::geometric(n, Self::DEFAULT_PER_DECADE, Self::DEFAULT_CAP)
    }

    /// Grid from explicit steps; 0 and `n` are added.
    pub fn from_steps(n: u64, extra: &[u64]) -> Self {
        let mut steps: Vec<u64> = extra.iter().copied().filter(|&s| s <= n).collect();
        steps.push(0);
        steps.push(n);
        steps.sort_unstable();
        steps.dedup();
        Self { steps }
    }

    pub fn steps(&self) -> &[u64] {
        &self.steps
    }

    pub fn last(&self) -> u64 {
        *self.steps.last().unwrap_or(&0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "status")]
pub enum TrajectoryStatus {
    Completed,
    Diverged { step: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub config: OptimizerConfig,
    pub instance_meta: PlrfParams,
    pub steps: u64,
    pub losses: Vec<(u64, f64)>,
    pub final_theta_norm: f64,
    pub rng_stream_id: u64,
    pub sampler: SamplerKind,
    pub status: TrajectoryStatus,
}

impl TrajectoryRecord {
    pub fn diverged(&self) -> bool {
        matches!(self.status, TrajectoryStatus::Diverged { .. })
    }

    pub fn final_loss(&self) -> f64 {
        self.losses.last().map(|p| p.1).unwrap_or(f64::NAN)
    }
}

/// Runs `n_steps` one-pass updates from `θ₀ = 0`.
///
/// Update `k` (zero-based) uses `γ₀ f(k+1)` from the schedule, whose step count is taken to be
/// `n_steps`.
pub fn run_trajectory(
    inst: &PlrfInstance,
    config: &OptimizerConfig,
    n_steps: u64,
    grid: &RecordingGrid,
    stream_id: u64,
    sampler: SamplerKind,
) -> TrajectoryRecord {
    match sampler {
        SamplerKind::Exact => {
            let mut s = ExactSampler::new(inst, config.label_noise_sigma);
            run_with(inst, config, n_steps, grid, stream_id, &mut s, sampler)
        }
        SamplerKind::Joint => {
            let mut s = JointSampler::new(inst, config.label_noise_sigma);
            run_with(inst, config, n_steps, grid, stream_id, &mut s, sampler)
        }
    }
}

/// Same as [`run_trajectory`] with a caller-supplied sampler.
pub fn run_with<S: PairSampler>(
    inst: &PlrfInstance,
    config: &OptimizerConfig,
    n_steps: u64,
    grid: &RecordingGrid,
    stream_id: u64,
    sampler: &mut S,
    sampler_kind: SamplerKind,
) -> TrajectoryRecord {
    let m = inst.model_size();
    let b = config.batch_size.max(1);
    let schedule = config.schedule.with_total_steps(n_steps.max(1));
    let mut rng = trajectory_rng(stream_id);
    let mut theta = vec![0.0; m];
    let mut grad = vec![0.0; m];
    let mut features = vec![0.0; m * b];
    let mut labels = vec![0.0; b];
    let mut adam = (config.kind == OptimizerKind::Adam).then(|| AdamState::from_config(m, config));

    let initial = inst.population_loss(&theta);
    let limit = DIVERGENCE_FACTOR * initial;
    let mut losses = Vec::with_capacity(grid.steps().len());
    let mut status = TrajectoryStatus::Completed;
    let mut next = 0usize;
    let record_steps = grid.steps();

    let mut k: u64 = 0;
    loop {
        while next < record_steps.len() && record_steps[next] == k {
            let loss = inst.population_loss(&theta);
            losses.push((k, loss));
            next += 1;
            if !(loss <= limit) {
                status = TrajectoryStatus::Diverged { step: k };
            }
        }
        if k >= n_steps || status != TrajectoryStatus::Completed {
            break;
        }
        for r in 0..b {
            labels[r] = sampler.sample_into(&mut rng, &mut features[r * m..(r + 1) * m]);
        }
        let gamma = config.gamma0 * schedule.multiplier((k + 1) as f64);
        let ok = batch_gradient(&theta, &features, &labels, &mut grad)
            .and_then(|_| apply_update(config.kind, &mut theta, &grad, gamma, adam.as_mut()));
        k += 1;
        if ok.is_err() || theta.iter().any(|t| !t.is_finite()) {
            status = TrajectoryStatus::Diverged { step: k };
            break;
        }
    }

    TrajectoryRecord {
        config: *config,
        instance_meta: inst.params,
        steps: n_steps,
        losses,
        final_theta_norm: theta.iter().map(|t| t * t).sum::<f64>().sqrt(),
        rng_stream_id: stream_id,
        sampler: sampler_kind,
        status,
    }
}
