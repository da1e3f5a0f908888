//! Optimizer configuration and single update steps for SGD, signSGD and Adam.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::schedule::Schedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[serde(alias = "sign_sgd", alias = "sign-sgd")]
    SignSgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub gamma0: f64,
    pub schedule: Schedule,
    pub batch_size: usize,
    pub label_noise_sigma: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::SignSgd,
            gamma0: 1e-3,
            schedule: Schedule::default(),
            batch_size: 1,
            label_noise_sigma: 0.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn sign_sgd(gamma0: f64) -> Self {
        Self { kind: OptimizerKind::SignSgd, gamma0, ..Self::default() }
    }

    pub fn sgd(gamma0: f64) -> Self {
        Self { kind: OptimizerKind::Sgd, gamma0, ..Self::default() }
    }

    pub fn adam(gamma0: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { kind: OptimizerKind::Adam, gamma0, adam_beta1: beta1, adam_beta2: beta2, adam_eps: eps, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma0 >= 0.0 && self.gamma0.is_finite()) {
            return Err(invalid("gamma0 must be finite and nonnegative"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be at least 1"));
        }
        if !(self.label_noise_sigma >= 0.0) {
            return Err(invalid("label_noise_sigma must be nonnegative"));
        }
        if self.kind == OptimizerKind::Adam {
            if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
                return Err(invalid("adam betas must lie in [0, 1)"));
            }
            if !(self.adam_eps >= 0.0) {
                return Err(invalid("adam_eps must be nonnegative"));
            }
        }
        self.schedule.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(dim: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { m: vec![0.0; dim], v: vec![0.0; dim], t: 0, beta1, beta2, eps }
    }

    pub fn from_config(dim: usize, cfg: &OptimizerConfig) -> Self {
        Self::new(dim, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NonFiniteGradient;

#[inline]
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Batch-mean gradient `ḡ = (2/B) Σ_b (⟨f_b, θ⟩ − y_b) f_b`; `features` holds `B` rows of length `M`.
pub fn batch_gradient(theta: &[f64], features: &[f64], labels: &[f64], grad: &mut [f64]) -> core::result::Result<(), NonFiniteGradient> {
    let m = theta.len();
    let b = labels.len();
    grad.iter_mut().for_each(|g| *g = 0.0);
    let scale = 2.0 / b as f64;
    for (row, &y) in features.chunks_exact(m).zip(labels) {
        let res = crate::linalg::dot(row, theta) - y;
        if !res.is_finite() {
            return Err(NonFiniteGradient);
        }
        let c = scale * res;
        for (g, f) in grad.iter_mut().zip(row) {
            *g += c * f;
        }
    }
    Ok(())
}

/// Applies one update with step size `gamma` given the batch-mean gradient.
pub fn apply_update(kind: OptimizerKind, theta: &mut [f64], grad: &[f64], gamma: f64, adam: Option<&mut AdamState>) -> core::result::Result<(), NonFiniteGradient> {
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(NonFiniteGradient);
    }
    match kind {
        OptimizerKind::Sgd => {
            for (t, g) in theta.iter_mut().zip(grad) {
                *t -= gamma * g;
            }
        }
        OptimizerKind::SignSgd => {
            for (t, g) in theta.iter_mut().zip(grad) {
                *t -= gamma * sign(*g);
            }
        }
        OptimizerKind::Adam => {
            let st = adam.expect("adam update requires an AdamState");
            st.t += 1;
            let bc1 = 1.0 - st.beta1.powi(st.t as i32);
            let bc2 = 1.0 - st.beta2.powi(st.t as i32);
            for i in 0..theta.len() {
                let g = grad[i];
                st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
                st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * g * g;
                let m_hat = st.m[i] / bc1;
                let v_hat = st.v[i] / bc2;
                let denom = v_hat.sqrt() + st.eps;
                if denom > 0.0 {
                    theta[i] -= gamma * (m_hat / denom);
                }
            }
        }
    }
    Ok(())
}

/// One optimizer step on a batch of `(feature, label)` pairs.
pub fn step(
    kind: OptimizerKind,
    theta: &[f64],
    batch: &[(Vec<f64>, f64)],
    gamma: f64,
    adam: Option<&mut AdamState>,
) -> core::result::Result<Vec<f64>, NonFiniteGradient> {
    assert!(!batch.is_empty(), "batch must be nonempty");
    let m = theta.len();
    let mut features = Vec::with_capacity(m * batch.len());
    let mut labels = Vec::with_capacity(batch.len());
    for (f, y) in batch {
        features.extend_from_slice(f);
        labels.push(*y);
    }
    let mut grad = vec![0.0; m];
    batch_gradient(theta, &features, &labels, &mut grad)?;
    let mut out = theta.to_vec();
    apply_update(kind, &mut out, &grad, gamma, adam)?;
    Ok(out)
}
