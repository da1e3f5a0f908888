//! Fresh `(S x, y)` pairs for one-pass training.
//!
//! [`ExactSampler`] draws `x ∈ ℝᵈ` and projects it. [`JointSampler`] draws the same pair from its
//! `(M+1)`-dimensional Gaussian law through a factor of the joint covariance
//! `[[K, S H w*], [·, w*ᵀ H w* + σ²]]`, which costs `O(M²)` instead of `O(M d)` per draw.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix};
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::{dot, sorted_symmetric_eigen};
use crate::model::PlrfInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Exact,
    #[default]
    Joint,
}

pub trait PairSampler {
    /// Writes `S x` into `feature` and returns the label.
    fn sample_into<R: Rng + ?Sized>(&mut self, rng: &mut R, feature: &mut [f64]) -> f64;
}

/// `x_j = j^{-α} z_j`, feature `S x`, label `⟨x, w*⟩ + σ ε`.
pub struct ExactSampler<'a> {
    inst: &'a PlrfInstance,
    sigma: f64,
    sqrt_h: Vec<f64>,
    /// Sketch stored row-major for the projection.
    rows: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> ExactSampler<'a> {
    pub fn new(inst: &'a PlrfInstance, sigma: f64) -> Self {
        let m = inst.model_size();
        let d = inst.ambient_dim();
        let mut rows = vec![0.0; m * d];
        for i in 0..m {
            for j in 0..d {
                rows[i * d + j] = inst.sketch[(i, j)];
            }
        }
        Self {
            inst,
            sigma,
            sqrt_h: inst.h_diag.iter().map(|h| h.sqrt()).collect(),
            rows,
            scratch: vec![0.0; d],
        }
    }

    /// Draws `z` and returns `(S x, y, z)`.
    pub fn sample_with_latent<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, f64, Vec<f64>) {
        let d = self.inst.ambient_dim();
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let eps: f64 = StandardNormal.sample(rng);
        let (feature, label) = self.project(&z, eps);
        (feature, label, z)
    }

    /// Feature and label for a given latent draw `z` and label noise `ε`.
    pub fn project(&self, z: &[f64], eps: f64) -> (Vec<f64>, f64) {
        let m = self.inst.model_size();
        let d = self.inst.ambient_dim();
        let x: Vec<f64> = z.iter().zip(&self.sqrt_h).map(|(z, s)| z * s).collect();
        let feature = (0..m)
            .map(|i| self.rows[i * d..(i + 1) * d].iter().zip(&x).map(|(a, b)| a * b).sum())
            .collect();
        let label = x.iter().zip(&self.inst.w_star).map(|(a, b)| a * b).sum::<f64>() + self.sigma * eps;
        (feature, label)
    }
}

impl PairSampler for ExactSampler<'_> {
    fn sample_into<R: Rng + ?Sized>(&mut self, rng: &mut R, feature: &mut [f64]) -> f64 {
        let d = self.inst.ambient_dim();
        let m = self.inst.model_size();
        let x = &mut self.scratch;
        for (xj, s) in x.iter_mut().zip(&self.sqrt_h) {
            let z: f64 = StandardNormal.sample(rng);
            *xj = z * s;
        }
        let eps: f64 = StandardNormal.sample(rng);
        for i in 0..m {
            feature[i] = dot(&self.rows[i * d..(i + 1) * d], x);
        }
        x.iter().zip(&self.inst.w_star).map(|(a, b)| a * b).sum::<f64>() + self.sigma * eps
    }
}

/// Pair sampler using a factor `F` with `F Fᵀ` equal to the joint covariance of `(S x, y)`.
#[derive(Debug, Clone)]
pub struct JointSampler {
    dim: usize,
    /// Row-major `(M+1) × (M+1)` factor.
    factor: Vec<f64>,
    lower: bool,
    scratch: Vec<f64>,
}

impl JointSampler {
    pub fn new(inst: &PlrfInstance, sigma: f64) -> Self {
        let m = inst.model_size();
        let n = m + 1;
        let mut cov = DMatrix::<f64>::zeros(n, n);
        cov.view_mut((0, 0), (m, m)).copy_from(&inst.k);
        for i in 0..m {
            cov[(i, m)] = inst.target_proj[i];
            cov[(m, i)] = inst.target_proj[i];
        }
        cov[(m, m)] = inst.initial_loss + sigma * sigma;

        let mut factor = vec![0.0; n * n];
        if let Some(chol) = Cholesky::new(cov.clone()) {
            let l = chol.l();
            for i in 0..n {
                for j in 0..=i {
                    factor[i * n + j] = l[(i, j)];
                }
            }
            Self { dim: n, factor, lower: true, scratch: vec![0.0; n] }
        } else {
            let (vals, vecs) = sorted_symmetric_eigen(cov);
            for c in 0..n {
                let s = vals[c].max(0.0).sqrt();
                for r in 0..n {
                    factor[r * n + c] = vecs[(r, c)] * s;
                }
            }
            Self { dim: n, factor, lower: false, scratch: vec![0.0; n] }
        }
    }

    pub fn is_triangular(&self) -> bool {
        self.lower
    }
}

impl PairSampler for JointSampler {
    fn sample_into<R: Rng + ?Sized>(&mut self, rng: &mut R, feature: &mut [f64]) -> f64 {
        let n = self.dim;
        let z = &mut self.scratch;
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(rng);
        }
        let mut label = 0.0;
        for i in 0..n {
            let len = if self.lower { i + 1 } else { n };
            let row = &self.factor[i * n..i * n + len];
            let v = dot(row, &z[..len]);
            if i + 1 < n {
                feature[i] = v;
            } else {
                label = v;
            }
        }
        label
    }
}

/// One draw from the exact ambient-dimension sampler.
pub fn sample_pair<R: Rng + ?Sized>(inst: &PlrfInstance, sigma: f64, rng: &mut R) -> (Vec<f64>, f64) {
    let mut feature = vec![0.0; inst.model_size()];
    let label = ExactSampler::new(inst, sigma).sample_into(rng, &mut feature);
    (feature, label)
}
