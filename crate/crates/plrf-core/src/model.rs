//! The sampled PLRF problem: diagonal covariance, Gaussian sketch and every derived quantity.
//!
//! With `H = diag(j^{-2α})`, `w*_j = j^{-β}` and an `M × d` sketch `S` of iid `N(0, 1/M)`
//! entries, the instance caches `K = S H Sᵀ`, the preconditioned matrix `K̄ = D^{-1/2} K`
//! (`D = diag K`), its biorthogonal eigenpairs, the arcsine kernel `K_σ`, the projected optimum
//! `θ*` and the residual energy `‖H^{1/2} w_⊥‖²`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, quad_form, sorted_symmetric_eigen};
use crate::rng::sketch_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlrfParams {
    pub alpha: f64,
    pub beta: f64,
    pub model_size: usize,
    pub ambient_dim: usize,
    pub seed: u64,
}

impl PlrfParams {
    pub const DEFAULT_RATIO: f64 = 4.0;

    /// Parameters with the default ambient dimension `d = 4M`.
    pub fn new(alpha: f64, beta: f64, model_size: usize, seed: u64) -> Self {
        Self::with_ratio(alpha, beta, model_size, Self::DEFAULT_RATIO, seed)
    }

    pub fn with_ratio(alpha: f64, beta: f64, model_size: usize, ratio: f64, seed: u64) -> Self {
        let d = (ratio * model_size as f64).round().max(1.0) as usize;
        Self { alpha, beta, model_size, ambient_dim: d, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(invalid("alpha must be positive"));
        }
        if !self.beta.is_finite() {
            return Err(invalid("beta must be finite"));
        }
        if self.model_size == 0 {
            return Err(invalid("model_size must be at least 1"));
        }
        if self.ambient_dim < self.model_size {
            return Err(invalid("ambient_dim must be at least model_size"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    /// Largest accepted `M·d`.
    pub max_elements: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { max_elements: 4096 * 16384 }
    }
}

/// Serializable summary written into run manifests; matrices are regenerated from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub params: PlrfParams,
    pub w_perp_energy: f64,
    pub trace_sqrt_diag: f64,
    pub initial_loss: f64,
    pub lambda_max: f64,
    pub lambda_min: f64,
}

#[derive(Debug, Clone)]
pub struct PlrfInstance {
    pub params: PlrfParams,
    pub h_diag: Vec<f64>,
    pub w_star: Vec<f64>,
    /// `M × d`, filled row by row from the sketch stream.
    pub sketch: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub k_diag: Vec<f64>,
    /// Eigenvalues of `K̄`, nonincreasing.
    pub k_bar_spectrum: Vec<f64>,
    /// Columns `u_i`: right eigenvectors of `K̄`.
    pub right_modes: DMatrix<f64>,
    /// Columns `w_i`: left eigenvectors of `K̄`, with `w_iᵀ u_j = δ_ij`.
    pub left_modes: DMatrix<f64>,
    /// Columns `K u_i`.
    pub k_right_modes: DMatrix<f64>,
    pub k_sigma: DMatrix<f64>,
    /// `V_i = w_iᵀ K_σ K u_i`.
    pub noise_coeffs: Vec<f64>,
    /// Eigenvalues of `K` (nonincreasing) and the matching orthonormal eigenvectors.
    pub k_eigenvalues: Vec<f64>,
    pub k_eigenvectors: DMatrix<f64>,
    /// `S H w*`.
    pub target_proj: Vec<f64>,
    pub theta_star: Vec<f64>,
    pub w_perp_energy: f64,
    pub trace_sqrt_diag: f64,
    /// `w*ᵀ H w*`, the loss at `θ = 0`.
    pub initial_loss: f64,
}

pub fn build_instance(params: PlrfParams) -> Result<PlrfInstance> {
    PlrfInstance::build(params, BuildOptions::default())
}

impl PlrfInstance {
    pub fn build(params: PlrfParams, opts: BuildOptions) -> Result<Self> {
        params.validate()?;
        let m = params.model_size;
        let d = params.ambient_dim;
        if m.saturating_mul(d) > opts.max_elements {
            return Err(Error::DimensionCap { m, d, cap: opts.max_elements });
        }

        let h_diag: Vec<f64> = (1..=d).map(|j| (j as f64).powf(-2.0 * params.alpha)).collect();
        let w_star: Vec<f64> = (1..=d).map(|j| (j as f64).powf(-params.beta)).collect();

        let mut rng = sketch_rng(params.seed);
        let scale = 1.0 / (m as f64).sqrt();
        let mut sketch = DMatrix::<f64>::zeros(m, d);
        for i in 0..m {
            for j in 0..d {
                let z: f64 = StandardNormal.sample(&mut rng);
                sketch[(i, j)] = z * scale;
            }
        }

        let sqrt_h: Vec<f64> = h_diag.iter().map(|h| h.sqrt()).collect();
        let mut b = sketch.clone();
        for (j, mut col) in b.column_iter_mut().enumerate() {
            col *= sqrt_h[j];
        }
        let mut k = &b * b.transpose();
        symmetrize(&mut k);
        drop(b);

        let k_diag: Vec<f64> = (0..m).map(|i| k[(i, i)]).collect();
        if k_diag.iter().any(|&v| !(v > 0.0)) {
            return Err(invalid("sketch produced a zero diagonal entry in K"));
        }
        let d_quarter: Vec<f64> = k_diag.iter().map(|v| v.powf(0.25)).collect();

        let sym = DMatrix::from_fn(m, m, |r, c| k[(r, c)] / (d_quarter[r] * d_quarter[c]));
        let (lambdas, q) = sorted_symmetric_eigen(sym);
        let k_bar_spectrum: Vec<f64> = lambdas.iter().map(|&l| l.max(0.0)).collect();
        let right_modes = DMatrix::from_fn(m, m, |r, c| q[(r, c)] / d_quarter[r]);
        let left_modes = DMatrix::from_fn(m, m, |r, c| q[(r, c)] * d_quarter[r]);
        let k_right_modes = &k * &right_modes;

        let sqrt_diag: Vec<f64> = k_diag.iter().map(|v| v.sqrt()).collect();
        let k_sigma = DMatrix::from_fn(m, m, |r, c| {
            if r == c {
                FRAC_PI_2
            } else {
                (k[(r, c)] / (sqrt_diag[r] * sqrt_diag[c])).clamp(-1.0, 1.0).asin()
            }
        });
        let ksku = &k_sigma * &k_right_modes;
        let noise_coeffs: Vec<f64> =
            (0..m).map(|i| left_modes.column(i).dot(&ksku.column(i))).collect();

        let hw: DVector<f64> = DVector::from_iterator(d, h_diag.iter().zip(&w_star).map(|(h, w)| h * w));
        let target_proj: Vec<f64> = (&sketch * hw).iter().copied().collect();

        let (k_eigenvalues, k_eigenvectors) = sorted_symmetric_eigen(k.clone());
        let theta_star = pseudo_solve(&k_eigenvalues, &k_eigenvectors, &target_proj, 1e-12);

        let st_theta = sketch.tr_mul(&DVector::from_column_slice(&theta_star));
        let w_perp_energy: f64 = (0..d)
            .map(|j| {
                let r = w_star[j] - st_theta[j];
                h_diag[j] * r * r
            })
            .sum();
        let initial_loss: f64 = h_diag.iter().zip(&w_star).map(|(h, w)| h * w * w).sum();
        let trace_sqrt_diag = sqrt_diag.iter().sum();

        Ok(Self {
            params,
            h_diag,
            w_star,
            sketch,
            k,
            k_diag,
            k_bar_spectrum,
            right_modes,
            left_modes,
            k_right_modes,
            k_sigma,
            noise_coeffs,
            k_eigenvalues,
            k_eigenvectors,
            target_proj,
            theta_star,
            w_perp_energy,
            trace_sqrt_diag,
            initial_loss,
        })
    }

    pub fn model_size(&self) -> usize {
        self.params.model_size
    }

    pub fn ambient_dim(&self) -> usize {
        self.params.ambient_dim
    }

    /// `L(θ) = (θ−θ*)ᵀ K (θ−θ*) + ‖H^{1/2} w_⊥‖²`.
    pub fn population_loss(&self, theta: &[f64]) -> f64 {
        let delta: Vec<f64> = theta.iter().zip(&self.theta_star).map(|(a, b)| a - b).collect();
        quad_form(&self.k, &delta).max(0.0) + self.w_perp_energy
    }

    /// `L(θ) = (Sᵀθ − w*)ᵀ H (Sᵀθ − w*)` evaluated in the ambient dimension.
    pub fn population_loss_direct(&self, theta: &[f64]) -> f64 {
        let st = self.sketch.tr_mul(&DVector::from_column_slice(theta));
        (0..self.ambient_dim())
            .map(|j| {
                let r = st[j] - self.w_star[j];
                self.h_diag[j] * r * r
            })
            .sum()
    }

    /// Mode energies `r_i(θ) = ⟨K u_i, θ−θ*⟩ ⟨w_i, θ−θ*⟩`.
    pub fn mode_energies(&self, theta: &[f64]) -> Vec<f64> {
        let delta: Vec<f64> = theta.iter().zip(&self.theta_star).map(|(a, b)| a - b).collect();
        (0..self.model_size())
            .map(|i| {
                let a = dot(self.k_right_modes.column(i).as_slice(), &delta);
                let b = dot(self.left_modes.column(i).as_slice(), &delta);
                a * b
            })
            .collect()
    }

    /// `(min_i, max_i)` of `K_ii^{-1/2} / M^{min(0.5, α)}`.
    pub fn diag_scale_check(&self) -> (f64, f64) {
        let scale = (self.model_size() as f64).powf(self.params.alpha.min(0.5));
        self.k_diag.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            let r = 1.0 / (v.sqrt() * scale);
            (lo.min(r), hi.max(r))
        })
    }

    /// Coordinates of `θ*` in the eigenbasis of `K`.
    pub fn theta_star_in_k_basis(&self) -> Vec<f64> {
        let t = DVector::from_column_slice(&self.theta_star);
        self.k_eigenvectors.tr_mul(&t).iter().copied().collect()
    }

    pub fn meta(&self) -> InstanceMeta {
        InstanceMeta {
            params: self.params,
            w_perp_energy: self.w_perp_energy,
            trace_sqrt_diag: self.trace_sqrt_diag,
            initial_loss: self.initial_loss,
            lambda_max: self.k_bar_spectrum.first().copied().unwrap_or(0.0),
            lambda_min: self.k_bar_spectrum.last().copied().unwrap_or(0.0),
        }
    }
}

pub fn diag_scale_check(inst: &PlrfInstance) -> (f64, f64) {
    inst.diag_scale_check()
}

pub fn population_loss(inst: &PlrfInstance, theta: &[f64]) -> f64 {
    inst.population_loss(theta)
}

fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Pseudo-inverse solve through an eigendecomposition, dropping eigenvalues below
/// `rel_cutoff · λ_max`.
fn pseudo_solve(values: &[f64], vectors: &DMatrix<f64>, rhs: &[f64], rel_cutoff: f64) -> Vec<f64> {
    let n = rhs.len();
    let cut = rel_cutoff * values.first().copied().unwrap_or(0.0).max(0.0);
    let mut out = vec![0.0; n];
    for (c, &lam) in values.iter().enumerate() {
        if lam <= cut {
            continue;
        }
        let v = vectors.column(c);
        let coef = dot(v.as_slice(), rhs) / lam;
        for (o, vi) in out.iter_mut().zip(v.iter()) {
            *o += coef * vi;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_instance_is_exact() {
        let inst = build_instance(PlrfParams { alpha: 0.5, beta: 0.3, model_size: 1, ambient_dim: 1, seed: 3 })
            .unwrap();
        let s = inst.sketch[(0, 0)];
        assert!((inst.k[(0, 0)] - s * s).abs() < 1e-15);
        assert!((inst.theta_star[0] - 1.0 / s).abs() < 1e-12 * (1.0 / s).abs());
        assert!(inst.w_perp_energy < 1e-24);
        assert!(inst.population_loss(&inst.theta_star) < 1e-24);
        let (lo, hi) = inst.diag_scale_check();
        assert_eq!(lo, hi);
    }

    #[test]
    fn dimension_cap_rejects_large_instances() {
        let err = PlrfInstance::build(PlrfParams::new(1.0, 0.0, 64, 0), BuildOptions { max_elements: 1000 })
            .unwrap_err();
        assert!(matches!(err, Error::DimensionCap { .. }));
    }

    #[test]
    fn loss_at_origin_is_target_energy() {
        let inst = build_instance(PlrfParams::new(0.8, 0.3, 8, 1)).unwrap();
        let zero = vec![0.0; 8];
        let expect: f64 = (1..=32).map(|j| (j as f64).powf(-1.6 - 0.6)).sum();
        assert!((inst.population_loss(&zero) - expect).abs() < 1e-10 * expect);
        assert!((inst.population_loss_direct(&zero) - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn k_sigma_diagonal_is_half_pi() {
        let inst = build_instance(PlrfParams::new(1.0, 0.0, 6, 2)).unwrap();
        for i in 0..6 {
            assert_eq!(inst.k_sigma[(i, i)], FRAC_PI_2);
        }
    }
}
