//! Closed-form loss laws with every hidden constant set to one.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{region, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoryOptimizer {
    SignSgd,
    Sgd,
    AdamConjecture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeFlag {
    BetaAboveAlphaHalf,
    PhaseB,
    NoisyLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryEvaluation {
    pub approx: f64,
    pub drift_aligned: f64,
    pub drift_distorted: f64,
    pub noise: f64,
    pub total: f64,
    pub optimizer: TheoryOptimizer,
    #[serde(rename = "flags")]
    pub regime_flags: Vec<RegimeFlag>,
}

impl TheoryEvaluation {
    fn new(approx: f64, dal: f64, ddis: f64, noise: f64, optimizer: TheoryOptimizer, flags: Vec<RegimeFlag>) -> Self {
        Self {
            approx,
            drift_aligned: dal,
            drift_distorted: ddis,
            noise,
            total: approx + dal + ddis + noise,
            optimizer,
            regime_flags: flags,
        }
    }
}

fn check_region(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha > 0.0) {
        return Err(region("alpha must be positive"));
    }
    if !(alpha + beta > 0.5) {
        return Err(region("alpha+beta must exceed 0.5"));
    }
    Ok(())
}

/// `M^{−2α + max(0, 1−2β)}`.
pub fn approx_term(alpha: f64, beta: f64, m: f64) -> f64 {
    m.powf(-2.0 * alpha + (1.0 - 2.0 * beta).max(0.0))
}

/// Exponent `2(2α+2β−1)/(2α−2β+1)` of the signSGD aligned drift in `M^{min(α,1/2)} N γ₀`.
pub fn signsgd_drift_exponent(alpha: f64, beta: f64) -> f64 {
    2.0 * (2.0 * alpha + 2.0 * beta - 1.0) / (2.0 * alpha - 2.0 * beta + 1.0)
}

/// Exponent `(2α+2β−1)/(2α)` of the SGD aligned drift in `N γ₀`.
pub fn sgd_drift_exponent(alpha: f64, beta: f64) -> f64 {
    (2.0 * alpha + 2.0 * beta - 1.0) / (2.0 * alpha)
}

pub fn signsgd_terms(alpha: f64, beta: f64, m: f64, n: f64, gamma0: f64) -> Result<TheoryEvaluation> {
    check_region(alpha, beta)?;
    let mut flags = Vec::new();
    let ma = m.powf(alpha.min(0.5));
    let approx = approx_term(alpha, beta, m);
    let dal = if beta > alpha + 0.5 {
        flags.push(RegimeFlag::BetaAboveAlphaHalf);
        let p = 2.0 * (2.0 * alpha + 2.0 * beta - 1.0) / (2.0 * beta - 2.0 * alpha - 1.0);
        (1.0 - ma * n * gamma0).max(0.0).powf(p)
    } else {
        (ma * n * gamma0).powf(-signsgd_drift_exponent(alpha, beta))
    };
    let ddis = if alpha > 0.5 && beta > 0.5 {
        flags.push(RegimeFlag::PhaseB);
        m.powf(-(6.0 * alpha - 1.0) / (2.0 * alpha + 1.0))
            * (n * gamma0).powf(-2.0 * (2.0 * alpha - 1.0) / (2.0 * alpha + 1.0))
    } else {
        0.0
    };
    let noise = gamma0 * gamma0 * m.powf(2.0 - (2.0 * alpha).min(1.0));
    Ok(TheoryEvaluation::new(approx, dal, ddis, noise, TheoryOptimizer::SignSgd, flags))
}

/// The Adam conjecture shares the signSGD law.
pub fn adam_terms(alpha: f64, beta: f64, m: f64, n: f64, gamma0: f64) -> Result<TheoryEvaluation> {
    let mut t = signsgd_terms(alpha, beta, m, n, gamma0)?;
    t.optimizer = TheoryOptimizer::AdamConjecture;
    Ok(t)
}

pub fn sgd_terms(alpha: f64, beta: f64, m: f64, n: f64, gamma0: f64) -> Result<TheoryEvaluation> {
    check_region(alpha, beta)?;
    let mut flags = Vec::new();
    if beta > alpha + 0.5 {
        flags.push(RegimeFlag::BetaAboveAlphaHalf);
    }
    if alpha > 0.5 && beta > 0.5 {
        flags.push(RegimeFlag::PhaseB);
    }
    let ng = n * gamma0;
    let approx = approx_term(alpha, beta, m);
    let dal = ng.powf(-sgd_drift_exponent(alpha, beta));
    let ddis = ng.powf(-(2.0 * alpha - 1.0) / (2.0 * alpha)) / m;
    let noise = gamma0 * ng.powf(-(4.0 * alpha - 1.0) / (2.0 * alpha));
    Ok(TheoryEvaluation::new(approx, dal, ddis, noise, TheoryOptimizer::Sgd, flags))
}

fn check_phase_aa(alpha: f64, beta: f64) -> Result<()> {
    check_region(alpha, beta)?;
    if !(alpha > 0.5 && beta < 0.5) {
        return Err(region(format!("({alpha}, {beta}) requires alpha > 0.5 and beta < 0.5")));
    }
    Ok(())
}

/// The four-term upper bound under warmup-stable-decay with decay exponent `c`:
/// `A + (M^{1/2} γ₀ N)^{−q} + γ₀² M N^{−2c} + γ₀^{1/(2α)} M^{1/(4α)} N^{−(1−c)(1−1/(2α))}`.
pub fn wsd_loss_bound(alpha: f64, beta: f64, m: f64, n: f64, gamma0: f64, c: f64) -> Result<f64> {
    check_phase_aa(alpha, beta)?;
    if !(c > 0.0 && c < 1.0) {
        return Err(region("decay exponent c must lie in (0, 1)"));
    }
    Ok(wsd_bound_terms(alpha, beta, m, n, gamma0, c).iter().sum())
}

/// Individual terms of [`wsd_loss_bound`].
pub fn wsd_bound_terms(alpha: f64, beta: f64, m: f64, n: f64, gamma0: f64, c: f64) -> [f64; 4] {
    let q = 2.0 * (2.0 * alpha + 2.0 * beta - 1.0) / (2.0 * alpha + 1.0 - 2.0 * beta);
    [
        approx_term(alpha, beta, m),
        (m.sqrt() * gamma0 * n).powf(-q),
        gamma0 * gamma0 * m * n.powf(-2.0 * c),
        gamma0.powf(1.0 / (2.0 * alpha))
            * m.powf(1.0 / (4.0 * alpha))
            * n.powf(-(1.0 - c) * (1.0 - 1.0 / (2.0 * alpha))),
    ]
}

/// Excess risk above `σ²` with noisy labels (phase Aa):
/// drift `(M^{1/2} N γ₀)^{−p}`, σ-scaled drift `(M^{1/2} N γ₀/σ)^{−p'}`, noise `γ₀² M + σ γ₀ √M`,
/// approximation `M^{−(2α+2β−1)}`.
pub fn noisy_signsgd_terms(alpha: f64, beta: f64, m: f64, n: f64, gamma0: f64, sigma: f64) -> Result<TheoryEvaluation> {
    check_phase_aa(alpha, beta)?;
    if !(sigma > 0.0) {
        return Err(region("sigma must be positive"));
    }
    let s = 2.0 * alpha + 2.0 * beta - 1.0;
    let p = 2.0 * s / (2.0 * alpha + 1.0 - 2.0 * beta);
    let p2 = s / (2.0 * alpha);
    let base = m.sqrt() * n * gamma0;
    let dal = base.powf(-p) + (base / sigma).powf(-p2);
    let noise = gamma0 * gamma0 * m + sigma * gamma0 * m.sqrt();
    let approx = m.powf(-s);
    Ok(TheoryEvaluation::new(approx, dal, 0.0, noise, TheoryOptimizer::SignSgd, alloc::vec![RegimeFlag::NoisyLabel]))
}
