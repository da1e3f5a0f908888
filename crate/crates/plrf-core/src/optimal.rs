//! Phase classification and compute-optimal exponents.
//!
//! With compute `𝔣 = M N`, `M = 𝔣ˣ`, `N = 𝔣^{1−x}` and `γ₀ = M^{−e} = 𝔣^{−g}` (`g = e x`), every
//! loss term scales as `𝔣^{−ℓ(x, g)}` with `ℓ` affine. The compute-optimal slope is
//! `max_{x, g} min_i ℓ_i`, a concave piecewise-linear program solved by [`minimax_oracle`].

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{region, Result};

const BOUNDARY_TOL: f64 = 1e-9;
const ACTIVE_TOL: f64 = 1e-6;
/// Upper end of the learning-rate exponent search range.
pub const E_MAX: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhaseLabel {
    Aa,
    Ab,
    Ac,
    Ad,
    Ba,
    Bb,
}

impl PhaseLabel {
    pub fn is_phase_b(self) -> bool {
        matches!(self, PhaseLabel::Ba | PhaseLabel::Bb)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PhaseLabel::Aa => "Aa",
            PhaseLabel::Ab => "Ab",
            PhaseLabel::Ac => "Ac",
            PhaseLabel::Ad => "Ad",
            PhaseLabel::Ba => "Ba",
            PhaseLabel::Bb => "Bb",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase {
    pub label: PhaseLabel,
    pub boundary: bool,
}

/// Loss terms that can appear in an exponent program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Term {
    /// Approximation.
    A,
    /// Aligned drift.
    Dal,
    /// Distorted drift.
    Ddis,
    /// Constant-rate noise.
    N,
    /// Label-noise-scaled drift.
    DalSigma,
    /// Label-noise cross term `σ γ₀ √M`.
    NSigma,
    /// Decayed noise `γ₀² M N^{−2c}`.
    NDecay,
    /// Noise tail `γ₀^{1/(2α)} M^{1/(4α)} N^{−(1−c)(1−1/(2α))}`.
    NTail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputeOptimalResult {
    pub phase: Phase,
    pub e_star: f64,
    pub x_star: f64,
    pub eta: f64,
    pub balancing_terms: Vec<Term>,
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

/// Six-way phase partition. Points within `1e-9` of a boundary go to the lower/left phase.
pub fn classify_phase(alpha: f64, beta: f64) -> Result<Phase> {
    check_region(alpha, beta)?;
    let boundary = (alpha - 0.5).abs() < BOUNDARY_TOL
        || (beta - 0.5).abs() < BOUNDARY_TOL
        || (beta - alpha - 0.5).abs() < BOUNDARY_TOL;
    let low_alpha = alpha <= 0.5 + BOUNDARY_TOL;
    let low_beta = beta <= 0.5 + BOUNDARY_TOL;
    let below_diag = beta <= alpha + 0.5 + BOUNDARY_TOL;
    let label = match (low_alpha, low_beta, below_diag) {
        (true, true, _) => PhaseLabel::Ab,
        (true, false, true) => PhaseLabel::Ac,
        (true, false, false) => PhaseLabel::Ad,
        (false, true, _) => PhaseLabel::Aa,
        (false, false, true) => PhaseLabel::Ba,
        (false, false, false) => PhaseLabel::Bb,
    };
    Ok(Phase { label, boundary })
}

/// Closed-form `(e*, x*, η)` for signSGD under a constant learning rate.
pub fn table1_closed_form(alpha: f64, beta: f64) -> Result<ComputeOptimalResult> {
    let phase = classify_phase(alpha, beta)?;
    let (a, b) = (alpha, beta);
    let s = 2.0 * a + 2.0 * b - 1.0;
    let (e, x, eta) = match phase.label {
        PhaseLabel::Aa => (a + b, 1.0 / (2.0 * a + 1.0), s / (2.0 * a + 1.0)),
        PhaseLabel::Ab => (b + 0.5, 0.5, s / 2.0),
        PhaseLabel::Ac => {
            let den = 2.0 * b - a * (2.0 * b - 3.0) - 1.0;
            (1.0, s / (2.0 * den), a * s / den)
        }
        PhaseLabel::Ad => (1.0, 1.0 / (2.0 - a), 2.0 * a / (2.0 - a)),
        PhaseLabel::Ba => ((2.0 * a + 4.0 * b - 1.0) / (4.0 * b), b / (a + b), s / (2.0 * a + 2.0 * b)),
        PhaseLabel::Bb => ((6.0 * a + 1.0) / (4.0 * a + 2.0), (2.0 * a + 1.0) / (4.0 * a + 1.0), 4.0 * a / (4.0 * a + 1.0)),
    };
    let balancing_terms = if phase.label.is_phase_b() {
        vec![Term::Dal, Term::Ddis, Term::N]
    } else {
        vec![Term::A, Term::Dal, Term::N]
    };
    Ok(ComputeOptimalResult { phase, e_star: e, x_star: x, eta, balancing_terms })
}

/// `ℓ(x, g) = c0 + cx·x + cg·g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineExponent {
    pub term: Term,
    pub c0: f64,
    pub cx: f64,
    pub cg: f64,
}

impl AffineExponent {
    pub fn new(term: Term, c0: f64, cx: f64, cg: f64) -> Self {
        Self { term, c0, cx, cg }
    }

    pub fn at(&self, x: f64, g: f64) -> f64 {
        self.c0 + self.cx * x + self.cg * g
    }
}

/// Feasible half-plane `c0 + cx·x + cg·g ≥ 0`. A tagged constraint reports its term as active
/// when it binds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub term: Option<Term>,
    pub c0: f64,
    pub cx: f64,
    pub cg: f64,
}

impl LinearConstraint {
    pub fn at(&self, x: f64, g: f64) -> f64 {
        self.c0 + self.cx * x + self.cg * g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleProblem {
    pub terms: Vec<AffineExponent>,
    pub constraints: Vec<LinearConstraint>,
    pub x_domain: (f64, f64),
    pub e_domain: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub x_star: f64,
    pub e_star: f64,
    pub h_star: f64,
    /// Terms within `1e-6` of the minimum, plus tagged constraints that bind.
    pub active: Vec<Term>,
    pub unbounded: bool,
}

impl OracleProblem {
    fn objective(&self, x: f64, g: f64) -> f64 {
        self.terms.iter().map(|t| t.at(x, g)).fold(f64::INFINITY, f64::min)
    }

    /// All feasibility half-planes, including the domain box in `(x, g)` coordinates.
    fn half_planes(&self) -> Vec<LinearConstraint> {
        let (xl, xh) = self.x_domain;
        let (el, eh) = self.e_domain;
        let mut hp = vec![
            LinearConstraint { term: None, c0: -xl, cx: 1.0, cg: 0.0 },
            LinearConstraint { term: None, c0: xh, cx: -1.0, cg: 0.0 },
            LinearConstraint { term: None, c0: 0.0, cx: -el, cg: 1.0 },
            LinearConstraint { term: None, c0: 0.0, cx: eh, cg: -1.0 },
        ];
        hp.extend_from_slice(&self.constraints);
        hp
    }

    fn feasible(&self, hp: &[LinearConstraint], x: f64, g: f64, tol: f64) -> bool {
        hp.iter().all(|c| c.at(x, g) >= -tol)
    }

    fn grid_search(&self, n: usize) -> Option<(f64, f64, f64)> {
        let hp = self.half_planes();
        let (xl, xh) = self.x_domain;
        let (el, eh) = self.e_domain;
        let mut best: Option<(f64, f64, f64)> = None;
        for i in 0..n {
            let x = xl + (xh - xl) * i as f64 / (n - 1) as f64;
            for j in 0..n {
                let e = el + (eh - el) * j as f64 / (n - 1) as f64;
                let g = e * x;
                if !self.feasible(&hp, x, g, 1e-12) {
                    continue;
                }
                let v = self.objective(x, g);
                if best.map_or(true, |b| v > b.2) {
                    best = Some((x, g, v));
                }
            }
        }
        best
    }

    /// Exact maximum over the vertices of the arrangement formed by pairwise tie lines and the
    /// feasibility boundaries.
    fn vertex_search(&self) -> Option<(f64, f64, f64)> {
        let hp = self.half_planes();
        let mut lines: Vec<(f64, f64, f64)> = hp.iter().map(|c| (c.c0, c.cx, c.cg)).collect();
        for i in 0..self.terms.len() {
            for j in (i + 1)..self.terms.len() {
                let (a, b) = (self.terms[i], self.terms[j]);
                lines.push((a.c0 - b.c0, a.cx - b.cx, a.cg - b.cg));
            }
        }
        let mut best: Option<(f64, f64, f64)> = None;
        for i in 0..lines.len() {
            for j in (i + 1)..lines.len() {
                let (p0, px, pg) = lines[i];
                let (q0, qx, qg) = lines[j];
                let det = px * qg - pg * qx;
                let scale = (px.abs() + pg.abs()) * (qx.abs() + qg.abs());
                if det.abs() <= 1e-13 * scale.max(1e-300) {
                    continue;
                }
                let x = (-p0 * qg + pg * q0) / det;
                let g = (-px * q0 + p0 * qx) / det;
                if !x.is_finite() || !g.is_finite() || !self.feasible(&hp, x, g, 1e-10) {
                    continue;
                }
                let v = self.objective(x, g);
                if best.map_or(true, |b| v > b.2 + 1e-13) {
                    best = Some((x, g, v));
                }
            }
        }
        best
    }
}

pub const ORACLE_GRID: usize = 401;

/// Maximizes `min_i ℓ_i(x, e x)` over the domain: a 401×401 grid over `(x, e)` followed by exact
/// vertex enumeration in `(x, g)`.
pub fn minimax_oracle(problem: &OracleProblem) -> Result<OracleSolution> {
    if problem.terms.is_empty() {
        return Err(region("oracle needs at least one term"));
    }
    let grid = problem.grid_search(ORACLE_GRID);
    let vertex = problem.vertex_search();
    let (x, g, h) = match (grid, vertex) {
        (Some(gr), Some(vx)) => {
            if vx.2 >= gr.2 - 1e-12 {
                vx
            } else {
                gr
            }
        }
        (Some(gr), None) => gr,
        (None, Some(vx)) => vx,
        (None, None) => return Err(region("oracle domain is infeasible")),
    };
    let e = if x > 1e-12 { g / x } else { problem.e_domain.0 };

    let mut unbounded = false;
    if (e - problem.e_domain.1).abs() < 1e-9 {
        let mut wider = problem.clone();
        wider.e_domain.1 *= 2.0;
        if let Some((_, _, h2)) = wider.vertex_search() {
            unbounded = h2 > h + 1e-9;
        }
    }

    let mut active: Vec<Term> = problem
        .terms
        .iter()
        .filter(|t| t.at(x, g) - h <= ACTIVE_TOL)
        .map(|t| t.term)
        .collect();
    for c in &problem.constraints {
        if let Some(t) = c.term {
            if c.at(x, g).abs() <= ACTIVE_TOL {
                active.push(t);
            }
        }
    }
    active.sort();
    active.dedup();
    Ok(OracleSolution { x_star: x, e_star: e, h_star: h, active, unbounded })
}

/// Exponent program for constant-rate signSGD.
///
/// Above `β = α + 1/2` the aligned drift vanishes once `N γ₀ M^{min(α,1/2)} ≥ 1`; that branch is
/// encoded as the constraint `1 + (min(α,1/2) − 1) x − g ≥ 0`, reported as `Dal` when binding.
pub fn signsgd_problem(alpha: f64, beta: f64) -> OracleProblem {
    let m = alpha.min(0.5);
    let s = 2.0 * alpha + 2.0 * beta - 1.0;
    let mut terms = vec![
        AffineExponent::new(Term::A, 0.0, 2.0 * alpha - (1.0 - 2.0 * beta).max(0.0), 0.0),
        AffineExponent::new(Term::N, 0.0, -(2.0 - (2.0 * alpha).min(1.0)), 2.0),
    ];
    let mut constraints = Vec::new();
    if beta < alpha + 0.5 - 1e-12 {
        let p = 2.0 * s / (2.0 * alpha - 2.0 * beta + 1.0);
        terms.push(AffineExponent::new(Term::Dal, p, p * (m - 1.0), -p));
    } else {
        constraints.push(LinearConstraint { term: Some(Term::Dal), c0: 1.0, cx: m - 1.0, cg: -1.0 });
    }
    if alpha > 0.5 && beta > 0.5 {
        let a = (6.0 * alpha - 1.0) / (2.0 * alpha + 1.0);
        let b = 2.0 * (2.0 * alpha - 1.0) / (2.0 * alpha + 1.0);
        terms.push(AffineExponent::new(Term::Ddis, b, a - b, -b));
    }
    OracleProblem { terms, constraints, x_domain: (0.0, 1.0), e_domain: (1.0 - m, E_MAX) }
}

/// Exponent program for constant-rate SGD. The distorted drift enters only for `α > 1/2`.
pub fn sgd_problem(alpha: f64, beta: f64) -> OracleProblem {
    let q = (2.0 * alpha + 2.0 * beta - 1.0) / (2.0 * alpha);
    let r = (4.0 * alpha - 1.0) / (2.0 * alpha);
    let mut terms = vec![
        AffineExponent::new(Term::A, 0.0, 2.0 * alpha - (1.0 - 2.0 * beta).max(0.0), 0.0),
        AffineExponent::new(Term::Dal, q, -q, -q),
        AffineExponent::new(Term::N, r, -r, 1.0 - r),
    ];
    if alpha > 0.5 {
        let t = (2.0 * alpha - 1.0) / (2.0 * alpha);
        terms.push(AffineExponent::new(Term::Ddis, t, 1.0 - t, -t));
    }
    OracleProblem { terms, constraints: Vec::new(), x_domain: (0.0, 1.0), e_domain: ((1.0 - 2.0 * alpha).max(0.0), E_MAX) }
}

/// Exponent program for the excess risk with noisy labels (phase Aa).
pub fn noisy_problem(alpha: f64, beta: f64) -> OracleProblem {
    let s = 2.0 * alpha + 2.0 * beta - 1.0;
    let p = 2.0 * s / (2.0 * alpha + 1.0 - 2.0 * beta);
    let p2 = s / (2.0 * alpha);
    let terms = vec![
        AffineExponent::new(Term::Dal, p, -0.5 * p, -p),
        AffineExponent::new(Term::DalSigma, p2, -0.5 * p2, -p2),
        AffineExponent::new(Term::N, 0.0, -1.0, 2.0),
        AffineExponent::new(Term::NSigma, 0.0, -0.5, 1.0),
        AffineExponent::new(Term::A, 0.0, s, 0.0),
    ];
    OracleProblem { terms, constraints: Vec::new(), x_domain: (0.0, 1.0), e_domain: (1.0 - alpha.min(0.5), E_MAX) }
}

/// Exponent program for the warmup-stable-decay bound at a fixed decay exponent `c`.
pub fn wsd_problem(alpha: f64, beta: f64, c: f64) -> OracleProblem {
    let q = 2.0 * (2.0 * alpha + 2.0 * beta - 1.0) / (2.0 * alpha + 1.0 - 2.0 * beta);
    let tail = (1.0 - c) * (1.0 - 1.0 / (2.0 * alpha));
    let terms = vec![
        AffineExponent::new(Term::A, 0.0, 2.0 * alpha - (1.0 - 2.0 * beta).max(0.0), 0.0),
        AffineExponent::new(Term::Dal, q, -0.5 * q, -q),
        AffineExponent::new(Term::NDecay, 2.0 * c, -1.0 - 2.0 * c, 2.0),
        AffineExponent::new(Term::NTail, tail, -1.0 / (4.0 * alpha) - tail, 1.0 / (2.0 * alpha)),
    ];
    OracleProblem { terms, constraints: Vec::new(), x_domain: (0.0, 1.0), e_domain: (1.0 - alpha.min(0.5), E_MAX) }
}

fn result_from_oracle(phase: Phase, sol: &OracleSolution) -> Result<ComputeOptimalResult> {
    if sol.unbounded {
        return Err(region("exponent program is unbounded"));
    }
    let balancing_terms = sol
        .active
        .iter()
        .copied()
        .filter(|t| matches!(t, Term::A | Term::Dal | Term::Ddis | Term::N))
        .collect();
    Ok(ComputeOptimalResult { phase, e_star: sol.e_star, x_star: sol.x_star, eta: sol.h_star, balancing_terms })
}

/// Oracle solution of the signSGD program, in the same shape as [`table1_closed_form`].
pub fn signsgd_compute_optimal(alpha: f64, beta: f64) -> Result<ComputeOptimalResult> {
    let phase = classify_phase(alpha, beta)?;
    result_from_oracle(phase, &minimax_oracle(&signsgd_problem(alpha, beta))?)
}

pub fn sgd_compute_optimal(alpha: f64, beta: f64) -> Result<ComputeOptimalResult> {
    let phase = classify_phase(alpha, beta)?;
    result_from_oracle(phase, &minimax_oracle(&sgd_problem(alpha, beta))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WsdOptimum {
    pub c_star: f64,
    pub e_star: f64,
    pub m_star: f64,
    pub h_star: f64,
}

/// Whether `(α, β)` lies in the band where warmup-stable-decay beats a constant rate:
/// `α > 1/2` and `1/2 − α < β < (2α−1)/(2(4α−1))`.
pub fn in_wsd_band(alpha: f64, beta: f64) -> bool {
    alpha > 0.5 && beta > 0.5 - alpha && beta < (2.0 * alpha - 1.0) / (2.0 * (4.0 * alpha - 1.0))
}

pub fn wsd_compute_optimal(alpha: f64, beta: f64) -> Result<WsdOptimum> {
    if !in_wsd_band(alpha, beta) {
        return Err(region("outside Area Aa*"));
    }
    let (a, b) = (alpha, beta);
    let den = 16.0 * a * a + 8.0 * a * b + 2.0 * a - 2.0 * b - 1.0;
    Ok(WsdOptimum {
        c_star: (-8.0 * a * b + 2.0 * a + 2.0 * b - 1.0) / (16.0 * a * a + 8.0 * a * b - 6.0 * a - 2.0 * b + 1.0),
        e_star: (8.0 * a * a + 16.0 * a * b - 4.0 * a - 4.0 * b + 1.0) / (2.0 * (4.0 * a - 1.0)),
        m_star: 2.0 * (4.0 * a - 1.0) / den,
        h_star: 2.0 * (4.0 * a - 1.0) * (2.0 * a + 2.0 * b - 1.0) / den,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisyOptimum {
    pub e_star: f64,
    pub x_star: f64,
    pub eta: f64,
}

pub fn noisy_compute_optimal(alpha: f64, beta: f64) -> Result<NoisyOptimum> {
    check_region(alpha, beta)?;
    if !(alpha > 0.5 && beta < 0.5) {
        return Err(region("noisy-label exponents require alpha > 0.5 and beta < 0.5"));
    }
    let s = 2.0 * alpha + 2.0 * beta - 1.0;
    Ok(NoisyOptimum {
        e_star: s + 0.5,
        x_star: 1.0 / (4.0 * alpha + 2.0 * beta),
        eta: s / (4.0 * alpha + 2.0 * beta),
    })
}

/// Phase-Aa compute-optimal slope when the learning-rate exponent is fixed at `e ≥ 1/2`.
pub fn suboptimal_lr_slope(alpha: f64, beta: f64, e: f64) -> Result<f64> {
    let phase = classify_phase(alpha, beta)?;
    if phase.label != PhaseLabel::Aa {
        return Err(region(format!("suboptimal learning-rate slope is defined for phase Aa, got {}", phase.label.as_str())));
    }
    if !(e >= 0.5) {
        return Err(region("learning-rate exponent must be at least 1/2"));
    }
    let s = 2.0 * alpha + 2.0 * beta - 1.0;
    Ok(if e <= alpha + beta {
        (2.0 * e - 1.0) * s / (2.0 * alpha * (2.0 * e - 1.0) + s)
    } else {
        s / (alpha - beta + e + 1.0)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AreaFlag {
    AreaAaStar,
    AreaIIIIVSub,
}

pub fn beneficial_area_flags(alpha: f64, beta: f64) -> Result<Vec<AreaFlag>> {
    let sign = table1_closed_form(alpha, beta)?;
    let sgd = sgd_compute_optimal(alpha, beta)?;
    let mut flags = Vec::new();
    if in_wsd_band(alpha, beta) {
        flags.push(AreaFlag::AreaAaStar);
    }
    if sign.eta > sgd.eta + 1e-9 {
        flags.push(AreaFlag::AreaIIIIVSub);
    }
    Ok(flags)
}

/// Exponent `e` of the largest stable signSGD rate `γ₀ = M^{−e}`: `1 − min(α, 1/2)`.
pub fn maximal_lr_exponent(alpha: f64) -> f64 {
    1.0 - alpha.min(0.5)
}
