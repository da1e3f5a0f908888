//! Learning-rate multipliers `γ_k = γ₀ f(k)` and their closed-form integrals `F(k) = ∫₀ᵏ f`.

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Constant,
    #[serde(alias = "wsd")]
    WarmupStableDecay,
    #[serde(alias = "sd")]
    StableDecay,
    #[serde(alias = "linear")]
    LinearDecay,
    Cosine,
}

/// A schedule together with the total step count it is defined against.
///
/// The JSON form carries only `kind`, `w`, `p`, `c` and `tau`; the step count comes from the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    #[serde(default)]
    pub w: f64,
    #[serde(default = "one")]
    pub p: f64,
    #[serde(default)]
    pub c: f64,
    #[serde(default = "one")]
    pub tau: f64,
    #[serde(skip, default = "one_step")]
    pub total_steps: u64,
}

fn one() -> f64 {
    1.0
}

fn one_step() -> u64 {
    1
}

impl Default for Schedule {
    fn default() -> Self {
        Self::constant(1)
    }
}

impl Schedule {
    pub fn constant(total_steps: u64) -> Self {
        Self { kind: ScheduleKind::Constant, w: 0.0, p: 1.0, c: 0.0, tau: 1.0, total_steps }
    }

    pub fn wsd(total_steps: u64, w: f64, p: f64, c: f64, tau: f64) -> Self {
        Self { kind: ScheduleKind::WarmupStableDecay, w, p, c, tau, total_steps }
    }

    pub fn stable_decay(total_steps: u64, p: f64, c: f64, tau: f64) -> Self {
        Self { kind: ScheduleKind::StableDecay, w: 0.0, p, c, tau, total_steps }
    }

    pub fn linear(total_steps: u64) -> Self {
        Self { kind: ScheduleKind::LinearDecay, ..Self::constant(total_steps) }
    }

    pub fn cosine(total_steps: u64) -> Self {
        Self { kind: ScheduleKind::Cosine, ..Self::constant(total_steps) }
    }

    pub fn with_total_steps(mut self, total_steps: u64) -> Self {
        self.total_steps = total_steps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(invalid("schedule total_steps must be positive"));
        }
        match self.kind {
            ScheduleKind::WarmupStableDecay | ScheduleKind::StableDecay => {
                let w = if self.kind == ScheduleKind::StableDecay { 0.0 } else { self.w };
                if !(self.p > 0.0 && self.p <= 1.0) {
                    return Err(invalid("schedule p must lie in (0, 1]"));
                }
                if !(w >= 0.0 && w < self.p / 2.0) {
                    return Err(invalid("schedule w must satisfy 0 <= w < p/2"));
                }
                if !(self.c > 0.0 && self.c < 1.0) {
                    return Err(invalid("schedule c must lie in (0, 1)"));
                }
                if !(self.tau > 0.0) {
                    return Err(invalid("schedule tau must be positive"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn n(&self) -> f64 {
        self.total_steps as f64
    }

    fn warmup_len(&self) -> f64 {
        match self.kind {
            ScheduleKind::WarmupStableDecay => self.w * self.n(),
            _ => 0.0,
        }
    }

    /// `f(k)`, clamped to `[0, N]` in its argument.
    pub fn multiplier(&self, k: f64) -> f64 {
        let n = self.n();
        let k = k.clamp(0.0, n);
        match self.kind {
            ScheduleKind::Constant => 1.0,
            ScheduleKind::WarmupStableDecay | ScheduleKind::StableDecay => {
                let wn = self.warmup_len();
                let pn = self.p * n;
                if wn > 0.0 && k <= wn {
                    k / wn
                } else if k <= pn {
                    1.0
                } else {
                    (1.0 + self.tau * (k - pn)).powf(-self.c)
                }
            }
            ScheduleKind::LinearDecay => 1.0 - (1.0 - 1.0 / n.sqrt()) * k / n,
            ScheduleKind::Cosine => {
                (1.0 + 1.0 / n) / 2.0 + (1.0 - 1.0 / n) / 2.0 * (core::f64::consts::PI * k / n).cos()
            }
        }
    }

    /// `F(k) = ∫₀ᵏ f(u) du` in closed form.
    pub fn cumulative(&self, k: f64) -> f64 {
        let n = self.n();
        let k = k.clamp(0.0, n);
        match self.kind {
            ScheduleKind::Constant => k,
            ScheduleKind::WarmupStableDecay | ScheduleKind::StableDecay => {
                let wn = self.warmup_len();
                let pn = self.p * n;
                if wn > 0.0 && k <= wn {
                    k * k / (2.0 * wn)
                } else if k <= pn {
                    wn / 2.0 + (k - wn)
                } else {
                    let s = k - pn;
                    let one_c = 1.0 - self.c;
                    wn / 2.0 + (pn - wn) + ((1.0 + self.tau * s).powf(one_c) - 1.0) / (self.tau * one_c)
                }
            }
            ScheduleKind::LinearDecay => k - (1.0 - 1.0 / n.sqrt()) * k * k / (2.0 * n),
            ScheduleKind::Cosine => {
                let pi = core::f64::consts::PI;
                (1.0 + 1.0 / n) / 2.0 * k + (1.0 - 1.0 / n) / 2.0 * (n / pi) * (pi * k / n).sin()
            }
        }
    }

    /// Points where `f` is not differentiable.
    pub fn breakpoints(&self) -> [f64; 2] {
        match self.kind {
            ScheduleKind::WarmupStableDecay | ScheduleKind::StableDecay => {
                [self.warmup_len(), self.p * self.n()]
            }
            _ => [0.0, self.n()],
        }
    }
}
