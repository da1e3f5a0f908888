//! Loss-vs-FLOPS curves, compute-optimal envelopes and log-log slope fits.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::PlrfInstance;
use crate::optim::OptimizerConfig;

pub const MIN_FIT_POINTS: usize = 8;
pub const DEFAULT_FLOPS_FACTOR: f64 = 6.0;

fn fit_err(msg: impl Into<alloc::string::String>) -> Error {
    Error::Fit(msg.into())
}

/// Sweep over model sizes with `γ₀ = lr_scale · M^{−e}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub alpha: f64,
    pub beta: f64,
    pub model_sizes: Vec<usize>,
    pub ratio_d_over_m: f64,
    pub optimizer: OptimizerConfig,
    pub lr_exponent: f64,
    pub lr_scale: f64,
    pub n_seeds: usize,
    pub flops_per_step_factor: f64,
    pub max_steps_per_size: u64,
    pub base_seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.0,
            model_sizes: alloc::vec![32, 64, 128, 256],
            ratio_d_over_m: 4.0,
            optimizer: OptimizerConfig::default(),
            lr_exponent: 1.0,
            lr_scale: 1.0,
            n_seeds: 1,
            flops_per_step_factor: DEFAULT_FLOPS_FACTOR,
            max_steps_per_size: 10_000,
            base_seed: 0,
        }
    }
}

impl SweepConfig {
    pub fn gamma0_for(&self, m: usize) -> f64 {
        self.lr_scale * (m as f64).powf(-self.lr_exponent)
    }

    pub fn validate(&self) -> Result<()> {
        if self.model_sizes.is_empty() || self.model_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("model_sizes must be nonempty and strictly increasing"));
        }
        if self.model_sizes[0] == 0 {
            return Err(invalid("model sizes must be positive"));
        }
        if self.n_seeds == 0 {
            return Err(invalid("n_seeds must be at least 1"));
        }
        if !(self.ratio_d_over_m >= 1.0) {
            return Err(invalid("ratio_d_over_m must be at least 1"));
        }
        if !(self.flops_per_step_factor > 0.0) || !(self.lr_scale > 0.0) {
            return Err(invalid("flops factor and lr_scale must be positive"));
        }
        self.optimizer.validate()
    }
}

/// Loss as a function of FLOPS for one model size. Points are sorted by FLOPS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub model_size: usize,
    pub points: Vec<(f64, f64)>,
}

impl Curve {
    /// Converts `(step, loss)` pairs into `(factor·M·step, loss)`, dropping step 0.
    pub fn from_steps(model_size: usize, factor: f64, losses: &[(u64, f64)]) -> Self {
        let points = losses
            .iter()
            .filter(|p| p.0 > 0)
            .map(|&(k, l)| (factor * model_size as f64 * k as f64, l))
            .collect();
        Self { model_size, points }
    }

    /// Log-linear interpolation in FLOPS; `None` outside the curve's range. The range is widened
    /// by a relative [`END_SLACK`] at each end so that budgets rounded down to whole steps still
    /// reach a shared FLOPS cap.
    pub fn interpolate(&self, flops: f64) -> Option<f64> {
        let p = &self.points;
        if p.is_empty() || flops < p[0].0 * (1.0 - END_SLACK) || flops > p[p.len() - 1].0 * (1.0 + END_SLACK) {
            return None;
        }
        if flops <= p[0].0 {
            return Some(p[0].1);
        }
        if flops >= p[p.len() - 1].0 {
            return Some(p[p.len() - 1].1);
        }
        let i = p.partition_point(|q| q.0 < flops);
        if i < p.len() && p[i].0 == flops {
            return Some(p[i].1);
        }
        let (a, b) = (p[i - 1], p[i]);
        let t = (flops.ln() - a.0.ln()) / (b.0.ln() - a.0.ln());
        Some(a.1 + t * (b.1 - a.1))
    }
}

/// Relative FLOPS tolerance at curve ends.
pub const END_SLACK: f64 = 1e-3;

/// Pointwise mean of several loss traces recorded on the same grid.
pub fn mean_losses(traces: &[&[(u64, f64)]]) -> Result<Vec<(u64, f64)>> {
    let first = traces.first().ok_or_else(|| fit_err("no traces to average"))?;
    let mut out: Vec<(u64, f64)> = first.to_vec();
    for t in &traces[1..] {
        if t.len() != out.len() || t.iter().zip(&out).any(|(a, b)| a.0 != b.0) {
            return Err(fit_err("traces are recorded on different grids"));
        }
        for (o, p) in out.iter_mut().zip(t.iter()) {
            o.1 += p.1;
        }
    }
    let n = traces.len() as f64;
    out.iter_mut().for_each(|o| o.1 /= n);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePoint {
    pub flops: f64,
    pub loss: f64,
    pub argmin_size: usize,
}

pub const ENVELOPE_PER_DECADE: usize = 50;

/// Pointwise minimum over curves on a geometric FLOPS grid spanning their union.
/// Ties go to the earlier curve.
pub fn lower_envelope(curves: &[Curve], per_decade: usize) -> Result<Vec<EnvelopePoint>> {
    if curves.len() < 2 {
        return Err(fit_err("lower envelope needs at least two curves"));
    }
    let lo = curves.iter().filter_map(|c| c.points.first()).map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = curves.iter().filter_map(|c| c.points.last()).map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if !(lo > 0.0 && hi > lo) {
        return Err(fit_err("curves have no overlapping FLOPS range"));
    }
    let decades = (hi / lo).log10();
    let n = ((decades * per_decade.max(1) as f64).ceil() as usize).max(1);
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let f = if i == n { hi } else { lo * 10f64.powf(decades * i as f64 / n as f64) };
        let mut best: Option<(f64, usize)> = None;
        for c in curves {
            if let Some(v) = c.interpolate(f) {
                if best.map_or(true, |b| v < b.0) {
                    best = Some((v, c.model_size));
                }
            }
        }
        if let Some((loss, size)) = best {
            out.push(EnvelopePoint { flops: f, loss, argmin_size: size });
        }
    }
    if out.len() < 2 {
        return Err(fit_err("empty overlap region"));
    }
    Ok(out)
}

/// Which part of the log-FLOPS range enters a fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowPolicy {
    /// Fraction of the log range dropped at the start.
    pub drop_start: f64,
    /// Fraction of the log range dropped at the end.
    pub drop_end: f64,
    /// Explicit `(lo, hi)` FLOPS window; overrides the fractions.
    pub explicit: Option<(f64, f64)>,
}

impl Default for WindowPolicy {
    fn default() -> Self {
        Self { drop_start: 0.2, drop_end: 0.05, explicit: None }
    }
}

impl WindowPolicy {
    pub fn explicit(lo: f64, hi: f64) -> Self {
        Self { explicit: Some((lo, hi)), ..Self::default() }
    }

    pub fn fractions(drop_start: f64, drop_end: f64) -> Self {
        Self { drop_start, drop_end, explicit: None }
    }

    fn bounds(&self, lo: f64, hi: f64) -> (f64, f64) {
        if let Some(w) = self.explicit {
            return w;
        }
        let (a, b) = (lo.ln(), hi.ln());
        ((a + self.drop_start * (b - a)).exp(), (b - self.drop_end * (b - a)).exp())
    }
}

/// FLOPS from which the envelope minimizer stays at or above each size after the smallest.
///
/// Entry `k` belongs to `sizes[k + 1]`. Noisy curves can make the minimizer flip back and forth;
/// the last upward crossing is used.
pub fn size_switches(envelope: &[EnvelopePoint], sizes: &[usize]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(sizes.len().saturating_sub(1));
    for &s in sizes.iter().skip(1) {
        let last_below = envelope.iter().rposition(|p| p.argmin_size < s);
        let f = match last_below {
            Some(i) if i + 1 < envelope.len() => envelope[i + 1].flops,
            Some(_) => return Err(fit_err(format!("size {s} never becomes optimal"))),
            None => return Err(fit_err(format!("size {s} is optimal from the first grid point"))),
        };
        out.push(f);
    }
    Ok(out)
}

/// Window over the range where the minimizer moves through `sizes`: from the first to the last
/// switch, widened on each side by half the mean switch spacing (in log FLOPS).
pub fn interior_window(envelope: &[EnvelopePoint], sizes: &[usize]) -> Result<WindowPolicy> {
    if sizes.len() < 3 {
        return Err(fit_err("interior window needs at least three sizes"));
    }
    let sw = size_switches(envelope, sizes)?;
    let (first, last) = (sw[0], sw[sw.len() - 1]);
    if !(last > first) {
        return Err(fit_err("size switches are not increasing"));
    }
    let half = ((last / first).ln() / (sw.len() - 1) as f64 / 2.0).exp();
    Ok(WindowPolicy::explicit(first / half, last * half))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub n_points: usize,
}

/// Ordinary least squares `y = a + b x`; returns `(b, a, r²)`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (b, a, r2)
}

fn windowed(points: &[(f64, f64)], policy: &WindowPolicy) -> Result<((f64, f64), Vec<(f64, f64)>)> {
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if !(lo > 0.0) {
        return Err(fit_err("FLOPS must be positive"));
    }
    let (wl, wh) = policy.bounds(lo, hi);
    let tol = 1e-12 * wh.abs();
    let sel: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.0 >= wl - tol && p.0 <= wh + tol).collect();
    if sel.len() < MIN_FIT_POINTS {
        return Err(fit_err(format!("only {} points in window, need {}", sel.len(), MIN_FIT_POINTS)));
    }
    Ok(((wl, wh), sel))
}

/// Least-squares slope of `log loss` against `log FLOPS` inside the window.
pub fn fit_loglog_slope(points: &[(f64, f64)], policy: &WindowPolicy) -> Result<SlopeFit> {
    let (window, sel) = windowed(points, policy)?;
    if sel.iter().any(|p| !(p.1 > 0.0)) {
        return Err(fit_err("losses must be positive for a log-log fit"));
    }
    let xs: Vec<f64> = sel.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = sel.iter().map(|p| p.1.ln()).collect();
    let (slope, intercept, r_squared) = least_squares(&xs, &ys);
    Ok(SlopeFit { slope, intercept, r_squared, window, n_points: sel.len() })
}

pub fn envelope_slope(envelope: &[EnvelopePoint], policy: &WindowPolicy) -> Result<SlopeFit> {
    let pts: Vec<(f64, f64)> = envelope.iter().map(|p| (p.flops, p.loss)).collect();
    fit_loglog_slope(&pts, policy)
}

/// Slope of `log argmin M` against `log FLOPS` inside the window.
pub fn argmin_size_slope(envelope: &[EnvelopePoint], policy: &WindowPolicy) -> Result<SlopeFit> {
    let pts: Vec<(f64, f64)> = envelope.iter().map(|p| (p.flops, p.argmin_size as f64)).collect();
    fit_loglog_slope(&pts, policy)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayDiagnostics {
    /// Slope of `log λᵢ(K)` against `log i` over the first `M/2` indices.
    pub gradient_slope: f64,
    /// Slope of `log |Uᵀθ*|ᵢ` over the first `M/2` indices.
    pub target_slope: f64,
    /// Same as `target_slope` restricted to indices `M/4..M/2`.
    pub target_tail_slope: f64,
}

fn index_slope(values: &[f64], from: usize, to: usize) -> f64 {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in from..to.min(values.len()) {
        let v = values[i].abs();
        if v > 0.0 && v.is_finite() {
            xs.push(((i + 1) as f64).ln());
            ys.push(v.ln());
        }
    }
    if xs.len() < 2 {
        return f64::NAN;
    }
    least_squares(&xs, &ys).0
}

pub fn decay_diagnostics(inst: &PlrfInstance) -> DecayDiagnostics {
    let m = inst.model_size();
    let half = (m / 2).max(2).min(m);
    let coords = inst.theta_star_in_k_basis();
    DecayDiagnostics {
        gradient_slope: index_slope(&inst.k_eigenvalues, 0, half),
        target_slope: index_slope(&coords, 0, half),
        target_tail_slope: index_slope(&coords, (m / 4).min(half.saturating_sub(2)), half),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn exact_power_law() {
        let pts: Vec<(f64, f64)> = (0..60).map(|i| {
            let x = 10f64.powf(i as f64 / 10.0);
            (x, 3.0 * x.powf(-0.7))
        }).collect();
        let f = fit_loglog_slope(&pts, &WindowPolicy::default()).unwrap();
        assert!((f.slope + 0.7).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_points() {
        let pts = vec![(1.0, 1.0), (10.0, 0.5), (100.0, 0.25)];
        assert!(matches!(fit_loglog_slope(&pts, &WindowPolicy::default()), Err(Error::Fit(_))));
    }

    #[test]
    fn constant_curves() {
        let mk = |m, v| Curve { model_size: m, points: vec![(1.0, v), (1e3, v)] };
        let env = lower_envelope(&[mk(1, 1.0), mk(2, 2.0)], 10).unwrap();
        assert!(env.iter().all(|p| p.loss == 1.0 && p.argmin_size == 1));
    }
}
