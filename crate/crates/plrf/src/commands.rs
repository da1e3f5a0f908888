//! Request types and report builders behind the `theory`, `phase-plane` and `diagnostics`
//! subcommands.

use plrf_core::fit::{decay_diagnostics, DecayDiagnostics};
use plrf_core::optimal::{
    beneficial_area_flags, classify_phase, maximal_lr_exponent, noisy_compute_optimal, sgd_compute_optimal,
    table1_closed_form, wsd_compute_optimal, AreaFlag,
};
use plrf_core::theory::{noisy_signsgd_terms, sgd_terms, signsgd_terms};
use plrf_core::{build_instance, PlrfParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::RunError;
use crate::run::run_seeds;

/// Shipped JSON schemas for stdout documents.
pub const THEORY_SCHEMA: &str = include_str!("../schema/theory.schema.json");
pub const DIAGNOSTICS_SCHEMA: &str = include_str!("../schema/diagnostics.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryRequest {
    pub alpha: f64,
    pub beta: f64,
    /// Label-noise level; adds the noisy-label optimum.
    #[serde(default)]
    pub sigma: Option<f64>,
    /// Evaluate the loss terms at one `(M, N, γ₀)` point.
    #[serde(default)]
    pub terms: Option<TermsPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermsPoint {
    pub model_size: f64,
    pub steps: f64,
    pub gamma0: f64,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn flag_name(f: AreaFlag) -> &'static str {
    match f {
        AreaFlag::AreaAaStar => "area_aa_star",
        AreaFlag::AreaIIIIVSub => "area_iii_iv_sub",
    }
}

/// Builds the `theory` document. A point outside the model region is an error; every other
/// formula that does not apply is `null` with its reason under `reasons`.
pub fn theory_report(req: &TheoryRequest) -> Result<Value, RunError> {
    let (a, b) = (req.alpha, req.beta);
    let phase = classify_phase(a, b)?;
    let mut reasons = Map::new();
    let mut slot = |key: &str, r: Result<Value, plrf_core::Error>| match r {
        Ok(v) => v,
        Err(e) => {
            reasons.insert(key.to_string(), Value::String(e.to_string()));
            Value::Null
        }
    };
    let table1 = slot("table1", table1_closed_form(a, b).map(|r| to_value(&r)));
    let sgd = slot("sgd", sgd_compute_optimal(a, b).map(|r| to_value(&r)));
    let wsd = slot("wsd", wsd_compute_optimal(a, b).map(|r| to_value(&r)));
    let noisy = match req.sigma {
        Some(_) => slot("noisy", noisy_compute_optimal(a, b).map(|r| to_value(&r))),
        None => Value::Null,
    };
    let flags = slot(
        "area_flags",
        beneficial_area_flags(a, b).map(|f| Value::from(f.into_iter().map(flag_name).collect::<Vec<_>>())),
    );
    let terms = match req.terms {
        Some(t) => {
            let sign = match req.sigma {
                Some(s) if s > 0.0 => noisy_signsgd_terms(a, b, t.model_size, t.steps, t.gamma0, s),
                _ => signsgd_terms(a, b, t.model_size, t.steps, t.gamma0),
            };
            let s = slot("terms.signsgd", sign.map(|e| to_value(&e)));
            let g = slot("terms.sgd", sgd_terms(a, b, t.model_size, t.steps, t.gamma0).map(|e| to_value(&e)));
            json!({"point": t, "signsgd": s, "sgd": g})
        }
        None => Value::Null,
    };
    Ok(json!({
        "alpha": a,
        "beta": b,
        "sigma": req.sigma,
        "phase": {"label": phase.label.as_str(), "boundary": phase.boundary},
        "table1": table1,
        "sgd": sgd,
        "wsd": wsd,
        "noisy": noisy,
        "area_flags": flags,
        "maximal_lr_exponent": maximal_lr_exponent(a),
        "terms": terms,
        "reasons": reasons,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhasePlaneSpec {
    #[serde(default = "PhasePlaneSpec::default_alpha_min")]
    pub alpha_min: f64,
    #[serde(default = "PhasePlaneSpec::default_alpha_max")]
    pub alpha_max: f64,
    #[serde(default)]
    pub beta_min: f64,
    #[serde(default = "PhasePlaneSpec::default_beta_max")]
    pub beta_max: f64,
    /// Grid points per axis.
    #[serde(default = "PhasePlaneSpec::default_n")]
    pub n: usize,
}

impl PhasePlaneSpec {
    fn default_alpha_min() -> f64 {
        0.05
    }
    fn default_alpha_max() -> f64 {
        1.5
    }
    fn default_beta_max() -> f64 {
        1.5
    }
    fn default_n() -> usize {
        60
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.n < 2 {
            return Err(RunError::config("n must be at least 2"));
        }
        if !(self.alpha_min > 0.0 && self.alpha_max > self.alpha_min && self.beta_max > self.beta_min) {
            return Err(RunError::config("need 0 < alpha_min < alpha_max and beta_min < beta_max"));
        }
        Ok(())
    }
}

impl Default for PhasePlaneSpec {
    fn default() -> Self {
        serde_json::from_value(json!({})).expect("defaults deserialize")
    }
}

pub const PHASE_PLANE_HEADER: [&str; 7] = ["alpha", "beta", "phase", "eta_signsgd", "eta_sgd", "eta_wsd", "flags"];

/// One CSV row per grid point inside the model region. `eta_wsd` is empty outside the band.
pub fn phase_plane_rows(spec: &PhasePlaneSpec) -> Result<Vec<[String; 7]>, RunError> {
    spec.validate()?;
    let lin = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (spec.n - 1) as f64;
    let mut rows = Vec::new();
    for i in 0..spec.n {
        let a = lin(spec.alpha_min, spec.alpha_max, i);
        for j in 0..spec.n {
            let b = lin(spec.beta_min, spec.beta_max, j);
            let Ok(sign) = table1_closed_form(a, b) else { continue };
            let sgd = sgd_compute_optimal(a, b)?;
            let wsd = wsd_compute_optimal(a, b).map(|w| w.h_star.to_string()).unwrap_or_default();
            let flags: Vec<&str> = beneficial_area_flags(a, b)?.into_iter().map(flag_name).collect();
            rows.push([
                a.to_string(),
                b.to_string(),
                sign.phase.label.as_str().to_string(),
                sign.eta.to_string(),
                sgd.eta.to_string(),
                wsd,
                flags.join(";"),
            ]);
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSpec {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "DiagnosticsSpec::default_m")]
    pub model_size: usize,
    #[serde(default = "DiagnosticsSpec::default_ratio")]
    pub ratio_d_over_m: f64,
    #[serde(default = "DiagnosticsSpec::default_seeds")]
    pub n_seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
}

impl DiagnosticsSpec {
    fn default_m() -> usize {
        200
    }
    fn default_ratio() -> f64 {
        PlrfParams::DEFAULT_RATIO
    }
    fn default_seeds() -> usize {
        10
    }

    pub fn seeds(&self) -> Vec<u64> {
        run_seeds(self.base_seed, self.model_size, self.n_seeds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub alpha: f64,
    pub beta: f64,
    pub model_size: usize,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<DecayDiagnostics>,
    pub mean: DecayDiagnostics,
    /// `−2α`, the expected gradient-decay slope.
    pub gradient_reference: f64,
}

pub fn diagnostics_report(spec: &DiagnosticsSpec) -> Result<DiagnosticsReport, RunError> {
    if spec.n_seeds == 0 {
        return Err(RunError::config("n_seeds must be at least 1"));
    }
    let seeds = spec.seeds();
    let per_seed: Vec<DecayDiagnostics> = seeds
        .par_iter()
        .map(|&s| {
            let p = PlrfParams::with_ratio(spec.alpha, spec.beta, spec.model_size, spec.ratio_d_over_m, s);
            build_instance(p).map(|i| decay_diagnostics(&i)).map_err(RunError::from)
        })
        .collect::<Result<_, _>>()?;
    let n = per_seed.len() as f64;
    let mean = DecayDiagnostics {
        gradient_slope: per_seed.iter().map(|d| d.gradient_slope).sum::<f64>() / n,
        target_slope: per_seed.iter().map(|d| d.target_slope).sum::<f64>() / n,
        target_tail_slope: per_seed.iter().map(|d| d.target_tail_slope).sum::<f64>() / n,
    };
    Ok(DiagnosticsReport {
        alpha: spec.alpha,
        beta: spec.beta,
        model_size: spec.model_size,
        seeds,
        per_seed,
        mean,
        gradient_reference: -2.0 * spec.alpha,
    })
}
