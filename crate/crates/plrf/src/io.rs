//! CSV and JSON writers. Floats use Rust's shortest round-trip formatting, so re-running a
//! seeded command reproduces files byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use plrf_core::ode::OdeRecord;
use plrf_core::trajectory::TrajectoryRecord;
use serde::Serialize;

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(rec.iter().map(|s| s.parse::<f64>().unwrap_or(f64::NAN)).collect());
    }
    Ok((header, rows))
}

/// `step,loss` rows.
pub fn write_losses(path: &Path, losses: &[(u64, f64)]) -> Result<()> {
    write_csv(path, &["step", "loss"], losses.iter().map(|&(k, l)| [k.to_string(), l.to_string()]))
}

/// Writes `<stem>.csv` and the `<stem>.json` sidecar; returns both paths.
pub fn write_trajectory(dir: &Path, stem: &str, rec: &TrajectoryRecord) -> Result<Vec<PathBuf>> {
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    write_losses(&csv_path, &rec.losses)?;
    #[derive(Serialize)]
    struct Sidecar<'a> {
        config: &'a plrf_core::OptimizerConfig,
        instance: &'a plrf_core::PlrfParams,
        steps: u64,
        rng_stream_id: u64,
        sampler: plrf_core::sampler::SamplerKind,
        status: plrf_core::trajectory::TrajectoryStatus,
        final_loss: f64,
        final_theta_norm: f64,
    }
    write_json(
        &json_path,
        &Sidecar {
            config: &rec.config,
            instance: &rec.instance_meta,
            steps: rec.steps,
            rng_stream_id: rec.rng_stream_id,
            sampler: rec.sampler,
            status: rec.status,
            final_loss: rec.final_loss(),
            final_theta_norm: rec.final_theta_norm,
        },
    )?;
    Ok(vec![csv_path, json_path])
}

/// One row of an ODE prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OdeRow {
    pub step: u64,
    pub loss: f64,
    pub drift: f64,
    pub noise: f64,
    pub approx: f64,
}

impl From<&OdeRecord> for OdeRow {
    fn from(r: &OdeRecord) -> Self {
        Self { step: r.step, loss: r.state.loss, drift: r.split.drift, noise: r.split.noise, approx: r.split.approx }
    }
}

pub fn write_ode(path: &Path, rows: &[OdeRow]) -> Result<()> {
    write_csv(
        path,
        &["step", "loss", "drift", "noise", "approx"],
        rows.iter().map(|r| {
            [r.step.to_string(), r.loss.to_string(), r.drift.to_string(), r.noise.to_string(), r.approx.to_string()]
        }),
    )
}
