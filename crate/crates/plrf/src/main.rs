use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use plrf::commands::{
    diagnostics_report, phase_plane_rows, theory_report, DiagnosticsSpec, PhasePlaneSpec, TheoryRequest,
    PHASE_PLANE_HEADER,
};
use plrf::config::{env_seed, parse_override, resolve, TrajectoryConfig};
use plrf::manifest::RunManifest;
use plrf::run::{run_trajectories, write_run};
use plrf::sweep::{analyze, run_sweep, write_sweep, SweepSpec};
use plrf::validate::{self, Level, Options};
use plrf::{exit_code, io, RunError};
use plrf_core::OptimizerKind;

#[derive(Parser)]
#[command(name = "plrf", version, about = "Power-law random features: simulation, theory and scaling sweeps")]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate trajectories over several seeds.
    Trajectory(RunArgs),
    /// Integrate the deterministic mode-energy ODE.
    Ode(RunArgs),
    /// Print phase and compute-optimal exponents as JSON.
    Theory(TheoryArgs),
    /// Export the exponent phase plane as CSV.
    PhasePlane(PhasePlaneArgs),
    /// Run a FLOPS sweep over model sizes and fit the envelope.
    Sweep(SweepArgs),
    /// Fit the gradient and target decay slopes of random instances.
    Diagnostics(DiagnosticsArgs),
    /// Run the acceptance suite.
    Validate(ValidateArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config, or a manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set optimizer.gamma0=0.01 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Print the resolved config and a cost estimate, then exit.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptArg {
    Signsgd,
    Sgd,
    Adam,
}

impl From<OptArg> for OptimizerKind {
    fn from(o: OptArg) -> Self {
        match o {
            OptArg::Signsgd => OptimizerKind::SignSgd,
            OptArg::Sgd => OptimizerKind::Sgd,
            OptArg::Adam => OptimizerKind::Adam,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    model_size: Option<usize>,
    #[arg(long)]
    ambient_dim: Option<usize>,
    #[arg(long)]
    steps: Option<u64>,
    /// Number of seeds.
    #[arg(long)]
    seeds: Option<usize>,
    /// Base seed (overrides PLRF_SEED).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    optimizer: Option<OptArg>,
    #[arg(long)]
    gamma0: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Label-noise standard deviation.
    #[arg(long)]
    sigma: Option<f64>,
    /// Also integrate the ODE on the same instances (trajectory only).
    #[arg(long)]
    ode: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TheoryArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Evaluate loss terms at this model size (needs --steps and --gamma0).
    #[arg(long, requires_all = ["steps", "gamma0"])]
    model_size: Option<f64>,
    #[arg(long)]
    steps: Option<f64>,
    #[arg(long)]
    gamma0: Option<f64>,
    /// Also write theory.json and a manifest here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PhasePlaneArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    alpha_min: Option<f64>,
    #[arg(long)]
    alpha_max: Option<f64>,
    #[arg(long)]
    beta_min: Option<f64>,
    #[arg(long)]
    beta_max: Option<f64>,
    /// Grid points per axis.
    #[arg(long)]
    n: Option<usize>,
    /// Also write phase_plane.csv and a manifest here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Comma-separated model sizes.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    optimizer: Option<OptArg>,
    /// Learning-rate exponent `e` in `γ₀ = scale · M^{-e}` (default: theory optimum).
    #[arg(long)]
    lr_exponent: Option<f64>,
    #[arg(long)]
    lr_scale: Option<f64>,
    #[arg(long)]
    max_flops: Option<f64>,
    #[arg(long)]
    max_steps: Option<u64>,
    /// Fraction of the log-FLOPS range dropped at the start of the fit window.
    #[arg(long, requires = "drop_end")]
    drop_start: Option<f64>,
    /// Fraction of the log-FLOPS range dropped at the end of the fit window.
    #[arg(long, requires = "drop_start")]
    drop_end: Option<f64>,
    /// Fit between the first and last change of the envelope's best size.
    #[arg(long, conflicts_with_all = ["drop_start", "window_lo"])]
    interior: bool,
    /// Explicit fit window in FLOPS.
    #[arg(long, requires = "window_hi")]
    window_lo: Option<f64>,
    #[arg(long, requires = "window_lo")]
    window_hi: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnosticsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    model_size: Option<usize>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Quick,
    Full,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, value_enum, default_value = "quick")]
    level: LevelArg,
    /// Shrink sizes and seeds by this factor; simulation tolerances widen by 1/scale.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Run only these criteria (comma-separated ids).
    #[arg(long, value_delimiter = ',')]
    criteria: Option<Vec<u8>>,
    /// Shift every closed-form η before comparing with the oracle.
    #[arg(long, default_value_t = 0.0, hide = true, allow_hyphen_values = true)]
    perturb_eta: f64,
    /// Write validation.json and a manifest here.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Overrides(Vec<(String, Value)>);

impl Overrides {
    fn new(c: &Common) -> Result<Self, RunError> {
        Ok(Self(c.set.iter().map(|s| parse_override(s)).collect::<Result<_, _>>()?))
    }

    fn opt<T: Serialize>(&mut self, key: &str, v: Option<T>) -> &mut Self {
        if let Some(v) = v {
            self.0.push((key.to_string(), json!(v)));
        }
        self
    }
}

fn load<T: DeserializeOwned + Serialize>(c: &Common, seed_key: Option<&str>, ov: &Overrides) -> Result<(T, Value)> {
    let env = seed_key.and_then(|_| env_seed());
    let (cfg, _) = resolve::<T>(c.config.as_deref(), seed_key.unwrap_or("base_seed"), env.as_deref(), &ov.0)?;
    let resolved = serde_json::to_value(&cfg)?;
    Ok((cfg, resolved))
}

fn print_json(v: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn out_dir(out: &Option<PathBuf>, command: &str) -> PathBuf {
    out.clone().unwrap_or_else(|| Path::new("runs").join(command))
}

fn run_overrides(a: &RunArgs) -> Result<Overrides> {
    let mut ov = Overrides::new(&a.common)?;
    ov.opt("alpha", a.alpha)
        .opt("beta", a.beta)
        .opt("model_size", a.model_size)
        .opt("ambient_dim", a.ambient_dim)
        .opt("steps", a.steps)
        .opt("n_seeds", a.seeds)
        .opt("base_seed", a.seed)
        .opt("optimizer.kind", a.optimizer.map(OptimizerKind::from))
        .opt("optimizer.gamma0", a.gamma0)
        .opt("optimizer.batch_size", a.batch_size)
        .opt("optimizer.label_noise_sigma", a.sigma)
        .opt("ode", a.ode.then_some(true));
    Ok(ov)
}

fn cmd_trajectory(a: RunArgs) -> Result<()> {
    let (cfg, resolved): (TrajectoryConfig, _) = load(&a.common, Some("base_seed"), &run_overrides(&a)?)?;
    cfg.validate()?;
    if a.common.dry_run {
        return print_json(&json!({
            "command": "trajectory",
            "config": resolved,
            "estimated_steps": cfg.steps.saturating_mul(cfg.n_seeds as u64),
        }));
    }
    let run = run_trajectories(&cfg)?;
    let dir = out_dir(&a.out, "trajectory");
    let outputs = write_run(&dir, &run)?;
    RunManifest::new("trajectory", resolved, run.seeds.clone()).finish(&dir, &outputs)?;
    let n_div = run.n_diverged();
    eprintln!("wrote {} files to {}", outputs.len() + 1, dir.display());
    if n_div > 0 {
        return Err(RunError::Diverged(format!("{n_div} of {} seeds diverged", run.records.len())).into());
    }
    Ok(())
}

fn cmd_ode(a: RunArgs) -> Result<()> {
    let (cfg, resolved): (TrajectoryConfig, _) = load(&a.common, Some("base_seed"), &run_overrides(&a)?)?;
    cfg.validate()?;
    if a.common.dry_run {
        return print_json(&json!({"command": "ode", "config": resolved, "estimated_steps": cfg.steps}));
    }
    let (seeds, rows) = plrf::run::ode_only(&cfg)?;
    let dir = out_dir(&a.out, "ode");
    io::ensure_dir(&dir)?;
    let p = dir.join("ode.csv");
    io::write_ode(&p, &rows)?;
    RunManifest::new("ode", resolved, seeds).finish(&dir, &[p])?;
    if rows.iter().any(|r| !r.loss.is_finite()) {
        return Err(RunError::Diverged("ODE loss is not finite".into()).into());
    }
    Ok(())
}

/// Writes `file` plus a manifest when `--out` is given.
fn save_stdout_output(out: &Option<PathBuf>, command: &str, file: &str, body: &str, config: Value, seeds: Vec<u64>) -> Result<()> {
    if let Some(dir) = out {
        io::ensure_dir(dir)?;
        let p = dir.join(file);
        std::fs::write(&p, body).with_context(|| format!("writing {}", p.display()))?;
        RunManifest::new(command, config, seeds).finish(dir, &[p])?;
    }
    Ok(())
}

fn cmd_theory(a: TheoryArgs) -> Result<()> {
    let mut ov = Overrides::new(&a.common)?;
    ov.opt("alpha", a.alpha).opt("beta", a.beta).opt("sigma", a.sigma);
    if let (Some(m), Some(n), Some(g)) = (a.model_size, a.steps, a.gamma0) {
        ov.opt("terms", Some(json!({"model_size": m, "steps": n, "gamma0": g})));
    }
    let (req, resolved): (TheoryRequest, _) = load(&a.common, None, &ov)?;
    if a.common.dry_run {
        return print_json(&json!({"command": "theory", "config": resolved}));
    }
    let body = serde_json::to_string_pretty(&theory_report(&req)?)? + "\n";
    print!("{body}");
    save_stdout_output(&a.out, "theory", "theory.json", &body, resolved, Vec::new())
}

fn cmd_phase_plane(a: PhasePlaneArgs) -> Result<()> {
    let mut ov = Overrides::new(&a.common)?;
    ov.opt("alpha_min", a.alpha_min)
        .opt("alpha_max", a.alpha_max)
        .opt("beta_min", a.beta_min)
        .opt("beta_max", a.beta_max)
        .opt("n", a.n);
    let (spec, resolved): (PhasePlaneSpec, _) = load(&a.common, None, &ov)?;
    spec.validate()?;
    if a.common.dry_run {
        return print_json(&json!({"command": "phase-plane", "config": resolved, "grid_points": spec.n * spec.n}));
    }
    let rows = phase_plane_rows(&spec)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(PHASE_PLANE_HEADER)?;
    for r in &rows {
        w.write_record(r)?;
    }
    let body = String::from_utf8(w.into_inner()?)?;
    print!("{body}");
    save_stdout_output(&a.out, "phase-plane", "phase_plane.csv", &body, resolved, Vec::new())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let mut ov = Overrides::new(&a.common)?;
    ov.opt("alpha", a.alpha)
        .opt("beta", a.beta)
        .opt("model_sizes", a.sizes.clone())
        .opt("n_seeds", a.seeds)
        .opt("base_seed", a.seed)
        .opt("optimizer.kind", a.optimizer.map(OptimizerKind::from))
        .opt("lr_exponent", a.lr_exponent)
        .opt("lr_scale", a.lr_scale)
        .opt("max_flops", a.max_flops)
        .opt("max_steps_per_size", a.max_steps);
    if let (Some(s), Some(e)) = (a.drop_start, a.drop_end) {
        ov.opt("window", Some(json!({"kind": "fractions", "drop_start": s, "drop_end": e})));
    }
    if a.interior {
        ov.opt("window", Some(json!({"kind": "interior"})));
    }
    if let (Some(lo), Some(hi)) = (a.window_lo, a.window_hi) {
        ov.opt("window", Some(json!({"kind": "explicit", "lo": lo, "hi": hi})));
    }
    let (spec, resolved): (SweepSpec, _) = load(&a.common, Some("base_seed"), &ov)?;
    spec.validate()?;
    if a.common.dry_run {
        let per_size: Vec<Value> = spec
            .model_sizes
            .iter()
            .map(|&m| json!({"model_size": m, "steps": spec.steps_for(m), "gamma0": spec.gamma0_for(m).ok()}))
            .collect();
        return print_json(&json!({
            "command": "sweep",
            "config": resolved,
            "sizes": per_size,
            "estimated_ops": spec.estimated_ops(),
            "theory": spec.theory(),
        }));
    }
    let result = run_sweep(&spec)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    let analysis = match analyze(&spec, &result) {
        Ok(a) => Some(a),
        Err(e) => {
            eprintln!("warning: no fit: {e}");
            None
        }
    };
    let dir = out_dir(&a.out, "sweep");
    let outputs = write_sweep(&dir, &result, analysis.as_ref())?;
    RunManifest::new("sweep", resolved, result.seeds()).finish(&dir, &outputs)?;
    if let Some((_, fits)) = &analysis {
        print_json(fits)?;
    }
    if result.any_failed() {
        return Err(RunError::Diverged("more than half of the seeds diverged for some size".into()).into());
    }
    Ok(())
}

fn cmd_diagnostics(a: DiagnosticsArgs) -> Result<()> {
    let mut ov = Overrides::new(&a.common)?;
    ov.opt("alpha", a.alpha)
        .opt("beta", a.beta)
        .opt("model_size", a.model_size)
        .opt("n_seeds", a.seeds)
        .opt("base_seed", a.seed);
    let (spec, resolved): (DiagnosticsSpec, _) = load(&a.common, Some("base_seed"), &ov)?;
    if a.common.dry_run {
        return print_json(&json!({"command": "diagnostics", "config": resolved}));
    }
    let report = diagnostics_report(&spec)?;
    let body = serde_json::to_string_pretty(&report)? + "\n";
    print!("{body}");
    save_stdout_output(&a.out, "diagnostics", "diagnostics.json", &body, resolved, report.seeds.clone())
}

fn cmd_validate(a: ValidateArgs) -> Result<()> {
    if !(a.scale > 0.0 && a.scale <= 1.0) {
        return Err(RunError::config("--scale must be in (0, 1]").into());
    }
    let level = match a.level {
        LevelArg::Quick => Level::Quick,
        LevelArg::Full => Level::Full,
    };
    let opts = Options { scale: a.scale, perturb_eta: a.perturb_eta };
    let ids = a.criteria.clone().unwrap_or_else(|| level.criteria());
    let mut reports = Vec::new();
    for &id in &ids {
        let r = validate::run_criterion(id, &opts);
        eprintln!("{}", r.line());
        reports.push(r);
    }
    print!("{}", validate::table(&reports));
    if let Some(dir) = &a.out {
        io::ensure_dir(dir)?;
        let p = dir.join("validation.json");
        io::write_json(&p, &reports)?;
        let config = json!({"level": level, "scale": a.scale, "criteria": ids, "perturb_eta": a.perturb_eta});
        RunManifest::new("validate", config, Vec::new()).finish(dir, &[p])?;
    }
    let failed: Vec<String> = reports.iter().filter(|r| !r.passed()).map(|r| r.id.to_string()).collect();
    if !failed.is_empty() {
        return Err(RunError::Acceptance(format!("criteria {} failed", failed.join(", "))).into());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("warning: could not size the thread pool: {e}");
        }
    }
    let res = match cli.cmd {
        Cmd::Trajectory(a) => cmd_trajectory(a),
        Cmd::Ode(a) => cmd_ode(a),
        Cmd::Theory(a) => cmd_theory(a),
        Cmd::PhasePlane(a) => cmd_phase_plane(a),
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::Diagnostics(a) => cmd_diagnostics(a),
        Cmd::Validate(a) => cmd_validate(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
