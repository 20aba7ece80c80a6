//! `filtermaps` command line: `run`, `sweep` and `verify`.
//!
//! Exit codes: 0 success, 1 numerical or property failure, 2 configuration
//! or environment error (including unknown flags).

mod config;
pub mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

pub use config::ExperimentConfig;

use crate::error::{Error, Result};
use crate::filters::sweep::{sweep, SweepReport};
use crate::filters::{generate_data, run_filter, FilterKind, FilterTrajectory};
use crate::model::ModelSpec;
use crate::operators::{OperatorWorkspace, Resolution};
use crate::verify::{self, Suite};
use output::Artifacts;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

const DEFAULT_OUT: &str = "filtermaps-out";

#[derive(Debug, Parser)]
#[command(name = "filtermaps", version, about = "Measure-map nonlinear filtering experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run filters on one synthetic data realization.
    Run(ExperimentArgs),
    /// Sweep the near-Gaussianity family over the configured deltas.
    Sweep(ExperimentArgs),
    /// Run the property suites and report every check.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Experiment config (TOML); built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for data and particles; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// State grid points per axis; overrides the config.
    #[arg(long)]
    pub resolution: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// gaussian, density, operators, filters or all.
    #[arg(long, default_value = "all")]
    pub suite: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write verify.csv here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parse arguments and run; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Verify(a) => cmd_verify(&a),
    }
}

fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_) | Error::InvalidModel(_) | Error::UnknownFamily(_) | Error::Io(_)
    )
}

fn error_record(e: &Error) -> serde_json::Value {
    let (step, inner) = match e {
        Error::Step { step, source } => (Some(*step), source.as_ref()),
        other => (None, other),
    };
    json!({
        "error": if is_config_error(inner) { "configuration" } else { "numerical" },
        "step": step,
        "message": inner.to_string(),
    })
}

fn report_failure(e: &Error, out: Option<&Path>) -> i32 {
    let record = error_record(e);
    eprintln!("{record}");
    if let Some(dir) = out {
        let _ = std::fs::write(dir.join("error.json"), format!("{record:#}\n"));
    }
    if is_config_error(e) {
        EXIT_CONFIG
    } else {
        EXIT_FAILURE
    }
}

/// Load and apply command-line overrides.
fn load_config(a: &ExperimentArgs) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(r) = a.resolution {
        cfg.resolution = Some(r);
    }
    let out = a
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    Ok((cfg, out))
}

fn resolution(cfg: &ExperimentConfig, d: usize) -> Resolution {
    cfg.resolution
        .map_or_else(|| Resolution::default_for(d), |p| Resolution::from_points(d, p))
}

fn unix_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis())
}

/// Everything a `run` produces, before anything touches the disk.
pub struct RunOutcome {
    pub data: FilterTrajectory,
    pub runs: Vec<FilterTrajectory>,
    pub workspace: Option<OperatorWorkspace>,
    pub artifacts: Artifacts,
}

/// Check a run config without computing anything.
pub fn validate_run(cfg: &ExperimentConfig) -> Result<(ModelSpec, Vec<FilterKind>)> {
    let model = cfg.resolve_model()?;
    let kinds = cfg.filter_kinds()?;
    if kinds.iter().any(|k| k.is_grid()) && (model.d > 2 || model.k != 1) {
        return Err(Error::Config(format!(
            "grid filters need d <= 2 and K = 1 (model has d = {}, K = {})",
            model.d, model.k
        )));
    }
    if kinds.contains(&FilterKind::Kalman) && model.linear_matrices().is_none() {
        return Err(Error::Config("kind 'kalman' needs linear Psi and H".into()));
    }
    if let Some(r) = cfg.resolution {
        if r < crate::density::MIN_POINTS {
            return Err(Error::Config(format!(
                "resolution {r} below {}",
                crate::density::MIN_POINTS
            )));
        }
    }
    Ok((model, kinds))
}

/// Run the configured filters and render all artifacts in memory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let started = unix_ms();
    let clock = Instant::now();
    let (model, kinds) = validate_run(cfg)?;
    let data = generate_data(&model, cfg.steps, cfg.seed)?;
    let res = resolution(cfg, model.d);
    let workspace = if kinds.iter().any(|k| k.is_grid()) {
        Some(OperatorWorkspace::for_problem(&model, &data.data, res)?)
    } else {
        None
    };
    let timed = kinds
        .par_iter()
        .map(|&k| {
            let t = Instant::now();
            let run = run_filter(k, &model, workspace.as_ref(), &data, cfg.seed)?;
            Ok((run, t.elapsed().as_secs_f64() * 1e3))
        })
        .collect::<Result<Vec<_>>>()?;
    let (runs, times): (Vec<_>, Vec<_>) = timed.into_iter().unzip();

    let grid = workspace.as_ref().map(OperatorWorkspace::state_grid_ref);
    let mut artifacts = Artifacts::default();
    artifacts.add("data.csv", output::data_csv(&data, model.d, model.k).into_bytes());
    artifacts.add("trajectory.csv", output::trajectory_csv(&runs, grid, model.d)?.into_bytes());
    artifacts.add("summary.csv", output::summary_csv(&runs, grid)?.into_bytes());
    artifacts.add("model.toml", model.to_toml().into_bytes());
    if cfg.write_densities {
        let grid = grid.ok_or_else(|| Error::Config("densities need a grid workspace".into()))?;
        output::densities(&runs, grid, &mut artifacts)?;
    }
    let per_kind: serde_json::Map<String, serde_json::Value> = kinds
        .iter()
        .zip(&times)
        .map(|(k, t)| (k.to_string(), json!(t)))
        .collect();
    let meta = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "command": "run",
        "seed": cfg.seed,
        "steps": cfg.steps,
        "kinds": kinds.iter().map(ToString::to_string).collect::<Vec<_>>(),
        "resolution": { "state": res.state, "data": res.data },
        "model_fingerprint": format!("{:016x}", model.fingerprint()),
        "kappa_y": data.kappa_y,
        "lipschitz_p": model.lipschitz_p(),
        "lipschitz_q": model.lipschitz_q(),
        "started_unix_ms": started,
        "timings_ms": { "total": clock.elapsed().as_secs_f64() * 1e3, "per_kind": per_kind },
    });
    artifacts.add("metadata.json", format!("{meta:#}\n").into_bytes());
    Ok(RunOutcome {
        data,
        runs,
        workspace,
        artifacts,
    })
}

pub fn cmd_run(a: &ExperimentArgs) -> i32 {
    let (cfg, out) = match load_config(a).and_then(|(cfg, out)| {
        validate_run(&cfg)?;
        Ok((cfg, out))
    }) {
        Ok(v) => v,
        Err(e) => return report_failure(&e, None),
    };
    if let Err(e) = output::prepare_out_dir(&out) {
        return report_failure(&e, None);
    }
    let outcome = match run_experiment(&cfg) {
        Ok(o) => o,
        Err(e) => return report_failure(&e, Some(&out)),
    };
    if let Err(e) = outcome.artifacts.write_all(&out) {
        return report_failure(&e, None);
    }
    println!("wrote {} files to {}", outcome.artifacts.names().count(), out.display());
    EXIT_OK
}

/// Sweep configs use the built-in family, so a model may not be given.
pub fn validate_sweep(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.deltas.is_empty() {
        return Err(Error::Config("sweep needs a nonempty 'deltas' list".into()));
    }
    if !cfg.deltas.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Config("'deltas' must be strictly increasing".into()));
    }
    if cfg.model.is_some() || cfg.model_file.is_some() {
        return Err(Error::Config("sweep uses the built-in near-Gaussianity family; drop the model".into()));
    }
    Ok(())
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<(SweepReport, Artifacts)> {
    validate_sweep(cfg)?;
    let started = unix_ms();
    let clock = Instant::now();
    let res = resolution(cfg, 1);
    let report = sweep(&cfg.deltas, cfg.steps, cfg.seed, res)?;
    let mut artifacts = Artifacts::default();
    artifacts.add("sweep.csv", output::sweep_csv(&report).into_bytes());
    artifacts.add("sweep_checks.csv", output::sweep_checks_csv(&report).into_bytes());
    let meta = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "command": "sweep",
        "seed": cfg.seed,
        "steps": cfg.steps,
        "deltas": cfg.deltas,
        "resolution": { "state": res.state, "data": res.data },
        "started_unix_ms": started,
        "timings_ms": { "total": clock.elapsed().as_secs_f64() * 1e3 },
    });
    artifacts.add("metadata.json", format!("{meta:#}\n").into_bytes());
    Ok((report, artifacts))
}

pub fn cmd_sweep(a: &ExperimentArgs) -> i32 {
    let (cfg, out) = match load_config(a).and_then(|(cfg, out)| {
        validate_sweep(&cfg)?;
        Ok((cfg, out))
    }) {
        Ok(v) => v,
        Err(e) => return report_failure(&e, None),
    };
    if let Err(e) = output::prepare_out_dir(&out) {
        return report_failure(&e, None);
    }
    let (report, artifacts) = match run_sweep(&cfg) {
        Ok(v) => v,
        Err(e) => return report_failure(&e, Some(&out)),
    };
    if let Err(e) = artifacts.write_all(&out) {
        return report_failure(&e, None);
    }
    println!("delta        eps          err_enkf     err_gpf");
    for p in &report.points {
        println!("{:<12.4} {:<12.4e} {:<12.4e} {:.4e}", p.delta, p.eps, p.err_enkf, p.err_gpf);
    }
    println!(
        "monotone in eps: enkf {} gpf {}; max err/eps: enkf {:.4} gpf {:.4}",
        report.monotone_enkf, report.monotone_gpf, report.max_ratio_enkf, report.max_ratio_gpf
    );
    if report.monotone_enkf && report.monotone_gpf {
        EXIT_OK
    } else {
        EXIT_FAILURE
    }
}

pub fn cmd_verify(a: &VerifyArgs) -> i32 {
    let suite: Suite = match a.suite.parse() {
        Ok(s) => s,
        Err(e) => return report_failure(&e, None),
    };
    if let Some(out) = &a.out {
        if let Err(e) = output::prepare_out_dir(out) {
            return report_failure(&e, None);
        }
    }
    let checks = match verify::run_suite(suite, a.seed) {
        Ok(c) => c,
        Err(e) => return report_failure(&e, a.out.as_deref()),
    };
    print!("{}", verify::format_report(&checks));
    if let Some(out) = &a.out {
        let mut bytes = Vec::new();
        if let Err(e) = verify::write_csv(&checks, &mut bytes).and_then(|_| {
            std::fs::write(out.join("verify.csv"), bytes).map_err(Error::from)
        }) {
            return report_failure(&e, None);
        }
    }
    if verify::all_passed(&checks) {
        EXIT_OK
    } else {
        EXIT_FAILURE
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failures_map_to_exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let step = Error::Coverage("lost mass".into()).at_step(3);
        assert_eq!(report_failure(&step, Some(dir.path())), EXIT_FAILURE);
        let record: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("error.json")).unwrap()).unwrap();
        assert_eq!(record["error"], "numerical");
        assert_eq!(record["step"], 3);
        assert_eq!(report_failure(&Error::Config("bad".into()), None), EXIT_CONFIG);
    }

    #[test]
    fn sweep_rejects_models_and_empty_deltas() {
        assert!(validate_sweep(&ExperimentConfig::default()).is_err());
        let cfg = ExperimentConfig {
            deltas: vec![0.1],
            model: Some(ModelSpec::default_bounded().to_config()),
            ..Default::default()
        };
        assert!(validate_sweep(&cfg).is_err());
    }
}
