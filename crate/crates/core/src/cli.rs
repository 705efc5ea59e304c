//! Command-line front end: `gen`, `solve` and `phase`.
//!
//! Settings resolve as flags, then the JSON file given by `--config`, then
//! defaults. The seed additionally falls back to `BLINDCAL_SEED` before its
//! default. Exit codes: 0 success, 1 compute failure, 2 usage or I/O error.

use crate::error::Error;
use crate::experiment::{
    self, Axis, DiagramKind, ModeSelection, PhaseGrid, RunOptions, SweepConfig, TrialSettings,
    DEFAULT_LS_CELLS, DEFAULT_TRIALS,
};
use crate::metrics::{is_success, normalized_cross_correlation, SuccessCriterion};
use crate::model::{decalibration_db, make_instance, Dimensions, MeasurementMatrix, ProblemInstance};
use crate::matio;
use crate::solver::{solve, Mode, SolveResult, SolverConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const SEED_ENV: &str = "BLINDCAL_SEED";

#[derive(Debug, Parser)]
#[command(name = "blindcal", version, about = "Blind calibration of compressed sensing with unknown gains")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a random problem instance.
    Gen(GenArgs),
    /// Solve an instance in calibrated and/or uncalibrated mode.
    Solve(SolveArgs),
    /// Run a phase-transition sweep.
    Phase(PhaseArgs),
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// JSON file with default settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base seed (falls back to the config file, then BLINDCAL_SEED, then 0).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long = "N")]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long = "L")]
    pub l: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Output instance file.
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    Calibrated,
    Uncalibrated,
    Both,
}

impl From<ModeArg> for ModeSelection {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Calibrated => ModeSelection::Calibrated,
            ModeArg::Uncalibrated => ModeSelection::Uncalibrated,
            ModeArg::Both => ModeSelection::Both,
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Instance file written by `gen`, or a JSON object with `m0` and `observations`.
    pub instance: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Result file.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindArg {
    Dt,
    Ls,
}

#[derive(Debug, Args)]
pub struct PhaseArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    #[arg(long = "N")]
    pub n: Option<usize>,
    /// Signals per instance (dt diagrams).
    #[arg(long = "L")]
    pub l: Option<usize>,
    /// Decalibration amplitude (dt diagrams).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Fixed m/N (ls diagrams).
    #[arg(long)]
    pub delta: Option<f64>,
    /// Fixed k/m (ls diagrams).
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// `AxB`: A values of the first axis and B of the second, evenly picked from the defaults.
    #[arg(long)]
    pub grid: Option<String>,
    /// Explicit first-axis values, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub axis1: Option<Vec<f64>>,
    /// Explicit second-axis values, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub axis2: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Keep cells already recorded in `<out>.jsonl`.
    #[arg(long)]
    pub resume: bool,
    /// Two-column (δ, ρ) CSV copied verbatim to `<out>.overlay.csv`.
    #[arg(long)]
    pub overlay: Option<PathBuf>,
    /// Diagram CSV; cells go to `<out>.jsonl`, the configuration to `<out>.config.json`.
    #[arg(short, long, default_value = "phase.csv")]
    pub out: PathBuf,
    /// Stop after this many new cells.
    #[arg(long, hide = true)]
    pub max_cells: Option<usize>,
}

/// Contents of a `--config` file; every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub k: Option<usize>,
    #[serde(rename = "L")]
    pub l: Option<usize>,
    pub sigma: Option<f64>,
    pub seed: Option<u64>,
    pub mode: Option<ModeArg>,
    pub kind: Option<KindArg>,
    pub delta: Option<f64>,
    pub rho: Option<f64>,
    pub trials: Option<usize>,
    pub grid: Option<String>,
    pub axis1: Option<Vec<f64>>,
    pub axis2: Option<Vec<f64>>,
    pub jobs: Option<usize>,
    pub solver: Option<SolverConfig>,
    pub criterion: Option<SuccessCriterion>,
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn compute(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io(_)
            | Error::Json(_)
            | Error::Parse(_)
            | Error::Resume(_)
            | Error::InvalidDimensions(_)
            | Error::InvalidParameter { .. }
            | Error::ShapeMismatch { .. } => 2,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn load_config(path: Option<&Path>) -> CliResult<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> CliResult<u64> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|e| CliError::usage(format!("{SEED_ENV}=`{v}`: {e}"))),
        Err(_) => Ok(0),
    }
}

fn required<T>(flag: Option<T>, file: Option<T>, name: &str) -> CliResult<T> {
    flag.or(file)
        .ok_or_else(|| CliError::usage(format!("missing `{name}` (flag or config file)")))
}

/// Write `contents` to `path` via a temporary sibling so a failure leaves no partial file.
fn write_atomic(path: &Path, contents: &str) -> CliResult<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let io = |e: std::io::Error| CliError::usage(format!("{}: {e}", path.display()));
    fs::write(&tmp, contents).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(a, stdout),
        Command::Solve(a) => cmd_solve(a, stdout),
        Command::Phase(a) => cmd_phase(a, stdout),
    }
}

fn say(stdout: &mut dyn Write, line: String) -> CliResult<()> {
    writeln!(stdout, "{line}").map_err(|e| CliError::usage(format!("stdout: {e}")))
}

pub fn cmd_gen(a: GenArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let file = load_config(a.common.config.as_deref())?;
    let dims = Dimensions::new(
        required(a.n, file.n, "N")?,
        required(a.m, file.m, "m")?,
        required(a.k, file.k, "k")?,
        required(a.l, file.l, "L")?,
    )?;
    let sigma = a.sigma.or(file.sigma).unwrap_or(0.0);
    let seed = resolve_seed(a.common.seed, file.seed)?;
    let inst = make_instance(dims, sigma, seed)?;
    write_atomic(&a.out, &inst.to_json()?)?;
    say(
        stdout,
        format!(
            "wrote {} (N={} m={} k={} L={} sigma={} seed={}): decalibration ±{:.1} dB",
            a.out.display(),
            dims.n,
            dims.m,
            dims.k,
            dims.l,
            sigma,
            seed,
            decalibration_db(sigma)
        ),
    )
}

#[derive(Debug, Deserialize)]
struct MeasurementsOnly {
    #[serde(with = "matio::text")]
    m0: DMatrix<f64>,
    #[serde(with = "matio::text")]
    observations: DMatrix<f64>,
}

/// Observations, measurement matrix and the planted signals when known.
fn read_problem(path: &Path) -> CliResult<(DMatrix<f64>, MeasurementMatrix, Option<DMatrix<f64>>)> {
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    if let Ok(inst) = ProblemInstance::from_json(&text) {
        return Ok((inst.observations, inst.m0, Some(inst.signals.entries)));
    }
    let raw: MeasurementsOnly =
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    Ok((raw.observations, MeasurementMatrix::new(raw.m0)?, None))
}

#[derive(Debug, Serialize)]
struct SolveRunConfig {
    instance: PathBuf,
    mode: ModeSelection,
    solver: SolverConfig,
    criterion: SuccessCriterion,
}

#[derive(Debug, Serialize)]
struct ModeReport {
    success: Option<bool>,
    correlation: Option<f64>,
    #[serde(flatten)]
    result: SolveResult,
}

#[derive(Debug, Serialize)]
struct SolveReport {
    config: SolveRunConfig,
    results: Vec<ModeReport>,
}

pub fn cmd_solve(a: SolveArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let file = load_config(a.common.config.as_deref())?;
    let modes: ModeSelection = a.mode.or(file.mode).unwrap_or(ModeArg::Both).into();
    let solver = file.solver.unwrap_or_default();
    let criterion = file.criterion.unwrap_or_default();
    solver.validate()?;
    criterion.validate()?;
    let (y, m0, planted) = read_problem(&a.instance)?;

    let mut results = Vec::new();
    for &mode in modes.modes() {
        let r = solve(mode, &y, &m0, &solver)?;
        let (success, correlation) = match &planted {
            Some(x0) => (
                Some(r.converged() && is_success(x0, &r.x_hat, &criterion)?),
                normalized_cross_correlation(x0, &r.x_hat).ok(),
            ),
            None => (None, None),
        };
        let label = match mode {
            Mode::Calibrated => "calibrated",
            Mode::Uncalibrated => "uncalibrated",
        };
        let mut line = format!("{label}: status={:?} iterations={} objective={:.6}", r.status, r.iterations, r.objective);
        if let Some(s) = success {
            line += &format!(" success={s}");
        }
        if let Some(c) = correlation {
            line += &format!(" correlation={c:.6}");
        }
        say(stdout, line)?;
        results.push(ModeReport {
            success,
            correlation,
            result: r,
        });
    }
    let failed = results.iter().any(|r| !r.result.converged());
    if let Some(out) = &a.out {
        let report = SolveReport {
            config: SolveRunConfig {
                instance: a.instance.clone(),
                mode: modes,
                solver,
                criterion,
            },
            results,
        };
        write_atomic(out, &serde_json::to_string_pretty(&report).map_err(Error::from)?)?;
    }
    if failed {
        return Err(CliError::compute("solver did not converge"));
    }
    Ok(())
}

fn parse_grid(s: &str) -> CliResult<(usize, usize)> {
    let bad = || CliError::usage(format!("--grid expects AxB with A, B >= 1, got `{s}`"));
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim().parse().map_err(|_| bad())?;
    if a == 0 || b == 0 {
        return Err(bad());
    }
    Ok((a, b))
}

/// `count` values picked evenly from `values`; a single pick is the middle one.
pub fn pick_evenly(values: &[f64], count: usize) -> Vec<f64> {
    if count >= values.len() {
        return values.to_vec();
    }
    if count == 1 {
        return vec![values[(values.len() - 1) / 2]];
    }
    let last = (values.len() - 1) as f64;
    (0..count)
        .map(|i| values[(i as f64 * last / (count - 1) as f64).round() as usize])
        .collect()
}

/// Resolve the sweep configuration of a `phase` invocation.
pub fn phase_config(a: &PhaseArgs, file: &FileConfig) -> CliResult<SweepConfig> {
    let kind = a.kind.or(file.kind).unwrap_or(KindArg::Dt);
    let seed = resolve_seed(a.common.seed, file.seed)?;
    let n = a.n.or(file.n).unwrap_or(100);
    let mut grid = match kind {
        KindArg::Dt => PhaseGrid::default_dt(seed),
        KindArg::Ls => PhaseGrid::default_ls(seed),
    };
    grid.trials_per_cell = a.trials.or(file.trials).unwrap_or(DEFAULT_TRIALS);
    if let Some(g) = a.grid.as_ref().or(file.grid.as_ref()) {
        let (c1, c2) = parse_grid(g)?;
        grid.axis1.values = pick_evenly(&grid.axis1.values, c1);
        grid.axis2.values = pick_evenly(&grid.axis2.values, c2);
    }
    if let Some(v) = a.axis1.clone().or(file.axis1.clone()) {
        grid.axis1 = Axis::new(grid.axis1.name, v);
    }
    if let Some(v) = a.axis2.clone().or(file.axis2.clone()) {
        grid.axis2 = Axis::new(grid.axis2.name, v);
    }
    let kind = match kind {
        KindArg::Dt => DiagramKind::Dt {
            l: a.l.or(file.l).unwrap_or(21),
            sigma: a.sigma.or(file.sigma).unwrap_or(0.0),
        },
        KindArg::Ls => DiagramKind::Ls {
            delta: a.delta.or(file.delta).unwrap_or(DEFAULT_LS_CELLS[0].0),
            rho: a.rho.or(file.rho).unwrap_or(DEFAULT_LS_CELLS[0].1),
        },
    };
    let config = SweepConfig {
        n,
        kind,
        grid,
        modes: a.mode.or(file.mode).unwrap_or(ModeArg::Both).into(),
        settings: TrialSettings {
            solver: file.solver.unwrap_or_default(),
            criterion: file.criterion.unwrap_or_default(),
        },
    };
    config.validate()?;
    Ok(config)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn cmd_phase(a: PhaseArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let file = load_config(a.common.config.as_deref())?;
    let config = phase_config(&a, &file)?;
    let jobs = a.jobs.or(file.jobs);
    if jobs == Some(0) {
        return Err(CliError::usage("--jobs must be >= 1"));
    }
    if let Some(overlay) = &a.overlay {
        experiment::pass_through_overlay(overlay, &sibling(&a.out, ".overlay.csv"))?;
    }
    let opts = RunOptions {
        jobs,
        jsonl: Some(sibling(&a.out, ".jsonl")),
        resume: a.resume,
        max_cells: a.max_cells,
    };
    let diagram = experiment::run_sweep(&config, &opts)?;
    experiment::write_csv(&diagram, &a.out)?;
    say(
        stdout,
        format!(
            "wrote {} ({} cells, {} failed, {} pending)",
            a.out.display(),
            diagram.cells.len(),
            diagram.failed.len(),
            diagram.pending
        ),
    )?;
    if !diagram.failed.is_empty() {
        let mut msg = format!("{} cells failed:", diagram.failed.len());
        for f in &diagram.failed {
            msg += &format!("\n  ({}, {}): {}", f.axis1, f.axis2, f.error);
        }
        return Err(CliError::compute(msg));
    }
    Ok(())
}
