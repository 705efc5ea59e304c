//! Phase-transition sweeps over `(δ, ρ)` and `(L, σ)` grids.
//!
//! Every trial draws its instance from a seed derived from the base seed,
//! the resolved cell parameters and the trial index, so a diagram does not
//! depend on how cells are scheduled. Completed cells are appended to a
//! JSON-lines file by a single writer; a resumed sweep skips the cells
//! already on file and ends with the same diagram as an uninterrupted one.

use crate::error::{Error, Result};
use crate::metrics::{is_success, normalized_cross_correlation, SuccessCriterion};
use crate::model::{make_instance, Dimensions};
use crate::rng::derive_seed;
use crate::solver::{solve, Mode, SolverConfig, Status};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::mpsc;

pub const DEFAULT_TRIALS: usize = 50;
/// `(δ, ρ)` cells used for `(L, σ)` diagrams unless configured otherwise.
pub const DEFAULT_LS_CELLS: [(f64, f64); 2] = [(0.5, 0.15), (0.75, 0.3)];
pub const CSV_HEADER: &str = "axis1,axis2,N,trials,successes_calibrated,successes_uncalibrated";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AxisName {
    #[serde(rename = "delta")]
    Delta,
    #[serde(rename = "rho")]
    Rho,
    #[serde(rename = "L")]
    L,
    #[serde(rename = "sigma")]
    Sigma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: AxisName,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn new(name: AxisName, values: Vec<f64>) -> Self {
        Self { name, values }
    }

    fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::param("grid", format!("axis {:?} is empty", self.name)));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("grid", format!("axis {:?} has non-finite values", self.name)));
        }
        if self.values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("grid", format!("axis {:?} must be strictly increasing", self.name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub axis1: Axis,
    pub axis2: Axis,
    pub trials_per_cell: usize,
    pub base_seed: u64,
}

impl PhaseGrid {
    pub fn validate(&self) -> Result<()> {
        self.axis1.validate()?;
        self.axis2.validate()?;
        if self.trials_per_cell == 0 {
            return Err(Error::param("trials_per_cell", "must be >= 1"));
        }
        Ok(())
    }

    /// Default `δ × ρ` grid: both in `{0.05, 0.10, …, 0.95}`.
    pub fn default_dt(base_seed: u64) -> Self {
        let v: Vec<f64> = (1..=19).map(|i| i as f64 / 20.0).collect();
        Self {
            axis1: Axis::new(AxisName::Delta, v.clone()),
            axis2: Axis::new(AxisName::Rho, v),
            trials_per_cell: DEFAULT_TRIALS,
            base_seed,
        }
    }

    /// Default `L × σ` grid: `L ∈ {1, …, 30}`, σ at 13 log-spaced points in `[10⁻², 10^0.5]`.
    pub fn default_ls(base_seed: u64) -> Self {
        Self {
            axis1: Axis::new(AxisName::L, (1..=30).map(f64::from).collect()),
            axis2: Axis::new(AxisName::Sigma, default_sigmas()),
            trials_per_cell: DEFAULT_TRIALS,
            base_seed,
        }
    }

    /// Cells in axis1-major order.
    pub fn cells(&self) -> Vec<(f64, f64)> {
        self.axis1
            .values
            .iter()
            .flat_map(|&a| self.axis2.values.iter().map(move |&b| (a, b)))
            .collect()
    }
}

pub fn default_sigmas() -> Vec<f64> {
    (0..13).map(|i| 10f64.powf(-2.0 + 2.5 * i as f64 / 12.0)).collect()
}

/// Which programs each trial solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSelection {
    Calibrated,
    Uncalibrated,
    #[default]
    Both,
}

impl ModeSelection {
    pub fn modes(self) -> &'static [Mode] {
        match self {
            ModeSelection::Calibrated => &[Mode::Calibrated],
            ModeSelection::Uncalibrated => &[Mode::Uncalibrated],
            ModeSelection::Both => &[Mode::Calibrated, Mode::Uncalibrated],
        }
    }
}

impl FromStr for ModeSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "calibrated" => Ok(Self::Calibrated),
            "uncalibrated" => Ok(Self::Uncalibrated),
            "both" => Ok(Self::Both),
            other => Err(Error::param("mode", format!("expected calibrated, uncalibrated or both, got `{other}`"))),
        }
    }
}

/// Resolved parameters of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    #[serde(flatten)]
    pub dims: Dimensions,
    pub sigma: f64,
}

impl CellParams {
    /// `m = round(δN)`, `k = round(ρm)` clamped to `[0, N]`.
    pub fn from_ratios(n: usize, delta: f64, rho: f64, l: usize, sigma: f64) -> Result<Self> {
        if !(delta.is_finite() && rho.is_finite() && delta >= 0.0 && rho >= 0.0) {
            return Err(Error::param("grid", format!("ratios must be finite and >= 0, got δ={delta} ρ={rho}")));
        }
        let m = (delta * n as f64).round() as usize;
        let k = ((rho * m as f64).round() as usize).min(n);
        Ok(Self {
            dims: Dimensions::new(n, m, k, l)?,
            sigma,
        })
    }
}

/// Seed of trial `trial_index` in a cell.
pub fn trial_seed(base_seed: u64, params: &CellParams, trial_index: usize) -> u64 {
    let d = params.dims;
    derive_seed(
        base_seed,
        &[
            b"trial",
            &(d.n as u64).to_le_bytes(),
            &(d.m as u64).to_le_bytes(),
            &(d.k as u64).to_le_bytes(),
            &(d.l as u64).to_le_bytes(),
            &params.sigma.to_bits().to_le_bytes(),
            &(trial_index as u64).to_le_bytes(),
        ],
    )
}

/// Solver and success settings shared by all trials of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrialSettings {
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub criterion: SuccessCriterion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeOutcome {
    /// Converged and above the correlation threshold.
    pub success: bool,
    pub status: Status,
    pub correlation: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub seed: u64,
    pub calibrated: Option<ModeOutcome>,
    pub uncalibrated: Option<ModeOutcome>,
}

pub fn run_trial(
    params: &CellParams,
    trial_index: usize,
    base_seed: u64,
    modes: ModeSelection,
    settings: &TrialSettings,
) -> Result<TrialOutcome> {
    let seed = trial_seed(base_seed, params, trial_index);
    let inst = make_instance(params.dims, params.sigma, seed)?;
    let mut out = TrialOutcome {
        seed,
        calibrated: None,
        uncalibrated: None,
    };
    for &mode in modes.modes() {
        let r = solve(mode, &inst.observations, &inst.m0, &settings.solver)?;
        let hit = is_success(&inst.signals.entries, &r.x_hat, &settings.criterion)?;
        let correlation = match normalized_cross_correlation(&inst.signals.entries, &r.x_hat) {
            Ok(c) => c,
            Err(_) => f64::from(u8::from(hit)),
        };
        if !r.converged() {
            log::debug!("trial {trial_index} seed {seed}: {mode:?} ended with {:?}", r.status);
        }
        let outcome = ModeOutcome {
            success: hit && r.converged(),
            status: r.status,
            correlation,
            iterations: r.iterations,
        };
        match mode {
            Mode::Calibrated => out.calibrated = Some(outcome),
            Mode::Uncalibrated => out.uncalibrated = Some(outcome),
        }
    }
    Ok(out)
}

/// Aggregated trials of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub axis1: f64,
    pub axis2: f64,
    pub params: CellParams,
    pub trials_done: usize,
    pub successes_calibrated: usize,
    pub successes_uncalibrated: usize,
    pub nonconverged_calibrated: usize,
    pub nonconverged_uncalibrated: usize,
    /// Mean solver iterations over every solve in the cell.
    pub mean_iterations: f64,
    /// One character per trial: `1` success, `0` failure, `-` not converged.
    /// Empty when the mode was not run.
    pub outcomes_calibrated: String,
    pub outcomes_uncalibrated: String,
    pub seeds: Vec<u64>,
}

impl PhaseCell {
    fn from_trials(axis1: f64, axis2: f64, params: CellParams, trials: &[TrialOutcome]) -> Self {
        let mut cell = PhaseCell {
            axis1,
            axis2,
            params,
            trials_done: trials.len(),
            successes_calibrated: 0,
            successes_uncalibrated: 0,
            nonconverged_calibrated: 0,
            nonconverged_uncalibrated: 0,
            mean_iterations: 0.0,
            outcomes_calibrated: String::new(),
            outcomes_uncalibrated: String::new(),
            seeds: trials.iter().map(|t| t.seed).collect(),
        };
        let mut iterations = 0usize;
        let mut solves = 0usize;
        for t in trials {
            for (o, successes, nonconverged, bitmap) in [
                (
                    &t.calibrated,
                    &mut cell.successes_calibrated,
                    &mut cell.nonconverged_calibrated,
                    &mut cell.outcomes_calibrated,
                ),
                (
                    &t.uncalibrated,
                    &mut cell.successes_uncalibrated,
                    &mut cell.nonconverged_uncalibrated,
                    &mut cell.outcomes_uncalibrated,
                ),
            ] {
                let Some(o) = o else { continue };
                iterations += o.iterations;
                solves += 1;
                *successes += usize::from(o.success);
                let flag = if o.status != Status::Converged {
                    *nonconverged += 1;
                    '-'
                } else if o.success {
                    '1'
                } else {
                    '0'
                };
                bitmap.push(flag);
            }
        }
        if solves > 0 {
            cell.mean_iterations = iterations as f64 / solves as f64;
        }
        cell
    }

    pub fn successes(&self, mode: Mode) -> usize {
        match mode {
            Mode::Calibrated => self.successes_calibrated,
            Mode::Uncalibrated => self.successes_uncalibrated,
        }
    }

    pub fn rate(&self, mode: Mode) -> f64 {
        self.successes(mode) as f64 / self.trials_done.max(1) as f64
    }

    fn ran(&self, mode: Mode) -> bool {
        match mode {
            Mode::Calibrated => !self.outcomes_calibrated.is_empty(),
            Mode::Uncalibrated => !self.outcomes_uncalibrated.is_empty(),
        }
    }
}

/// What a sweep varies and what it holds fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiagramKind {
    /// `δ × ρ` at fixed `L` and σ.
    Dt {
        #[serde(rename = "L")]
        l: usize,
        sigma: f64,
    },
    /// `L × σ` at fixed `(δ, ρ)`.
    Ls { delta: f64, rho: f64 },
}

/// Everything that determines a diagram; echoed into persisted output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub kind: DiagramKind,
    pub grid: PhaseGrid,
    pub modes: ModeSelection,
    pub settings: TrialSettings,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidDimensions("need N >= 1".into()));
        }
        self.grid.validate()?;
        self.settings.solver.validate()?;
        self.settings.criterion.validate()?;
        let names = (self.grid.axis1.name, self.grid.axis2.name);
        match self.kind {
            DiagramKind::Dt { l, sigma } => {
                if names != (AxisName::Delta, AxisName::Rho) {
                    return Err(Error::param("grid", "a dt diagram needs axes (delta, rho)"));
                }
                if l == 0 {
                    return Err(Error::InvalidDimensions("need L >= 1".into()));
                }
                check_sigma(sigma)?;
            }
            DiagramKind::Ls { delta, rho } => {
                if names != (AxisName::L, AxisName::Sigma) {
                    return Err(Error::param("grid", "an ls diagram needs axes (L, sigma)"));
                }
                if !(delta > 0.0 && delta <= 1.0 && rho >= 0.0 && rho.is_finite()) {
                    return Err(Error::param("cell", format!("need 0 < δ <= 1 and ρ >= 0, got ({delta}, {rho})")));
                }
                for &l in &self.grid.axis1.values {
                    if l < 1.0 || l.fract() != 0.0 {
                        return Err(Error::param("grid", format!("L values must be positive integers, got {l}")));
                    }
                }
                for &s in &self.grid.axis2.values {
                    check_sigma(s)?;
                }
            }
        }
        Ok(())
    }

    pub fn cell_params(&self, axis1: f64, axis2: f64) -> Result<CellParams> {
        match self.kind {
            DiagramKind::Dt { l, sigma } => CellParams::from_ratios(self.n, axis1, axis2, l, sigma),
            DiagramKind::Ls { delta, rho } => CellParams::from_ratios(self.n, delta, rho, axis1 as usize, axis2),
        }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::param("sigma", format!("must be finite and >= 0, got {sigma}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub axis1: f64,
    pub axis2: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub config: SweepConfig,
    /// Completed cells in grid order.
    pub cells: Vec<PhaseCell>,
    pub failed: Vec<CellFailure>,
    /// Grid cells neither completed nor failed (sweep stopped early).
    pub pending: usize,
}

impl PhaseDiagram {
    pub fn cell(&self, axis1: f64, axis2: f64) -> Option<&PhaseCell> {
        self.cells.iter().find(|c| c.axis1 == axis1 && c.axis2 == axis2)
    }

    pub fn is_complete(&self) -> bool {
        self.failed.is_empty() && self.pending == 0
    }

    /// CSV with columns `axis1,axis2,N,trials,successes_calibrated,successes_uncalibrated`.
    /// A mode that was not run leaves its column empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        let count = |c: &PhaseCell, mode| {
            if c.ran(mode) {
                c.successes(mode).to_string()
            } else {
                String::new()
            }
        };
        for c in &self.cells {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.axis1,
                c.axis2,
                c.params.dims.n,
                c.trials_done,
                count(c, Mode::Calibrated),
                count(c, Mode::Uncalibrated)
            ));
        }
        s
    }
}

/// Execution knobs that do not affect results.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the available parallelism.
    pub jobs: Option<usize>,
    /// JSON-lines file receiving one record per completed cell.
    pub jsonl: Option<PathBuf>,
    /// Keep the cells already in `jsonl` instead of starting over.
    pub resume: bool,
    /// Stop after this many newly computed cells.
    pub max_cells: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Record {
    Header(SweepConfig),
    Cell(PhaseCell),
}

fn cell_key(a: f64, b: f64) -> (u64, u64) {
    (a.to_bits(), b.to_bits())
}

/// Valid cells of a previous run with the same configuration. The file is
/// rewritten without any trailing partial line.
fn load_previous(path: &Path, config: &SweepConfig) -> Result<HashMap<(u64, u64), PhaseCell>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(l) => l?,
        None => return Ok(HashMap::new()),
    };
    match serde_json::from_str::<Record>(&header) {
        Ok(Record::Header(h)) if h == *config => {}
        Ok(Record::Header(_)) => {
            return Err(Error::Resume(format!(
                "{} was written by a sweep with a different configuration",
                path.display()
            )))
        }
        _ => return Err(Error::Resume(format!("{} does not start with a sweep header", path.display()))),
    }
    let mut cells = HashMap::new();
    for line in lines {
        let line = line?;
        match serde_json::from_str::<Record>(&line) {
            Ok(Record::Cell(c)) if c.trials_done == config.grid.trials_per_cell => {
                cells.insert(cell_key(c.axis1, c.axis2), c);
            }
            Ok(_) => {}
            Err(e) => log::warn!("{}: skipping unreadable record ({e})", path.display()),
        }
    }
    Ok(cells)
}

fn record_line(r: &Record) -> Result<String> {
    let mut s = serde_json::to_string(r)?;
    s.push('\n');
    Ok(s)
}

fn run_cell(config: &SweepConfig, axis1: f64, axis2: f64) -> Result<PhaseCell> {
    let params = config.cell_params(axis1, axis2)?;
    let trials = (0..config.grid.trials_per_cell)
        .map(|t| run_trial(&params, t, config.grid.base_seed, config.modes, &config.settings))
        .collect::<Result<Vec<_>>>()?;
    Ok(PhaseCell::from_trials(axis1, axis2, params, &trials))
}

/// Run (or resume) a sweep. Per-cell errors are collected in
/// [`PhaseDiagram::failed`]; only configuration and setup errors abort.
pub fn run_sweep(config: &SweepConfig, opts: &RunOptions) -> Result<PhaseDiagram> {
    config.validate()?;
    let jobs = opts
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from));
    if jobs == 0 {
        return Err(Error::param("jobs", "must be >= 1"));
    }

    let mut done = HashMap::new();
    let mut writer = None;
    if let Some(path) = &opts.jsonl {
        if opts.resume && path.exists() {
            done = load_previous(path, config)?;
        }
        let mut f = OpenOptions::new().create(true).write(true).truncate(true).open(path)?;
        f.write_all(record_line(&Record::Header(config.clone()))?.as_bytes())?;
        for (a, b) in config.grid.cells() {
            if let Some(c) = done.get(&cell_key(a, b)) {
                f.write_all(record_line(&Record::Cell(c.clone()))?.as_bytes())?;
            }
        }
        f.flush()?;
        writer = Some(f);
    }

    let mut todo: Vec<(f64, f64)> = config
        .grid
        .cells()
        .into_iter()
        .filter(|&(a, b)| !done.contains_key(&cell_key(a, b)))
        .collect();
    let skipped = match opts.max_cells {
        Some(limit) if limit < todo.len() => todo.split_off(limit).len(),
        _ => 0,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::param("jobs", e.to_string()))?;
    let (tx, rx) = mpsc::channel();
    let mut fresh: HashMap<(u64, u64), PhaseCell> = HashMap::new();
    let mut failed = Vec::new();
    pool.in_place_scope(|scope| {
        let todo = &todo;
        scope.spawn(move |_| {
            todo.par_iter().for_each_with(tx, |tx, &(a, b)| {
                let _ = tx.send((a, b, run_cell(config, a, b)));
            });
        });
        // single writer: the calling thread
        for (a, b, result) in rx {
            let result = result.and_then(|cell| {
                if let Some(f) = writer.as_mut() {
                    f.write_all(record_line(&Record::Cell(cell.clone()))?.as_bytes())?;
                    f.flush()?;
                }
                Ok(cell)
            });
            match result {
                Ok(cell) => {
                    log::info!(
                        "cell ({a}, {b}): calibrated {}/{} uncalibrated {}/{}",
                        cell.successes_calibrated,
                        cell.trials_done,
                        cell.successes_uncalibrated,
                        cell.trials_done
                    );
                    fresh.insert(cell_key(a, b), cell);
                }
                Err(e) => {
                    log::error!("cell ({a}, {b}) failed: {e}");
                    failed.push(CellFailure {
                        axis1: a,
                        axis2: b,
                        error: e.to_string(),
                    });
                }
            }
        }
    });

    let mut cells = Vec::new();
    for (a, b) in config.grid.cells() {
        let key = cell_key(a, b);
        if let Some(c) = done.remove(&key).or_else(|| fresh.remove(&key)) {
            cells.push(c);
        }
    }
    let order = |f: &CellFailure| {
        config
            .grid
            .cells()
            .iter()
            .position(|&(a, b)| a == f.axis1 && b == f.axis2)
    };
    failed.sort_by_key(order);
    Ok(PhaseDiagram {
        config: config.clone(),
        cells,
        failed,
        pending: skipped,
    })
}

/// `δ × ρ` diagram at `N`, `L` and σ.
pub fn run_dt_diagram(
    grid: &PhaseGrid,
    n: usize,
    l: usize,
    sigma: f64,
    modes: ModeSelection,
    settings: TrialSettings,
    opts: &RunOptions,
) -> Result<PhaseDiagram> {
    let config = SweepConfig {
        n,
        kind: DiagramKind::Dt { l, sigma },
        grid: grid.clone(),
        modes,
        settings,
    };
    run_sweep(&config, opts)
}

/// `L × σ` diagram at `N` and a fixed `(δ, ρ)`.
pub fn run_ls_diagram(
    grid: &PhaseGrid,
    delta: f64,
    rho: f64,
    n: usize,
    modes: ModeSelection,
    settings: TrialSettings,
    opts: &RunOptions,
) -> Result<PhaseDiagram> {
    let config = SweepConfig {
        n,
        kind: DiagramKind::Ls { delta, rho },
        grid: grid.clone(),
        modes,
        settings,
    };
    run_sweep(&config, opts)
}

/// Transition of the success rate along one grid line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "transition", rename_all = "snake_case")]
pub enum LineTransition {
    /// The rate never crosses 50%.
    None,
    Crossing {
        /// Interpolated position of the first 50% crossing.
        location: f64,
        /// Distance between the interpolated 10% and 90% crossings around it,
        /// if both occur.
        width: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSummary {
    /// Value of the other axis on this line.
    pub fixed: f64,
    #[serde(flatten)]
    pub transition: LineTransition,
}

/// First position where the piecewise-linear rate curve reaches `level`
/// moving up (`rising`) or down.
fn crossing(pos: &[f64], rate: &[f64], level: f64, rising: bool) -> Option<f64> {
    let above = |r: f64| if rising { r >= level } else { r <= level };
    if above(rate[0]) {
        return None;
    }
    for i in 1..rate.len() {
        if above(rate[i]) {
            let (r0, r1) = (rate[i - 1], rate[i]);
            let t = (level - r0) / (r1 - r0);
            return Some(pos[i - 1] + t * (pos[i] - pos[i - 1]));
        }
    }
    None
}

/// Rate along a line of positions; `None` when there is no 50% crossing.
pub fn line_transition(pos: &[f64], rate: &[f64]) -> LineTransition {
    if pos.len() < 2 || pos.len() != rate.len() {
        return LineTransition::None;
    }
    let rising = rate[rate.len() - 1] >= rate[0];
    let (lo, hi) = if rising { (0.1, 0.9) } else { (0.9, 0.1) };
    let Some(location) = crossing(pos, rate, 0.5, rising) else {
        return LineTransition::None;
    };
    let width = match (crossing(pos, rate, lo, rising), crossing(pos, rate, hi, rising)) {
        (Some(a), Some(b)) => Some((b - a).abs()),
        // the line starts beyond the first level
        (None, Some(b)) => Some((b - pos[0]).abs()),
        _ => None,
    };
    LineTransition::Crossing { location, width }
}

/// Transition location and width for each grid line running along `axis`.
pub fn sharpness_summary(diagram: &PhaseDiagram, axis: AxisName, mode: Mode) -> Result<Vec<LineSummary>> {
    let grid = &diagram.config.grid;
    let (along, across, along_first) = if axis == grid.axis1.name {
        (&grid.axis1, &grid.axis2, true)
    } else if axis == grid.axis2.name {
        (&grid.axis2, &grid.axis1, false)
    } else {
        return Err(Error::param("axis", format!("{axis:?} is not an axis of this diagram")));
    };
    let mut out = Vec::new();
    for &fixed in &across.values {
        let mut pos = Vec::new();
        let mut rate = Vec::new();
        for &v in &along.values {
            let (a, b) = if along_first { (v, fixed) } else { (fixed, v) };
            if let Some(c) = diagram.cell(a, b) {
                pos.push(v);
                rate.push(c.rate(mode));
            }
        }
        out.push(LineSummary {
            fixed,
            transition: line_transition(&pos, &rate),
        });
    }
    Ok(out)
}

/// Write the diagram CSV to `path` and the resolved configuration next to it
/// as `<path>.config.json`.
pub fn write_csv(diagram: &PhaseDiagram, path: &Path) -> Result<()> {
    fs::write(path, diagram.to_csv())?;
    let mut config_path = path.as_os_str().to_owned();
    config_path.push(".config.json");
    fs::write(PathBuf::from(config_path), serde_json::to_string_pretty(&diagram.config)?)?;
    Ok(())
}

/// Check that `src` is a two-column numeric CSV (an optional non-numeric
/// header line is allowed) and copy it byte for byte to `dest`.
pub fn pass_through_overlay(src: &Path, dest: &Path) -> Result<()> {
    let bytes = fs::read(src)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::Parse(format!("overlay is not UTF-8: {e}")))?;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let numeric = fields.len() == 2 && fields.iter().all(|f| f.parse::<f64>().is_ok());
        if !numeric && !(i == 0 && fields.len() == 2) {
            return Err(Error::Parse(format!("overlay line {}: expected two numeric columns, got `{line}`", i + 1)));
        }
    }
    fs::write(dest, &bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grids() {
        let dt = PhaseGrid::default_dt(1);
        assert_eq!(dt.axis1.values.len(), 19);
        assert_eq!(dt.axis1.values[0], 0.05);
        assert_eq!(dt.axis1.values[18], 0.95);
        dt.validate().unwrap();
        let ls = PhaseGrid::default_ls(1);
        assert_eq!(ls.axis1.values, (1..=30).map(f64::from).collect::<Vec<_>>());
        let s = &ls.axis2.values;
        assert_eq!(s.len(), 13);
        assert!((s[0] - 0.01).abs() < 1e-15);
        assert!((s[12] - 10f64.sqrt()).abs() < 1e-12);
        ls.validate().unwrap();
    }

    #[test]
    fn grid_validation() {
        let mut g = PhaseGrid::default_dt(1);
        g.axis1.values = vec![0.5, 0.5];
        assert!(g.validate().is_err());
        g.axis1.values = vec![];
        assert!(g.validate().is_err());
        g = PhaseGrid::default_dt(1);
        g.trials_per_cell = 0;
        assert!(g.validate().is_err());
    }

    #[test]
    fn cell_rounding() {
        let p = CellParams::from_ratios(100, 0.5, 0.15, 21, 1.0).unwrap();
        assert_eq!((p.dims.m, p.dims.k), (50, 8));
        let p = CellParams::from_ratios(100, 0.75, 0.3, 21, 1.0).unwrap();
        assert_eq!((p.dims.m, p.dims.k), (75, 23));
        let p = CellParams::from_ratios(10, 1.0, 5.0, 1, 0.0).unwrap();
        assert_eq!(p.dims.k, 10);
        assert!(CellParams::from_ratios(100, 0.001, 0.1, 1, 0.0).is_err());
    }

    #[test]
    fn trial_seeds_depend_on_every_input() {
        let p = CellParams::from_ratios(100, 0.5, 0.1, 21, 0.1).unwrap();
        let base = trial_seed(7, &p, 0);
        assert_eq!(base, trial_seed(7, &p, 0));
        assert_ne!(base, trial_seed(8, &p, 0));
        assert_ne!(base, trial_seed(7, &p, 1));
        let q = CellParams { sigma: 0.2, ..p };
        assert_ne!(base, trial_seed(7, &q, 0));
    }

    #[test]
    fn crossing_interpolation() {
        let t = line_transition(&[1.0, 2.0, 3.0, 4.0], &[0.0, 0.0, 1.0, 1.0]);
        match t {
            LineTransition::Crossing { location, width } => {
                assert!((location - 2.5).abs() < 1e-12);
                assert!(width.unwrap() <= 1.0);
            }
            LineTransition::None => panic!("expected a crossing"),
        }
        assert_eq!(line_transition(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]), LineTransition::None);
        assert_eq!(line_transition(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]), LineTransition::None);
        match line_transition(&[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0, 0.0, 0.0]) {
            LineTransition::Crossing { location, .. } => assert!((location - 2.5).abs() < 1e-12),
            LineTransition::None => panic!("expected a falling crossing"),
        }
    }

    #[test]
    fn mode_selection_parses() {
        assert_eq!("both".parse::<ModeSelection>().unwrap(), ModeSelection::Both);
        assert!("all".parse::<ModeSelection>().is_err());
    }
}
