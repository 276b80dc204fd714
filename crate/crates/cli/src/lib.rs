//! Command-line orchestration for `ftl2lwr`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ftl2lwr::config::{ConfigError, Mode, SimConfig};
use ftl2lwr::euler::{landing_lambda, run_discrete_guarded, CflGuard};
use ftl2lwr::invariants::{check_states, collect_violations, passes, tolerance_for, Excess, RunKind, Tolerances};
use ftl2lwr::io::{density_csv, grid_csv, run_csv, trajectory_csv, violations_json, write_atomic};
use ftl2lwr::ode::{integrate_recorded, LagrangianState, Stride};
use ftl2lwr::transform::place_vehicles;
use ftl2lwr::{convergence_study, eulerian_density, FtlError};

pub const THREADS_VAR: &str = "FTL2LWR_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ftl2lwr", version, about = "Follow-the-Leader traffic as a scheme for the LWR equation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation and write trajectory, density and grid tables.
    Simulate(CommonArgs),
    /// Run the refinement ladder against the reference solution.
    Converge(CommonArgs),
    /// Run every invariant suite on one simulation.
    Validate(CommonArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Ode,
    Euler,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON configuration file.
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Embedded configuration: figure12, riemann-rarefaction, riemann-shock, constant.
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,
    /// Output directory (overrides the config).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Time integration (overrides the config).
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Disable the CFL guard. Test use only.
    #[arg(long = "unsafe")]
    pub unsafe_cfl: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot read config {path}: {source}")]
    ReadConfig { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Refused(FtlError),
    #[error("numerical failure: {0}")]
    Numerical(FtlError),
    #[error("{count} invariant violation(s)")]
    Invariant { count: usize },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{THREADS_VAR} must be a positive integer, got {0:?}")]
    Threads(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::ReadConfig { .. } | CliError::Refused(_) | CliError::Threads(_) => 2,
            CliError::Invariant { .. } => 3,
            CliError::Numerical(_) => 4,
            CliError::Write { .. } => 1,
        }
    }
}

impl From<FtlError> for CliError {
    fn from(e: FtlError) -> Self {
        match e {
            FtlError::InvalidLadder(_)
            | FtlError::Placement(_)
            | FtlError::InvalidArgument(_)
            | FtlError::InvalidVelocity(_)
            | FtlError::Cfl(_) => CliError::Refused(e),
            _ => CliError::Numerical(e),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Resolved configuration and run options.
pub struct Invocation {
    pub config: SimConfig,
    pub out: PathBuf,
    pub guard: CflGuard,
}

impl Invocation {
    pub fn from_args(args: &CommonArgs) -> CliResult<Self> {
        let mut config = match (&args.config, &args.preset) {
            (Some(path), _) => {
                let text = fs::read_to_string(path).map_err(|source| CliError::ReadConfig { path: path.clone(), source })?;
                SimConfig::from_json(&text)?
            }
            (None, Some(name)) => SimConfig::preset(name)?,
            (None, None) => return Err(ConfigError::Invalid("one of --config or --preset is required".into()).into()),
        };
        if let Some(mode) = args.mode {
            config.mode = match mode {
                ModeArg::Ode => Mode::Ode,
                ModeArg::Euler => Mode::Euler,
            };
        }
        let guard = if args.unsafe_cfl { CflGuard::Disabled } else { CflGuard::Enforce };
        config.validate(guard == CflGuard::Enforce)?;
        let out = args.out.clone().or_else(|| config.out.clone().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
        Ok(Invocation { config, out, guard })
    }

    fn write(&self, name: &str, contents: &str) -> CliResult<PathBuf> {
        fs::create_dir_all(&self.out).map_err(|source| CliError::Write { path: self.out.clone(), source })?;
        let path = self.out.join(name);
        write_atomic(&path, contents.as_bytes()).map_err(|source| CliError::Write { path: path.clone(), source })?;
        Ok(path)
    }
}

/// Caps the global worker pool from the environment.
pub fn configure_threads(value: Option<String>) -> CliResult<()> {
    let Some(raw) = value else { return Ok(()) };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| CliError::Threads(raw.clone()))?;
    // a pool already built (tests in one process) keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// A recorded run of the configured scheme.
pub struct Recorded {
    pub kind: RunKind,
    pub steps: Vec<usize>,
    pub states: Vec<LagrangianState<f64>>,
    pub discrete: Option<ftl2lwr::euler::DiscreteRun<f64>>,
}

fn run(inv: &Invocation, stride: Stride) -> CliResult<Recorded> {
    let cfg = &inv.config;
    let model = cfg.model()?;
    let rho0 = cfg.rho0.profile();
    let initial = place_vehicles(|z| rho0(z), cfg.domain[0], cfg.domain[1], cfg.n, cfg.boundary_mode(), cfg.panels)?;
    match cfg.mode {
        Mode::Euler => {
            let lambda = landing_lambda(cfg.t_end, initial.ell(), cfg.lambda()?);
            let r = run_discrete_guarded(&initial, &model, cfg.t_end, lambda, stride, inv.guard)?;
            Ok(Recorded { kind: RunKind::Discrete, steps: r.steps.clone(), states: r.states.clone(), discrete: Some(r) })
        }
        Mode::Ode => {
            let (steps, states) = integrate_recorded(&initial, &model, cfg.t_end, cfg.step(initial.ell())?, stride)?;
            Ok(Recorded { kind: RunKind::Ode, steps, states, discrete: None })
        }
    }
}

fn configured_stride(cfg: &SimConfig) -> Stride {
    cfg.stride.map(Stride::Every).unwrap_or_default()
}

/// Recorded state closest in time to `t` (the earlier one on ties).
fn nearest(states: &[LagrangianState<f64>], t: f64) -> &LagrangianState<f64> {
    states
        .iter()
        .min_by(|a, b| (a.t() - t).abs().total_cmp(&(b.t() - t).abs()))
        .expect("runs hold at least the initial state")
}

pub fn cmd_simulate(inv: &Invocation) -> CliResult<Vec<PathBuf>> {
    let rec = run(inv, configured_stride(&inv.config))?;
    let snapshots: Vec<(f64, _)> = inv
        .config
        .density_times()
        .iter()
        .map(|&t| {
            let s = nearest(&rec.states, t);
            (s.t(), eulerian_density(s))
        })
        .collect();
    let (gaps, positions) = run_csv(&rec.steps, &rec.states);
    Ok(vec![
        inv.write("trajectory.csv", &trajectory_csv(&rec.states))?,
        inv.write("density.csv", &density_csv(&snapshots))?,
        inv.write("grid.csv", &grid_csv(&rec.steps, &rec.states))?,
        inv.write("run_gaps.csv", &gaps)?,
        inv.write("run_positions.csv", &positions)?,
    ])
}

pub fn cmd_converge(inv: &Invocation) -> CliResult<(Vec<PathBuf>, usize)> {
    let report = convergence_study(&inv.config.study()?)?;
    let mut json = serde_json::to_string_pretty(&report).expect("report serialises");
    json.push('\n');
    let files = vec![inv.write("report.json", &json)?, inv.write("report.csv", &report.to_csv())?];
    Ok((files, report.flagged.len()))
}

/// Suites and their tolerances for a validate run.
pub struct Validation {
    pub suites: Vec<Excess>,
    pub tolerances: Tolerances,
}

impl Validation {
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for suite in &self.suites {
            let tol = tolerance_for(&self.tolerances, suite.invariant);
            let worst = suite.max();
            let verdict = if passes(suite, &self.tolerances) { "ok" } else { "FAIL" };
            let _ = writeln!(
                s,
                "{verdict:4} {:<16} max excess {worst:.3e} (tolerance {tol:e}, rounding floor {:.3e})",
                suite.invariant,
                suite.threshold(0.0)
            );
        }
        s
    }
}

pub fn cmd_validate(inv: &Invocation) -> CliResult<(Vec<PathBuf>, Validation, usize)> {
    let rec = run(inv, Stride::Every(1))?;
    let model = inv.config.model()?;
    let suites = check_states(rec.kind, &rec.steps, &rec.states, &model, rec.discrete.as_ref())?;
    let tolerances = match rec.kind {
        RunKind::Discrete => Tolerances::DISCRETE,
        RunKind::Ode => Tolerances::ODE,
    };
    let violations = collect_violations(&suites, &tolerances);
    let file = inv.write("violations.json", &violations_json(&violations))?;
    Ok((vec![file], Validation { suites, tolerances }, violations.len()))
}

/// Runs a parsed command line and returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn announce(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", display(f));
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn dispatch(cli: Cli) -> CliResult<()> {
    configure_threads(std::env::var(THREADS_VAR).ok())?;
    match cli.command {
        Command::Simulate(args) => {
            let inv = Invocation::from_args(&args)?;
            announce(&cmd_simulate(&inv)?);
        }
        Command::Converge(args) => {
            let inv = Invocation::from_args(&args)?;
            let (files, flagged) = cmd_converge(&inv)?;
            announce(&files);
            if flagged > 0 {
                return Err(CliError::Invariant { count: flagged });
            }
        }
        Command::Validate(args) => {
            let inv = Invocation::from_args(&args)?;
            let (files, validation, count) = cmd_validate(&inv)?;
            print!("{}", validation.summary());
            announce(&files);
            if count > 0 {
                return Err(CliError::Invariant { count });
            }
        }
    }
    Ok(())
}
