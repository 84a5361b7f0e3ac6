//! Command-line surface: `simulate`, `melnikov`, `classify`, `basin`,
//! `fractal`. Exit codes: 0 success, 2 usage, 3 I/O failure, 4 degenerate
//! input.

use crate::basin::{
    basin_summary, box_count_boundary, compute_basin, dividing_scales, GridSpec,
    DEFAULT_RESOLUTION, DEFAULT_WINDOW,
};
use crate::error::Error;
use crate::integrator::{integrate, IntegratorOptions, Method, Recording, DEFAULT_ESCAPE_RADIUS};
use crate::io;
use crate::melnikov::melnikov_report;
use crate::model::{ModelParams, State2};
use crate::poincare::{classify, PoincareOptions};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Degenerate(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Degenerate(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Io(msg) | CliError::Degenerate(msg) => {
                write!(f, "{msg}")
            }
        }
    }
}

fn usage(err: impl std::fmt::Display) -> CliError {
    CliError::Usage(err.to_string())
}

fn io_failure(err: impl std::fmt::Display) -> CliError {
    CliError::Io(err.to_string())
}

/// Forced demand-supply market dynamics toolkit.
#[derive(Debug, Parser)]
#[command(name = "dsdyn", version, about)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the planar system and write a t,p,q trajectory CSV.
    Simulate(SimulateArgs),
    /// Report the chaos threshold and the distance-function root structure.
    Melnikov(MelnikovArgs),
    /// Classify one initial condition under the period map.
    Classify(ClassifyArgs),
    /// Sweep a grid of initial conditions into a basin CSV and pixmap.
    Basin(BasinArgs),
    /// Estimate the boundary box-count dimension of a saved basin CSV.
    Fractal(FractalArgs),
}

fn parse_omega(text: &str) -> Result<f64, String> {
    if text.eq_ignore_ascii_case("pi") {
        return Ok(std::f64::consts::PI);
    }
    text.parse::<f64>()
        .map_err(|_| format!("expected a number or `pi`, got `{text}`"))
}

/// Model coefficients shared by every subcommand; defaults to the baseline
/// set with the forcing frequency `pi`.
#[derive(Debug, Args)]
struct ParamArgs {
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 0.25)]
    beta1: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Forcing angular frequency; accepts a literal or the token `pi`.
    #[arg(long, value_parser = parse_omega, default_value = "pi")]
    omega1: f64,
}

impl ParamArgs {
    fn build(&self, delta: f64, a: f64) -> Result<ModelParams, CliError> {
        ModelParams::new(self.alpha, self.beta, self.beta1, self.gamma, delta, a, self.omega1)
            .map_err(usage)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Rk4,
    Rk45,
}

/// Classification knobs shared by `classify` and `basin`; unset budget
/// fields fall back to damping-dependent defaults.
#[derive(Debug, Args)]
struct SectionArgs {
    /// Section time offset in [0, T).
    #[arg(long, default_value_t = 0.0)]
    phase: f64,
    /// Iterates discarded before cycle matching.
    #[arg(long)]
    transient: Option<usize>,
    /// Total period-map iterate budget.
    #[arg(long = "max-iter")]
    max_iterations: Option<usize>,
    /// Largest cycle period tested.
    #[arg(long = "kmax", default_value_t = 8)]
    period_max: usize,
    /// Cycle-closing tolerance.
    #[arg(long = "match-tol", default_value_t = 1e-6)]
    match_tol: f64,
    /// Consecutive anchor returns required to confirm a cycle.
    #[arg(long = "confirm", default_value_t = 5)]
    confirm_count: usize,
    /// RK4 step; defaults to one two-hundredth of the forcing period.
    #[arg(long)]
    step: Option<f64>,
    #[arg(long = "escape-radius", default_value_t = DEFAULT_ESCAPE_RADIUS)]
    escape_radius: f64,
}

impl SectionArgs {
    fn build(&self, params: &ModelParams, sweep: bool) -> PoincareOptions {
        let mut opts = if sweep {
            PoincareOptions::for_sweep(params)
        } else {
            PoincareOptions::for_params(params)
        };
        opts.phase = self.phase;
        if let Some(transient) = self.transient {
            opts.transient = transient;
        }
        if let Some(budget) = self.max_iterations {
            opts.max_iterations = budget;
        }
        opts.period_max = self.period_max;
        opts.match_tol = self.match_tol;
        opts.confirm_count = self.confirm_count;
        if let Some(step) = self.step {
            opts.integrator.method = Method::Rk4 { step };
        }
        opts.integrator.escape_radius = self.escape_radius;
        opts
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long)]
    delta: f64,
    #[arg(long)]
    a: f64,
    #[arg(long)]
    p0: f64,
    #[arg(long)]
    q0: f64,
    #[arg(long = "t-end")]
    t_end: f64,
    /// Output sampling interval.
    #[arg(long, default_value_t = 0.02)]
    dt: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Rk4)]
    method: MethodArg,
    /// RK4 step; defaults to one two-hundredth of the forcing period.
    #[arg(long)]
    step: Option<f64>,
    #[arg(long = "rel-tol", default_value_t = 1e-9)]
    rel_tol: f64,
    #[arg(long = "abs-tol", default_value_t = 1e-12)]
    abs_tol: f64,
    #[arg(long = "escape-radius", default_value_t = DEFAULT_ESCAPE_RADIUS)]
    escape_radius: f64,
    /// Output path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MelnikovArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long)]
    delta: f64,
    /// Forcing amplitude; enables the root-structure part of the report.
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long)]
    delta: f64,
    #[arg(long)]
    a: f64,
    #[arg(long)]
    p0: f64,
    #[arg(long)]
    q0: f64,
    #[command(flatten)]
    section: SectionArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_window(text: &str) -> Result<[f64; 4], String> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 4 {
        return Err(format!("expected pmin,pmax,qmin,qmax, got `{text}`"));
    }
    let mut out = [0.0; 4];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part
            .parse::<f64>()
            .map_err(|_| format!("bad window bound `{part}`"))?;
    }
    Ok(out)
}

fn parse_res(text: &str) -> Result<[usize; 2], String> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected nx,ny, got `{text}`"));
    }
    let nx = parts[0]
        .parse::<usize>()
        .map_err(|_| format!("bad resolution `{}`", parts[0]))?;
    let ny = parts[1]
        .parse::<usize>()
        .map_err(|_| format!("bad resolution `{}`", parts[1]))?;
    Ok([nx, ny])
}

#[derive(Debug, Args)]
struct BasinArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long)]
    delta: f64,
    #[arg(long)]
    a: f64,
    /// Sweep window as pmin,pmax,qmin,qmax.
    #[arg(long, value_parser = parse_window)]
    window: Option<[f64; 4]>,
    /// Grid resolution as nx,ny.
    #[arg(long, value_parser = parse_res)]
    res: Option<[usize; 2]>,
    #[command(flatten)]
    section: SectionArgs,
    #[arg(long = "out-csv", default_value = "basin.csv")]
    out_csv: PathBuf,
    #[arg(long = "out-ppm", default_value = "basin.ppm")]
    out_ppm: PathBuf,
}

#[derive(Debug, Args)]
struct FractalArgs {
    /// Basin CSV produced by the `basin` subcommand.
    #[arg(long = "in")]
    input: PathBuf,
    /// Comma-separated coarsening scales; defaults to every supported scale
    /// dividing the grid.
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<usize>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn out_writer(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    match path {
        Some(path) => {
            let file = File::create(path)
                .map_err(|e| io_failure(format!("cannot create {}: {e}", path.display())))?;
            Ok(Box::new(BufWriter::new(file)))
        }
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Melnikov(args) => cmd_melnikov(args),
        Command::Classify(args) => cmd_classify(args),
        Command::Basin(args) => cmd_basin(args),
        Command::Fractal(args) => cmd_fractal(args),
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let params = args.params.build(args.delta, args.a)?;
    let method = match args.method {
        MethodArg::Rk4 => Method::Rk4 {
            step: args
                .step
                .unwrap_or(params.forcing_period() / crate::integrator::STEPS_PER_PERIOD),
        },
        MethodArg::Rk45 => Method::Rk45 {
            rel_tol: args.rel_tol,
            abs_tol: args.abs_tol,
        },
    };
    let opts = IntegratorOptions {
        method,
        escape_radius: args.escape_radius,
        ..IntegratorOptions::rk4(1.0)
    };
    let outcome = integrate(
        &params,
        State2::new(args.p0, args.q0),
        0.0,
        args.t_end,
        &opts,
        Recording::Interval(args.dt),
    )
    .map_err(usage)?;
    let mut w = out_writer(args.out.as_deref())?;
    io::write_trajectory_csv(&mut w, &params, &outcome).map_err(io_failure)?;
    w.flush().map_err(io_failure)
}

fn cmd_melnikov(args: MelnikovArgs) -> Result<(), CliError> {
    let params = args.params.build(args.delta, args.a.unwrap_or(0.0))?;
    let report = melnikov_report(&params);
    let mut w = out_writer(args.out.as_deref())?;
    io::write_melnikov_report(&mut w, &params, &report, args.a.is_some()).map_err(io_failure)?;
    w.flush().map_err(io_failure)
}

fn cmd_classify(args: ClassifyArgs) -> Result<(), CliError> {
    let params = args.params.build(args.delta, args.a)?;
    let opts = args.section.build(&params, false);
    let class = classify(&params, State2::new(args.p0, args.q0), &opts).map_err(usage)?;
    let mut w = out_writer(args.out.as_deref())?;
    io::write_classification(&mut w, &params, &class).map_err(io_failure)?;
    w.flush().map_err(io_failure)
}

fn cmd_basin(args: BasinArgs) -> Result<(), CliError> {
    let params = args.params.build(args.delta, args.a)?;
    let [p_min, p_max, q_min, q_max] = args
        .window
        .unwrap_or([DEFAULT_WINDOW.0, DEFAULT_WINDOW.1, DEFAULT_WINDOW.0, DEFAULT_WINDOW.1]);
    let [nx, ny] = args.res.unwrap_or([DEFAULT_RESOLUTION, DEFAULT_RESOLUTION]);
    let grid = GridSpec::new(p_min, p_max, q_min, q_max, nx, ny).map_err(usage)?;
    let opts = args.section.build(&params, true);
    let map = compute_basin(&params, &grid, &opts).map_err(usage)?;

    let mut csv = BufWriter::new(
        File::create(&args.out_csv)
            .map_err(|e| io_failure(format!("cannot create {}: {e}", args.out_csv.display())))?,
    );
    io::write_basin_csv(&mut csv, &map).map_err(io_failure)?;
    csv.flush().map_err(io_failure)?;

    let mut ppm = BufWriter::new(
        File::create(&args.out_ppm)
            .map_err(|e| io_failure(format!("cannot create {}: {e}", args.out_ppm.display())))?,
    );
    io::write_basin_ppm(&mut ppm, &map).map_err(io_failure)?;
    ppm.flush().map_err(io_failure)?;

    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    io::write_basin_summary(&mut w, &basin_summary(&map)).map_err(io_failure)
}

fn cmd_fractal(args: FractalArgs) -> Result<(), CliError> {
    let file = File::open(&args.input)
        .map_err(|e| io_failure(format!("cannot open {}: {e}", args.input.display())))?;
    let map = io::read_basin_csv(BufReader::new(file)).map_err(|e| match e {
        Error::Io(e) => io_failure(e),
        other => CliError::Degenerate(other.to_string()),
    })?;
    let (scales, explicit) = match args.scales {
        Some(scales) => (scales, true),
        None => (dividing_scales(map.grid.nx, map.grid.ny), false),
    };
    let result = box_count_boundary(&map, &scales).map_err(|e| match e {
        Error::InvalidOptions(msg) if explicit => usage(msg),
        other => CliError::Degenerate(other.to_string()),
    })?;
    let mut w = out_writer(args.out.as_deref())?;
    io::write_box_count(&mut w, &result).map_err(io_failure)?;
    w.flush().map_err(io_failure)
}
