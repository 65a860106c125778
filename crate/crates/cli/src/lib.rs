//! Command-line harness for the reinvestment experiments.
//!
//! `execute` turns parsed arguments into a [`Report`] without touching
//! standard output; `emit` writes the table, JSON and CSV forms.

pub mod config;
pub mod report;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use reinvest_core::energymodel::{
    attainable_accuracy, baseline_energy, energy_accuracy_curve, improvement_factor_bound, iteration_energy,
    log_grid, PrecisionLevel,
};
use reinvest_core::meta::{gradation_sweep, reinvest_experiment, Phase, ReinvestOutcome};
use reinvest_core::metering::{calibrate_params, CalibrationSample, PowercapCounter, StubCounter};
use reinvest_core::{
    solve, EnergyMeter, EnergyModelParams, MeasuredMeter, ModeledMeter, ProblemKind, WorkingPrecision,
};

use crate::config::{ExperimentConfig, MeterKind, X0Spec, COUNTER_ENV};
use crate::report::{BoundRow, ConfigEcho, CurveRow, Iterations, ModelEcho, Report, Row, RunRow};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Experiment(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "reinvest", version, about = "Mixed-precision inexact Newton experiments with energy accounting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one problem at one precision.
    Solve(RunArgs),
    /// Baseline, single-precision run and binary64 reinvestment for one factor.
    Reinvest(RunArgs),
    /// Reinvestment over several improvement factors sharing one baseline.
    Sweep(RunArgs),
    /// Lower bound on the improvement factor of a two-level scheme.
    Bound(BoundArgs),
    /// Modeled energy against accuracy for a two-level scheme.
    Curve(CurveArgs),
    /// Fit the cost model to energy measured at both precisions.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML file with the same field names as the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_problem)]
    pub problem: Option<ProblemKind>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Rosenbrock conditioning parameter.
    #[arg(long)]
    pub a: Option<f64>,
    /// `zeros`, `ones`, a constant, or a file of newline-separated values.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<X0Spec>,
    #[arg(long, allow_hyphen_values = true)]
    pub eps: Option<f64>,
    #[arg(long, value_parser = parse_precision)]
    pub prec: Option<WorkingPrecision>,
    #[arg(long)]
    pub factor: Option<f64>,
    /// Comma-separated improvement factors.
    #[arg(long, value_delimiter = ',')]
    pub factors: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub meter: Option<MeterKind>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Energy counter file (powercap `energy_uj`, or readings for `stub`).
    #[arg(long, env = COUNTER_ENV)]
    pub counter_path: Option<PathBuf>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    /// Compute energy per bit.
    #[arg(long)]
    pub e_c: Option<f64>,
    /// Transfer energy per bit.
    #[arg(long)]
    pub e_t: Option<f64>,
    /// Cache-miss rate per bit.
    #[arg(long)]
    pub r: Option<f64>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct OutputArgs {
    /// Write the JSON report here (`-` for standard output).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Write CSV here (`-` for standard output).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct LevelArgs {
    #[arg(long, default_value_t = 32)]
    pub p1: u32,
    #[arg(long, default_value_t = 64)]
    pub p2: u32,
    /// Slack bits of the low level; defaults to a preset.
    #[arg(long, allow_hyphen_values = true)]
    pub s1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub s2: Option<f64>,
    /// Conditioning offset of the `bound` preset `s = 3 lg p - 7 + delta`.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub delta: f64,
}

impl LevelArgs {
    fn levels(&self, preset: fn(u32, f64) -> PrecisionLevel) -> (PrecisionLevel, PrecisionLevel) {
        let level = |p: u32, s: Option<f64>| match s {
            Some(s) => PrecisionLevel::with_slack(p, s),
            None => preset(p, self.delta),
        };
        (level(self.p1, self.s1), level(self.p2, self.s2))
    }
}

/// `from:to:per_decade` decimal exponents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub from: i32,
    pub to: i32,
    pub per_decade: usize,
}

impl std::str::FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || format!("grid must look like -12:-1:4, got `{s}`");
        if parts.len() != 3 {
            return Err(bad());
        }
        Ok(Grid {
            from: parts[0].parse().map_err(|_| bad())?,
            to: parts[1].parse().map_err(|_| bad())?,
            per_decade: parts[2].parse().ok().filter(|&k| k > 0).ok_or_else(bad)?,
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    pub levels: LevelArgs,
    /// Energy ratio E(p1)/E(p2).
    #[arg(long, default_value_t = 0.5)]
    pub ratio: f64,
    #[arg(long, default_value_t = 1e-5, allow_hyphen_values = true)]
    pub eps: f64,
    /// Evaluate on a tolerance grid instead of a single `--eps`.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<Grid>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub levels: LevelArgs,
    /// Linear contraction factor per iteration.
    #[arg(long, default_value_t = 2.0)]
    pub lambda: f64,
    /// Energy per low-precision iteration; defaults to the cost model.
    #[arg(long)]
    pub e_low: Option<f64>,
    #[arg(long)]
    pub e_high: Option<f64>,
    #[arg(long, default_value = "-16:-1:4", allow_hyphen_values = true)]
    pub grid: Grid,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Tolerances solved at both precisions.
    #[arg(long, value_delimiter = ',', default_value = "1e-2,1e-4,1e-6")]
    pub eps_list: Vec<f64>,
    /// Write the fitted parameters as a TOML config here.
    #[arg(long)]
    pub params_out: Option<PathBuf>,
}

fn parse_problem(s: &str) -> Result<ProblemKind, String> {
    s.parse()
}

fn parse_precision(s: &str) -> Result<WorkingPrecision, String> {
    s.parse().map_err(|e: reinvest_core::precision::ParsePrecisionError| e.to_string())
}

/// Result of a command: the report and whether the experiment succeeded.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    pub success: bool,
    pub params_out: Option<(PathBuf, String)>,
}

impl Outcome {
    fn new(report: Report, success: bool) -> Self {
        Outcome { report, success, params_out: None }
    }

    pub fn exit_code(&self) -> i32 {
        if self.success {
            0
        } else {
            1
        }
    }
}

impl RunArgs {
    /// Defaults, then the config file, then explicit flags.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    cfg.$field = v.clone();
                }
            )*};
        }
        set!(problem, n, a, x0, eps, prec, factor, factors, meter, trials, max_outer);
        if self.counter_path.is_some() {
            cfg.counter_path = self.counter_path.clone();
        }
        if let Some(v) = self.e_c {
            cfg.model.e_c = v;
        }
        if let Some(v) = self.e_t {
            cfg.model.e_t = v;
        }
        if let Some(v) = self.r {
            cfg.model.r = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn make_meter(cfg: &ExperimentConfig) -> Result<Box<dyn EnergyMeter>, CliError> {
    let modeled = || Box::new(ModeledMeter::new(cfg.model)) as Box<dyn EnergyMeter>;
    match cfg.meter {
        MeterKind::Modeled => Ok(modeled()),
        MeterKind::Rapl => match PowercapCounter::open(cfg.counter_path()) {
            Ok(counter) => Ok(Box::new(MeasuredMeter::new(counter, cfg.trials))),
            Err(e) => {
                log::warn!("{e}; falling back to the modeled meter");
                Ok(modeled())
            }
        },
        MeterKind::Stub => {
            let path = cfg
                .counter_path
                .as_ref()
                .ok_or_else(|| CliError::Usage("the stub meter needs --counter-path".to_string()))?;
            let counter = StubCounter::from_file(path, u64::MAX).map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(Box::new(MeasuredMeter::new(counter, cfg.trials)))
        }
    }
}

fn experiment_err(e: impl std::fmt::Display) -> CliError {
    CliError::Experiment(e.to_string())
}

pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Solve(args) => cmd_solve(&args.resolve()?),
        Command::Reinvest(args) => cmd_reinvest(&args.resolve()?),
        Command::Sweep(args) => cmd_sweep(&args.resolve()?),
        Command::Bound(args) => cmd_bound(args),
        Command::Curve(args) => cmd_curve(args),
        Command::Calibrate(args) => cmd_calibrate(&args.run.resolve()?, &args.eps_list, args.params_out.as_deref()),
    }
}

pub fn cmd_solve(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let prob = cfg.problem_instance()?;
    let x0 = cfg.x0.materialize(cfg.n)?;
    let scfg = cfg.solver_config();
    let mut meter = make_meter(cfg)?;
    let (trace, energy) = meter.measure(&mut || solve(&prob, &x0, &scfg, cfg.prec)).map_err(experiment_err)?;
    let success = trace.converged();
    let mut report = Report::new("solve", ConfigEcho::Experiment(cfg.clone()));
    report.rows.push(Row::Run(RunRow::from_phase("solve", &Phase { trace, energy })));
    Ok(Outcome::new(report, success))
}

fn outcome_name(o: ReinvestOutcome) -> String {
    match o {
        ReinvestOutcome::Failed(t) => format!("Failed({t:?})"),
        other => format!("{other:?}"),
    }
}

pub fn cmd_reinvest(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let prob = cfg.problem_instance()?;
    let x0 = cfg.x0.materialize(cfg.n)?;
    let mut meter = make_meter(cfg)?;
    let rep = reinvest_experiment(&prob, &x0, cfg.eps, cfg.factor, meter.as_mut(), &cfg.solver_config())
        .map_err(experiment_err)?;
    let mut report = Report::new("reinvest", ConfigEcho::Experiment(cfg.clone()));
    report.rows.push(Row::Run(RunRow {
        class: "Reinvest".to_string(),
        precision: None,
        factor: Some(rep.factor),
        single: Some(Iterations::of(&rep.single_phase.trace)),
        double: Some(Iterations::of(&rep.double_phase.trace)),
        final_residual: Some(rep.double_phase.trace.final_fnorm).filter(|v| v.is_finite()),
        joules: Some(rep.hybrid_energy_j),
        std_dev: Some(rep.hybrid_std_dev),
        status: outcome_name(rep.outcome),
    }));
    report.rows.push(Row::Run(RunRow::from_phase("Ceiling (double)", &rep.baseline)));
    report.rows.push(Row::Run(RunRow::from_phase("Base (single)", &rep.single_phase)));
    Ok(Outcome::new(report, rep.outcome == ReinvestOutcome::Improved))
}

pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let prob = cfg.problem_instance()?;
    let x0 = cfg.x0.materialize(cfg.n)?;
    let mut meter = make_meter(cfg)?;
    let table = gradation_sweep(&prob, &x0, cfg.eps, &cfg.factors, meter.as_mut(), &cfg.solver_config())
        .map_err(experiment_err)?;
    let mut report = Report::new("sweep", ConfigEcho::Experiment(cfg.clone()));
    report.rows.push(Row::Run(RunRow::from_phase("Base (single)", &table.base.single_phase)));
    for row in &table.rows {
        let run = match &row.result {
            Ok(rep) => RunRow {
                class: "Reinvest".to_string(),
                precision: None,
                factor: Some(row.factor),
                single: Some(Iterations::of(&rep.single_phase.trace)),
                double: Some(Iterations::of(&rep.double_phase.trace)),
                final_residual: Some(rep.double_phase.trace.final_fnorm).filter(|v| v.is_finite()),
                joules: Some(rep.hybrid_energy_j),
                std_dev: Some(rep.hybrid_std_dev),
                status: outcome_name(rep.outcome),
            },
            Err(msg) => RunRow {
                class: "Reinvest".to_string(),
                precision: None,
                factor: Some(row.factor),
                single: None,
                double: None,
                final_residual: None,
                joules: None,
                std_dev: None,
                status: msg.clone(),
            },
        };
        report.rows.push(Row::Run(run));
    }
    report.rows.push(Row::Run(RunRow::from_phase("Ceiling (double)", &table.base.baseline)));
    Ok(Outcome::new(report, true))
}

fn grid_or_single(grid: Option<Grid>, eps: f64) -> Vec<f64> {
    match grid {
        Some(g) => log_grid(g.from, g.to, g.per_decade),
        None => vec![eps],
    }
}

pub fn cmd_bound(args: &BoundArgs) -> Result<Outcome, CliError> {
    let (low, high) = args.levels.levels(PrecisionLevel::with_conditioning);
    let mut report = Report::new(
        "bound",
        ConfigEcho::Model(ModelEcho {
            p1: low.p,
            s1: low.s,
            p2: high.p,
            s2: high.s,
            ratio: Some(args.ratio),
            lambda: None,
            e_low: None,
            e_high: None,
        }),
    );
    for eps in grid_or_single(args.grid, args.eps) {
        let f = improvement_factor_bound(&low, &high, eps, args.ratio).map_err(|e| CliError::Usage(e.to_string()))?;
        report.rows.push(Row::Bound(BoundRow {
            p1: low.p,
            s1: low.s,
            p2: high.p,
            s2: high.s,
            ratio: args.ratio,
            eps,
            improvement_factor: f,
        }));
    }
    Ok(Outcome::new(report, true))
}

pub fn cmd_curve(args: &CurveArgs) -> Result<Outcome, CliError> {
    let (low, high) = args.levels.levels(|p, _| PrecisionLevel::figure_preset(p));
    let params = EnergyModelParams::default();
    let e_low = args.e_low.unwrap_or_else(|| iteration_energy(&params, low.p));
    let e_high = args.e_high.unwrap_or_else(|| iteration_energy(&params, high.p));
    let grid = log_grid(args.grid.from, args.grid.to, args.grid.per_decade);
    let curve = energy_accuracy_curve(&low, &high, args.lambda, e_low, e_high, &grid)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let floor = attainable_accuracy(&high);
    let mut report = Report::new(
        "curve",
        ConfigEcho::Model(ModelEcho {
            p1: low.p,
            s1: low.s,
            p2: high.p,
            s2: high.s,
            ratio: None,
            lambda: Some(args.lambda),
            e_low: Some(e_low),
            e_high: Some(e_high),
        }),
    );
    for pt in curve {
        let baseline = if pt.eps >= floor { baseline_energy(e_high, pt.eps, args.lambda).ok() } else { None };
        report.rows.push(Row::Curve(CurveRow {
            eps: pt.eps,
            energy: pt.energy,
            baseline_energy: baseline,
            k1: pt.split.k1,
            k2: pt.split.k2,
        }));
    }
    Ok(Outcome::new(report, true))
}

pub fn cmd_calibrate(
    cfg: &ExperimentConfig,
    eps_list: &[f64],
    params_out: Option<&Path>,
) -> Result<Outcome, CliError> {
    if eps_list.is_empty() || eps_list.iter().any(|e| !(*e > 0.0)) {
        return Err(CliError::Usage("--eps-list needs positive tolerances".to_string()));
    }
    let prob = cfg.problem_instance()?;
    let x0 = cfg.x0.materialize(cfg.n)?;
    let mut meter = make_meter(cfg)?;
    let mut report = Report::new("calibrate", ConfigEcho::Experiment(cfg.clone()));
    let mut samples = Vec::new();
    for &eps in eps_list {
        for prec in [WorkingPrecision::Binary32, WorkingPrecision::Binary64] {
            let scfg = cfg.solver_config().with_epsilon(eps);
            let (trace, energy) = meter.measure(&mut || solve(&prob, &x0, &scfg, prec)).map_err(experiment_err)?;
            if trace.converged() {
                samples.push(CalibrationSample::from_trace(&trace, cfg.n, energy.joules));
            }
            let mut row = RunRow::from_phase("calibration", &Phase { trace, energy });
            row.factor = None;
            report.rows.push(Row::Run(row));
        }
    }
    let fitted = calibrate_params(&samples, cfg.model.r).map_err(experiment_err)?;
    report.calibrated = Some(fitted);
    let mut outcome = Outcome::new(report, true);
    if let Some(path) = params_out {
        let file_cfg = ExperimentConfig { model: fitted, ..cfg.clone() };
        let text = toml::to_string(&file_cfg).map_err(|e| CliError::Experiment(e.to_string()))?;
        outcome.params_out = Some((path.to_path_buf(), text));
    }
    Ok(outcome)
}

fn output_args(cli: &Cli) -> Option<&OutputArgs> {
    match &cli.command {
        Command::Solve(a) | Command::Reinvest(a) | Command::Sweep(a) => Some(&a.out),
        Command::Calibrate(a) => Some(&a.run.out),
        Command::Bound(a) => Some(&a.out),
        Command::Curve(a) => Some(&a.out),
    }
}

fn write_target(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<(), CliError>) -> Result<(), CliError> {
    if path == Path::new("-") {
        let stdout = io::stdout();
        let mut lock = stdout.lock();
        f(&mut lock)
    } else {
        let mut file = io::BufWriter::new(fs::File::create(path)?);
        f(&mut file)?;
        file.flush()?;
        Ok(())
    }
}

/// Write the human table (unless a machine format goes to standard output),
/// the JSON report and the CSV.
pub fn emit(cli: &Cli, outcome: &Outcome) -> Result<(), CliError> {
    let out = output_args(cli).cloned().unwrap_or_default();
    let to_stdout = |p: &Option<PathBuf>| p.as_deref() == Some(Path::new("-"));
    if !to_stdout(&out.output) && !to_stdout(&out.csv) {
        write!(io::stdout().lock(), "{}", outcome.report)?;
    }
    if let Some(path) = &out.output {
        write_target(path, |w| {
            writeln!(w, "{}", outcome.report.to_json())?;
            Ok(())
        })?;
    }
    if let Some(path) = &out.csv {
        write_target(path, |w| outcome.report.write_csv(w))?;
    }
    if let Some((path, text)) = &outcome.params_out {
        fs::write(path, text)?;
    }
    Ok(())
}
