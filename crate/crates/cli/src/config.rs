//! Experiment configuration: defaults, then an optional TOML file, then
//! command-line flags.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use reinvest_core::{EnergyModelParams, ProblemInstance, ProblemKind, SolverConfig, WorkingPrecision};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_N: usize = 100_000;
pub const COUNTER_ENV: &str = "REINVEST_ENERGY_COUNTER";

/// Initial iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum X0Spec {
    Zeros,
    Ones,
    /// Every component set to the same value.
    Constant(f64),
    /// Newline-separated decimals, one per component.
    File(PathBuf),
}

impl X0Spec {
    pub fn materialize(&self, n: usize) -> Result<Vec<f64>, CliError> {
        match self {
            X0Spec::Zeros => Ok(vec![0.0; n]),
            X0Spec::Ones => Ok(vec![1.0; n]),
            X0Spec::Constant(v) => Ok(vec![*v; n]),
            X0Spec::File(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("cannot read x0 file {}: {e}", path.display())))?;
                let values = text
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(|l| {
                        l.parse::<f64>()
                            .ok()
                            .filter(|v| v.is_finite())
                            .ok_or_else(|| CliError::Usage(format!("bad x0 entry `{l}`")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                if values.len() != n {
                    return Err(CliError::Usage(format!(
                        "x0 file has {} entries, expected {n}",
                        values.len()
                    )));
                }
                Ok(values)
            }
        }
    }
}

impl FromStr for X0Spec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "" => Err("empty x0 spec".to_string()),
            "zeros" => Ok(X0Spec::Zeros),
            "ones" => Ok(X0Spec::Ones),
            _ => match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(X0Spec::Constant(v)),
                Ok(_) => Err(format!("x0 constant must be finite, got {s}")),
                Err(_) => Ok(X0Spec::File(PathBuf::from(s))),
            },
        }
    }
}

impl fmt::Display for X0Spec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            X0Spec::Zeros => f.write_str("zeros"),
            X0Spec::Ones => f.write_str("ones"),
            X0Spec::Constant(v) => write!(f, "{v}"),
            X0Spec::File(p) => write!(f, "{}", p.display()),
        }
    }
}

impl TryFrom<String> for X0Spec {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<X0Spec> for String {
    fn from(x: X0Spec) -> String {
        x.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MeterKind {
    /// Energy from operation counts and the cost model.
    Modeled,
    /// Package energy counter (powercap); falls back to modeled if absent.
    Rapl,
    /// Replay counter readings from a file.
    Stub,
}

/// Everything a solver experiment depends on. Field names match the flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub n: usize,
    /// Rosenbrock conditioning parameter.
    pub a: f64,
    pub x0: X0Spec,
    pub eps: f64,
    pub prec: WorkingPrecision,
    pub factor: f64,
    pub factors: Vec<f64>,
    pub meter: MeterKind,
    pub trials: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counter_path: Option<PathBuf>,
    pub max_outer: usize,
    pub model: EnergyModelParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problem: ProblemKind::Laplace,
            n: DEFAULT_N,
            a: 1.0,
            x0: X0Spec::Zeros,
            eps: 1e-6,
            prec: WorkingPrecision::Binary64,
            factor: 1e4,
            factors: (1..=8).map(|e| 10f64.powi(e)).collect(),
            meter: MeterKind::Modeled,
            trials: reinvest_core::metering::DEFAULT_TRIALS,
            counter_path: None,
            max_outer: SolverConfig::default().max_outer,
            model: EnergyModelParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        if self.n < 2 {
            return usage(format!("n must be at least 2, got {}", self.n));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return usage(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.a > 0.0 && self.a.is_finite()) {
            return usage(format!("a must be positive, got {}", self.a));
        }
        if let Some(f) = std::iter::once(&self.factor).chain(&self.factors).find(|f| !(**f >= 1.0 && f.is_finite())) {
            return usage(format!("improvement factors must be at least 1, got {f}"));
        }
        if self.trials == 0 {
            return usage("trials must be at least 1".to_string());
        }
        if self.max_outer == 0 {
            return usage("max-outer must be at least 1".to_string());
        }
        self.model.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(())
    }

    pub fn problem_instance(&self) -> Result<ProblemInstance, CliError> {
        let prob = match self.problem {
            ProblemKind::Laplace => ProblemInstance::laplace(self.n),
            ProblemKind::Rosenbrock => ProblemInstance::rosenbrock(self.n, self.a),
        };
        prob.map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig { epsilon: self.eps, max_outer: self.max_outer, ..SolverConfig::default() }
    }

    pub fn counter_path(&self) -> PathBuf {
        self.counter_path
            .clone()
            .unwrap_or_else(|| PathBuf::from(reinvest_core::metering::DEFAULT_POWERCAP_PATH))
    }
}
