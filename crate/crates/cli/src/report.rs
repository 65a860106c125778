//! Machine-readable reports, CSV export and the human table.

use std::fmt;
use std::io::Write;

use reinvest_core::meta::Phase;
use reinvest_core::{SolveTrace, WorkingPrecision};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Iterations {
    pub outer: usize,
    pub inner: usize,
}

impl Iterations {
    pub fn of(trace: &SolveTrace) -> Self {
        Iterations { outer: trace.outer_iterations(), inner: trace.inner_iterations() }
    }
}

impl fmt::Display for Iterations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.outer, self.inner)
    }
}

/// One solver run or one class of a reinvestment table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub class: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub precision: Option<WorkingPrecision>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub single: Option<Iterations>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub double: Option<Iterations>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub final_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub joules: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub std_dev: Option<f64>,
    pub status: String,
}

impl RunRow {
    pub fn from_phase(class: &str, phase: &Phase) -> Self {
        let trace = &phase.trace;
        let it = Some(Iterations::of(trace));
        let (single, double) = match trace.precision {
            WorkingPrecision::Binary32 => (it, None),
            WorkingPrecision::Binary64 => (None, it),
        };
        RunRow {
            class: class.to_string(),
            precision: Some(trace.precision),
            factor: None,
            single,
            double,
            final_residual: Some(trace.final_fnorm).filter(|v| v.is_finite()),
            joules: Some(phase.energy.joules),
            std_dev: Some(phase.energy.std_dev),
            status: format!("{:?}", trace.termination),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub p1: f64,
    pub s1: f64,
    pub p2: f64,
    pub s2: f64,
    pub ratio: f64,
    pub eps: f64,
    pub improvement_factor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub eps: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub energy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub baseline_energy: Option<f64>,
    pub k1: f64,
    pub k2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Row {
    Run(RunRow),
    Bound(BoundRow),
    Curve(CurveRow),
}

/// Parameters echoed for the analytic commands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelEcho {
    pub p1: f64,
    pub s1: f64,
    pub p2: f64,
    pub s2: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub e_low: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub e_high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ConfigEcho {
    Experiment(ExperimentConfig),
    Model(ModelEcho),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub config: ConfigEcho,
    pub rows: Vec<Row>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub calibrated: Option<reinvest_core::EnergyModelParams>,
}

impl Report {
    pub fn new(command: &str, config: ConfigEcho) -> Self {
        Report { schema_version: SCHEMA_VERSION, command: command.to_string(), config, rows: Vec::new(), calibrated: None }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn run_rows(&self) -> impl Iterator<Item = &RunRow> {
        self.rows.iter().filter_map(|r| match r {
            Row::Run(r) => Some(r),
            _ => None,
        })
    }

    /// CSV with one header row. Sweeps use the gradation-table columns.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(out);
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        match self.rows.first() {
            Some(Row::Bound(_)) => {
                w.write_record(["p1", "s1", "p2", "s2", "ratio", "eps", "improvement_factor"])?;
                for row in &self.rows {
                    if let Row::Bound(b) = row {
                        w.write_record([b.p1, b.s1, b.p2, b.s2, b.ratio, b.eps, b.improvement_factor].map(|v| v.to_string()))?;
                    }
                }
            }
            Some(Row::Curve(_)) => {
                w.write_record(["eps", "energy", "baseline_energy", "k1", "k2"])?;
                for row in &self.rows {
                    if let Row::Curve(c) = row {
                        w.write_record([
                            c.eps.to_string(),
                            opt(c.energy),
                            opt(c.baseline_energy),
                            c.k1.to_string(),
                            c.k2.to_string(),
                        ])?;
                    }
                }
            }
            _ if self.command == "sweep" => {
                w.write_record(["factor_exponent", "joules", "std", "outer", "inner", "status"])?;
                for r in self.run_rows() {
                    let split = r.double.or(r.single);
                    w.write_record([
                        r.factor.map(|f| f.log10().to_string()).unwrap_or_else(|| "0".to_string()),
                        opt(r.joules),
                        opt(r.std_dev),
                        split.map(|s| s.outer.to_string()).unwrap_or_default(),
                        split.map(|s| s.inner.to_string()).unwrap_or_default(),
                        r.status.clone(),
                    ])?;
                }
            }
            _ => {
                w.write_record([
                    "class",
                    "precision",
                    "factor",
                    "single_outer",
                    "single_inner",
                    "double_outer",
                    "double_inner",
                    "final_residual",
                    "joules",
                    "std",
                    "status",
                ])?;
                for r in self.run_rows() {
                    w.write_record([
                        r.class.clone(),
                        r.precision.map(|p| p.to_string()).unwrap_or_default(),
                        opt(r.factor),
                        r.single.map(|s| s.outer.to_string()).unwrap_or_default(),
                        r.single.map(|s| s.inner.to_string()).unwrap_or_default(),
                        r.double.map(|s| s.outer.to_string()).unwrap_or_default(),
                        r.double.map(|s| s.inner.to_string()).unwrap_or_default(),
                        opt(r.final_residual),
                        opt(r.joules),
                        opt(r.std_dev),
                        r.status.clone(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for Report {
    /// Human-readable table.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let na = || "NA".to_string();
        let num = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_else(na);
        match self.rows.first() {
            Some(Row::Bound(_)) => {
                writeln!(f, "{:>4} {:>6} {:>4} {:>6} {:>6} {:>10} {:>14}", "p1", "s1", "p2", "s2", "ratio", "eps", "factor")?;
                for row in &self.rows {
                    if let Row::Bound(b) = row {
                        writeln!(
                            f,
                            "{:>4} {:>6.2} {:>4} {:>6.2} {:>6} {:>10.3e} {:>14.6e}",
                            b.p1, b.s1, b.p2, b.s2, b.ratio, b.eps, b.improvement_factor
                        )?;
                    }
                }
            }
            Some(Row::Curve(_)) => {
                writeln!(f, "{:>10} {:>14} {:>14} {:>8} {:>8}", "eps", "energy", "baseline", "k1", "k2")?;
                for row in &self.rows {
                    if let Row::Curve(c) = row {
                        writeln!(
                            f,
                            "{:>10.3e} {:>14} {:>14} {:>8.3} {:>8.3}",
                            c.eps,
                            num(c.energy),
                            num(c.baseline_energy),
                            c.k1,
                            c.k2
                        )?;
                    }
                }
            }
            _ => {
                writeln!(
                    f,
                    "{:<18} {:>8} {:>14} {:>12} {:>10} {:>10} {:>12}  {}",
                    "class", "factor", "energy", "std", "single", "double", "residual", "status"
                )?;
                for r in self.run_rows() {
                    writeln!(
                        f,
                        "{:<18} {:>8} {:>14} {:>12} {:>10} {:>10} {:>12}  {}",
                        r.class,
                        r.factor.map(|x| format!("{x:.0e}")).unwrap_or_else(na),
                        num(r.joules),
                        r.std_dev.map(|x| format!("{x:.3e}")).unwrap_or_else(na),
                        r.single.map(|s| s.to_string()).unwrap_or_else(na),
                        r.double.map(|s| s.to_string()).unwrap_or_else(na),
                        r.final_residual.map(|x| format!("{x:.3e}")).unwrap_or_else(na),
                        r.status
                    )?;
                }
            }
        }
        if let Some(p) = &self.calibrated {
            writeln!(f, "calibrated: e_c = {:e}, e_t = {:e}, r = {:e}, k = {}, l = {}, n = {}", p.e_c, p.e_t, p.r, p.k, p.l, p.n)?;
        }
        Ok(())
    }
}
