//! Precision-ladder meta strategy and the energy reinvestment protocol.
//!
//! A ladder runs the Newton solver at increasing precisions, each level
//! warm-started from the previous iterate. Reinvestment compares a pure
//! binary64 solve to tolerance `ε` (the energy budget) against a hybrid that
//! reaches `ε` in binary32 and then spends the savings in binary64 to reach
//! `ε / f`.

use serde::{Deserialize, Serialize};

use crate::energymodel::{attainable_accuracy, PrecisionLevel};
use crate::metering::{EnergyMeter, EnergySample, MeterError};
use crate::newton::{solve, solve_warm, SolveError, SolveTrace, SolverConfig, Termination};
use crate::precision::WorkingPrecision;
use crate::problems::ProblemInstance;

/// Safety factor between a level's tolerance and its attainable accuracy.
pub const DEFAULT_KAPPA: f64 = 4.0;

/// Conditioning slack used to decide whether binary32 can reach a tolerance.
pub const SINGLE_FEASIBILITY_DELTA: f64 = 0.0;

#[derive(Debug, thiserror::Error)]
pub enum MetaError {
    #[error("invalid precision ladder: {0}")]
    InvalidLadder(&'static str),
    #[error("tolerance {eps} is below the binary32 attainable accuracy {floor}")]
    TooTightForSingle { eps: f64, floor: f64 },
    #[error("improvement factor must be finite and at least 1, got {0}")]
    InvalidFactor(f64),
    #[error("binary64 baseline did not converge: {0:?}")]
    BaselineFailed(Termination),
    #[error("binary32 phase did not converge: {0:?}")]
    SingleFailed(Termination),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Meter(#[from] MeterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderLevel {
    pub precision: WorkingPrecision,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionLadder {
    levels: Vec<LadderLevel>,
}

impl PrecisionLadder {
    /// Levels must have strictly increasing precision and nonincreasing,
    /// positive tolerances.
    pub fn new(levels: Vec<LadderLevel>) -> Result<Self, MetaError> {
        if levels.is_empty() {
            return Err(MetaError::InvalidLadder("ladder is empty"));
        }
        if levels.iter().any(|l| !(l.tolerance > 0.0 && l.tolerance.is_finite())) {
            return Err(MetaError::InvalidLadder("tolerances must be positive"));
        }
        for w in levels.windows(2) {
            if w[0].precision.bits() >= w[1].precision.bits() {
                return Err(MetaError::InvalidLadder("precisions must strictly increase"));
            }
            if w[1].tolerance > w[0].tolerance {
                return Err(MetaError::InvalidLadder("tolerances must not increase"));
            }
        }
        Ok(PrecisionLadder { levels })
    }

    /// Ladder ending at `target`, with each lower level stopped at
    /// `max(target, kappa · 2^(s - p))`, `s = 3 lg p - 7 + delta`.
    pub fn auto(
        target: f64,
        precisions: &[WorkingPrecision],
        kappa: f64,
        delta: f64,
    ) -> Result<Self, MetaError> {
        let last = precisions.len().saturating_sub(1);
        let levels = precisions
            .iter()
            .enumerate()
            .map(|(i, &precision)| {
                let floor = attainable_accuracy(&PrecisionLevel::with_conditioning(precision.bits(), delta));
                let tolerance = if i == last { target } else { target.max(kappa * floor) };
                LadderLevel { precision, tolerance }
            })
            .collect();
        Self::new(levels)
    }

    pub fn levels(&self) -> &[LadderLevel] {
        &self.levels
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRun {
    pub level: LadderLevel,
    pub trace: SolveTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderTrace {
    pub levels: Vec<LevelRun>,
    /// Termination of the last level run.
    pub termination: Termination,
    pub final_x: Vec<f64>,
    pub final_fnorm: f64,
}

impl LadderTrace {
    pub fn outer_iterations_at(&self, precision: WorkingPrecision) -> usize {
        self.levels
            .iter()
            .filter(|r| r.level.precision == precision)
            .map(|r| r.trace.outer_iterations())
            .sum()
    }
}

/// Run the solver level by level. A level that stops on a line-search
/// failure, inner breakdown or any other non-convergence hands its last
/// iterate to the next level; the final level's status is the ladder's.
pub fn run_ladder(
    prob: &ProblemInstance,
    x0: &[f64],
    ladder: &PrecisionLadder,
    cfg: &SolverConfig,
) -> Result<LadderTrace, MetaError> {
    let mut x = x0.to_vec();
    let mut runs = Vec::with_capacity(ladder.levels.len());
    for (i, level) in ladder.levels.iter().enumerate() {
        let level_cfg = cfg.with_epsilon(level.tolerance);
        let trace = if i == 0 {
            solve(prob, &x, &level_cfg, level.precision)?
        } else {
            solve_warm(prob, &x, &level_cfg, level.precision)?
        };
        if trace.final_x.iter().all(|v| v.is_finite()) {
            x.clone_from(&trace.final_x);
        }
        runs.push(LevelRun { level: *level, trace });
    }
    let last = &runs.last().expect("ladder is nonempty").trace;
    Ok(LadderTrace {
        termination: last.termination,
        final_x: last.final_x.clone(),
        final_fnorm: last.final_fnorm,
        levels: runs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub trace: SolveTrace,
    pub energy: EnergySample,
}

impl Phase {
    pub fn joules(&self) -> f64 {
        self.energy.joules
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReinvestOutcome {
    /// Reached `ε / f` within the budget.
    Improved,
    /// Reached `ε / f` but spent more than the baseline.
    BudgetExceeded,
    /// The binary64 stage hit a line-search failure or inner breakdown.
    FactorTooLarge,
    /// The binary64 stage stopped for another reason.
    Failed(Termination),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReinvestReport {
    pub eps: f64,
    pub factor: f64,
    /// Energy of the binary64 baseline solve to `eps`.
    pub budget_j: f64,
    pub baseline: Phase,
    pub single_phase: Phase,
    pub double_phase: Phase,
    pub hybrid_energy_j: f64,
    pub hybrid_std_dev: f64,
    /// `eps` over the final binary64 residual norm.
    pub improvement_factor: f64,
    /// `hybrid_energy_j <= budget_j`.
    pub success: bool,
    pub leftover_j: f64,
    pub outcome: ReinvestOutcome,
}

fn check_single_feasible(eps: f64) -> Result<(), MetaError> {
    let floor = attainable_accuracy(&PrecisionLevel::with_conditioning(32, SINGLE_FEASIBILITY_DELTA));
    if eps < floor {
        return Err(MetaError::TooTightForSingle { eps, floor });
    }
    Ok(())
}

fn check_factor(factor: f64) -> Result<(), MetaError> {
    if factor >= 1.0 && factor.is_finite() {
        Ok(())
    } else {
        Err(MetaError::InvalidFactor(factor))
    }
}

/// Baseline and single-precision phases shared by every factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReinvestBase {
    pub eps: f64,
    pub baseline: Phase,
    pub single_phase: Phase,
}

/// Steps one and two of the protocol: the binary64 budget run and the
/// binary32 run, both to `eps` from the same start and configuration.
pub fn reinvest_base(
    prob: &ProblemInstance,
    x0: &[f64],
    eps: f64,
    meter: &mut dyn EnergyMeter,
    cfg: &SolverConfig,
) -> Result<ReinvestBase, MetaError> {
    check_single_feasible(eps)?;
    let cfg = cfg.with_epsilon(eps);
    cfg.validate().map_err(SolveError::from)?;

    let (trace, energy) = meter.measure(&mut || solve(prob, x0, &cfg, WorkingPrecision::Binary64))?;
    if !trace.converged() {
        return Err(MetaError::BaselineFailed(trace.termination));
    }
    let baseline = Phase { trace, energy };

    let (trace, energy) = meter.measure(&mut || solve(prob, x0, &cfg, WorkingPrecision::Binary32))?;
    if !trace.converged() {
        return Err(MetaError::SingleFailed(trace.termination));
    }
    let single_phase = Phase { trace, energy };
    Ok(ReinvestBase { eps, baseline, single_phase })
}

/// Step four for one factor: continue the binary32 result in binary64
/// until the residual drops to `eps / factor`.
pub fn reinvest_with_base(
    prob: &ProblemInstance,
    base: &ReinvestBase,
    factor: f64,
    meter: &mut dyn EnergyMeter,
    cfg: &SolverConfig,
) -> Result<ReinvestReport, MetaError> {
    check_factor(factor)?;
    let eps = base.eps;
    let cfg = cfg.with_epsilon(eps / factor);
    let start = &base.single_phase.trace.final_x;
    let (trace, energy) = meter.measure(&mut || solve_warm(prob, start, &cfg, WorkingPrecision::Binary64))?;
    let double_phase = Phase { trace, energy };

    let budget_j = base.baseline.joules();
    let hybrid_energy_j = base.single_phase.joules() + double_phase.joules();
    let hybrid_std_dev = base.single_phase.energy.std_dev.hypot(double_phase.energy.std_dev);
    let success = hybrid_energy_j <= budget_j;
    let termination = double_phase.trace.termination;
    let outcome = match termination {
        Termination::ToleranceMet if success => ReinvestOutcome::Improved,
        Termination::ToleranceMet => ReinvestOutcome::BudgetExceeded,
        t if t.is_precision_signal() => ReinvestOutcome::FactorTooLarge,
        t => ReinvestOutcome::Failed(t),
    };
    Ok(ReinvestReport {
        eps,
        factor,
        budget_j,
        baseline: base.baseline.clone(),
        single_phase: base.single_phase.clone(),
        improvement_factor: eps / double_phase.trace.final_fnorm,
        double_phase,
        hybrid_energy_j,
        hybrid_std_dev,
        success,
        leftover_j: budget_j - hybrid_energy_j,
        outcome,
    })
}

/// The full reinvestment experiment for one improvement factor.
pub fn reinvest_experiment(
    prob: &ProblemInstance,
    x0: &[f64],
    eps: f64,
    factor: f64,
    meter: &mut dyn EnergyMeter,
    cfg: &SolverConfig,
) -> Result<ReinvestReport, MetaError> {
    check_factor(factor)?;
    let base = reinvest_base(prob, x0, eps, meter, cfg)?;
    reinvest_with_base(prob, &base, factor, meter, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradationRow {
    pub factor: f64,
    pub result: Result<ReinvestReport, String>,
}

impl GradationRow {
    pub fn report(&self) -> Option<&ReinvestReport> {
        self.result.as_ref().ok()
    }

    /// Outer/inner iterations of the binary64 stage.
    pub fn split(&self) -> Option<(usize, usize)> {
        self.report()
            .map(|r| (r.double_phase.trace.outer_iterations(), r.double_phase.trace.inner_iterations()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradationTable {
    pub base: ReinvestBase,
    pub rows: Vec<GradationRow>,
}

/// Reinvestment at several improvement factors over one shared baseline and
/// binary32 run. A failing factor is recorded and the sweep continues.
pub fn gradation_sweep(
    prob: &ProblemInstance,
    x0: &[f64],
    eps: f64,
    factors: &[f64],
    meter: &mut dyn EnergyMeter,
    cfg: &SolverConfig,
) -> Result<GradationTable, MetaError> {
    let base = reinvest_base(prob, x0, eps, meter, cfg)?;
    let rows = factors
        .iter()
        .map(|&factor| GradationRow {
            factor,
            result: reinvest_with_base(prob, &base, factor, meter, cfg).map_err(|e| e.to_string()),
        })
        .collect();
    Ok(GradationTable { base, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use WorkingPrecision::*;

    #[test]
    fn ladder_validation() {
        assert!(PrecisionLadder::new(vec![]).is_err());
        let bad = vec![
            LadderLevel { precision: Binary64, tolerance: 1e-6 },
            LadderLevel { precision: Binary32, tolerance: 1e-6 },
        ];
        assert!(PrecisionLadder::new(bad).is_err());
        let bad = vec![
            LadderLevel { precision: Binary32, tolerance: 1e-6 },
            LadderLevel { precision: Binary64, tolerance: 1e-5 },
        ];
        assert!(PrecisionLadder::new(bad).is_err());
        let bad = vec![LadderLevel { precision: Binary32, tolerance: 0.0 }];
        assert!(PrecisionLadder::new(bad).is_err());
    }

    #[test]
    fn auto_ladder_respects_floors() {
        let l = PrecisionLadder::auto(1e-10, &[Binary32, Binary64], DEFAULT_KAPPA, 0.0).unwrap();
        assert_eq!(l.levels()[0].tolerance, 4.0 * 2f64.powi(-24));
        assert_eq!(l.levels()[1].tolerance, 1e-10);
        let l = PrecisionLadder::auto(1e-3, &[Binary32, Binary64], DEFAULT_KAPPA, 0.0).unwrap();
        assert_eq!(l.levels()[0].tolerance, 1e-3);
    }

    #[test]
    fn factor_and_tolerance_checks() {
        assert!(matches!(check_factor(0.5), Err(MetaError::InvalidFactor(_))));
        assert!(check_factor(1.0).is_ok());
        assert!(matches!(check_single_feasible(1e-9), Err(MetaError::TooTightForSingle { .. })));
        assert!(check_single_feasible(1e-6).is_ok());
    }
}
