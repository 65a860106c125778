//! Outer inexact Newton iteration at a fixed working precision.
//!
//! Each outer step assembles the tridiagonal Jacobian, asks BI-CGSTAB for a
//! direction satisfying the forcing criterion, backtracks along it with an
//! Armijo test on `‖F‖`, and updates the forcing term. Failures of the inner
//! solve or the line search end the solve with a termination status rather
//! than an error, so callers can escalate precision.

use serde::{Deserialize, Serialize};

use crate::counters::{self, OpCounts};
use crate::krylov::{bicgstab, InnerStatus, KrylovError};
use crate::precision::{cast_from_f64, widen_to_f64, Real, WorkingPrecision};
use crate::problems::{ProblemError, ProblemInstance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Absolute tolerance on `‖F(x)‖`.
    pub epsilon: f64,
    pub eta0: f64,
    pub max_outer: usize,
    /// Inner iteration cap; `None` means `2n`.
    pub max_inner: Option<usize>,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            epsilon: 1e-6,
            eta0: 0.5,
            max_outer: 200,
            max_inner: None,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("epsilon must be positive and finite, got {0}")]
    Epsilon(f64),
    #[error("eta0 must lie in (0, 1), got {0}")]
    Eta0(f64),
    #[error("armijo_c must lie in (0, 1), got {0}")]
    ArmijoC(f64),
    #[error("backtrack_factor must lie in (0, 1), got {0}")]
    BacktrackFactor(f64),
    #[error("max_inner must be at least 1")]
    MaxInner,
}

impl SolverConfig {
    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(ConfigError::Epsilon(self.epsilon));
        }
        if !open_unit(self.eta0) {
            return Err(ConfigError::Eta0(self.eta0));
        }
        if !open_unit(self.armijo_c) {
            return Err(ConfigError::ArmijoC(self.armijo_c));
        }
        if !open_unit(self.backtrack_factor) {
            return Err(ConfigError::BacktrackFactor(self.backtrack_factor));
        }
        if self.max_inner == Some(0) {
            return Err(ConfigError::MaxInner);
        }
        Ok(())
    }

    pub fn inner_cap(&self, n: usize) -> usize {
        self.max_inner.unwrap_or(2 * n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    ToleranceMet,
    LineSearchFailure,
    InnerBreakdown,
    MaxOuterExceeded,
    NonFinite,
}

impl Termination {
    /// Whether the status signals that the precision was too low.
    pub fn is_precision_signal(self) -> bool {
        matches!(self, Termination::LineSearchFailure | Termination::InnerBreakdown)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepStatus {
    Accepted,
    LineSearchFailure,
    InnerBreakdown,
    NonFinite,
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub k: usize,
    pub fnorm_before: f64,
    pub fnorm_after: f64,
    pub eta: f64,
    pub inner_iterations: usize,
    pub inner_status: Option<InnerStatus>,
    /// Accepted step length; 0 when the step was rejected.
    pub step_length: f64,
    pub backtracks: usize,
    pub precision: WorkingPrecision,
    pub counts: OpCounts,
    pub status: StepStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub records: Vec<OuterRecord>,
    pub initial_fnorm: f64,
    pub final_x: Vec<f64>,
    pub final_fnorm: f64,
    pub termination: Termination,
    pub precision: WorkingPrecision,
    pub epsilon: f64,
}

impl SolveTrace {
    /// Accepted outer iterations.
    pub fn outer_iterations(&self) -> usize {
        self.records.iter().filter(|r| r.status == StepStatus::Accepted).count()
    }

    /// Inner iterations over every outer iteration, rejected ones included.
    pub fn inner_iterations(&self) -> usize {
        self.records.iter().map(|r| r.inner_iterations).sum()
    }

    pub fn total_counts(&self) -> OpCounts {
        self.records.iter().fold(OpCounts::default(), |acc, r| acc + r.counts)
    }

    pub fn total_flops(&self) -> u64 {
        self.total_counts().flops
    }

    pub fn total_loads(&self) -> u64 {
        self.total_counts().loads
    }

    pub fn converged(&self) -> bool {
        self.termination == Termination::ToleranceMet
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolveError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("initial iterate contains non-finite entries")]
    NonFiniteStart,
}

/// `η_{k+1} = min(√‖F(x^{k+1})‖, 1/2)`.
pub fn update_forcing<T: Real>(fnorm_next: T) -> T {
    fnorm_next.sqrt().min(T::from_f64(0.5))
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LineSearchError {
    #[error("no step length satisfied the sufficient-decrease test")]
    LineSearchFailure { backtracks: usize },
    #[error("line search requires ‖F(x)‖ > 0")]
    ZeroResidual,
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchStep<T> {
    pub step_length: T,
    pub backtracks: usize,
    pub x_next: Vec<T>,
    pub f_next: Vec<T>,
    pub fnorm_next: T,
}

/// Backtracking Armijo search on the merit function `‖F‖`.
///
/// Tries `δ = 1, β, β², …, β^max_backtracks` and accepts the first with
/// `‖F(x + δs)‖ ≤ (1 - c δ) ‖F(x)‖` and `‖F(x + δs)‖ < ‖F(x)‖`. Trial points
/// whose residual overflows count as insufficient decrease.
pub fn armijo_line_search<T: Real>(
    prob: &ProblemInstance,
    x: &[T],
    s: &[T],
    fnorm0: T,
    cfg: &SolverConfig,
    counts: &mut OpCounts,
) -> Result<LineSearchStep<T>, LineSearchError> {
    if !(fnorm0 > T::zero()) {
        return Err(LineSearchError::ZeroResidual);
    }
    let n = prob.dim();
    if s.len() != n {
        return Err(ProblemError::LengthMismatch { expected: n, got: s.len() }.into());
    }
    let c = T::from_f64(cfg.armijo_c);
    let beta = T::from_f64(cfg.backtrack_factor);
    let mut delta = T::one();
    let mut x_trial = vec![T::zero(); n];
    let mut f_trial = vec![T::zero(); n];
    for backtracks in 0..=cfg.max_backtracks {
        counters::add_scaled(x, delta, s, &mut x_trial, counts);
        match prob.residual_into(&x_trial, &mut f_trial, counts) {
            Ok(()) => {
                let fnorm = counters::norm2(&f_trial, counts);
                // 1 - c δ rounds to 1 in binary32 once δ is small.
                if fnorm <= (T::one() - c * delta) * fnorm0 && fnorm < fnorm0 {
                    return Ok(LineSearchStep {
                        step_length: delta,
                        backtracks,
                        x_next: x_trial,
                        f_next: f_trial,
                        fnorm_next: fnorm,
                    });
                }
            }
            Err(ProblemError::NonFiniteResidual) => {}
            Err(e) => return Err(e.into()),
        }
        delta = delta * beta;
    }
    Err(LineSearchError::LineSearchFailure { backtracks: cfg.max_backtracks })
}

/// Run the inexact Newton method from `x0` with `η_0 = cfg.eta0`.
pub fn newton_solve<T: Real>(
    prob: &ProblemInstance,
    x0: &[T],
    cfg: &SolverConfig,
) -> Result<SolveTrace, SolveError> {
    run(prob, x0, cfg, ForcingStart::Fixed)
}

/// Run from a warm start: the first forcing term continues the update rule
/// from `‖F(x0)‖` instead of restarting at `cfg.eta0`.
pub fn newton_solve_warm<T: Real>(
    prob: &ProblemInstance,
    x0: &[T],
    cfg: &SolverConfig,
) -> Result<SolveTrace, SolveError> {
    run(prob, x0, cfg, ForcingStart::Continue)
}

/// Precision-dispatching entry point. `x0` is rounded to the working
/// precision before the solve.
pub fn solve(
    prob: &ProblemInstance,
    x0: &[f64],
    cfg: &SolverConfig,
    prec: WorkingPrecision,
) -> Result<SolveTrace, SolveError> {
    match prec {
        WorkingPrecision::Binary32 => newton_solve(prob, &cast_from_f64::<f32>(x0), cfg),
        WorkingPrecision::Binary64 => newton_solve(prob, x0, cfg),
    }
}

/// Warm-started variant of [`solve`].
pub fn solve_warm(
    prob: &ProblemInstance,
    x0: &[f64],
    cfg: &SolverConfig,
    prec: WorkingPrecision,
) -> Result<SolveTrace, SolveError> {
    match prec {
        WorkingPrecision::Binary32 => newton_solve_warm(prob, &cast_from_f64::<f32>(x0), cfg),
        WorkingPrecision::Binary64 => newton_solve_warm(prob, x0, cfg),
    }
}

#[derive(Clone, Copy)]
enum ForcingStart {
    Fixed,
    Continue,
}

fn run<T: Real>(
    prob: &ProblemInstance,
    x0: &[T],
    cfg: &SolverConfig,
    start: ForcingStart,
) -> Result<SolveTrace, SolveError> {
    cfg.validate()?;
    let n = prob.dim();
    if x0.len() != n {
        return Err(ProblemError::LengthMismatch { expected: n, got: x0.len() }.into());
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(SolveError::NonFiniteStart);
    }

    let prec = T::PRECISION;
    let epsilon = T::from_f64(cfg.epsilon);
    let max_inner = cfg.inner_cap(n);

    let mut x = x0.to_vec();
    let mut setup = OpCounts::default();
    let mut records = Vec::new();

    let finish = |x: &[T], fnorm: T, initial: T, records, termination| SolveTrace {
        records,
        initial_fnorm: initial.widen(),
        final_x: widen_to_f64(x),
        final_fnorm: fnorm.widen(),
        termination,
        precision: prec,
        epsilon: cfg.epsilon,
    };

    let mut f = match prob.residual(&x, &mut setup) {
        Ok(f) => f,
        Err(ProblemError::NonFiniteResidual) => {
            return Ok(finish(&x, T::infinity(), T::infinity(), records, Termination::NonFinite))
        }
        Err(e) => return Err(e.into()),
    };
    let mut fnorm = counters::norm2(&f, &mut setup);
    let initial = fnorm;
    let mut eta = match start {
        ForcingStart::Fixed => T::from_f64(cfg.eta0),
        ForcingStart::Continue => update_forcing(fnorm),
    };

    let mut k = 0usize;
    while fnorm > epsilon {
        if k == cfg.max_outer {
            return Ok(finish(&x, fnorm, initial, records, Termination::MaxOuterExceeded));
        }
        let mut counts = OpCounts::default();
        let mut record = OuterRecord {
            k,
            fnorm_before: fnorm.widen(),
            fnorm_after: fnorm.widen(),
            eta: eta.widen(),
            inner_iterations: 0,
            inner_status: None,
            step_length: 0.0,
            backtracks: 0,
            precision: prec,
            counts,
            status: StepStatus::Accepted,
        };

        let jac = match prob.jacobian(&x, &mut counts) {
            Ok(j) => j,
            Err(ProblemError::NonFiniteResidual) => {
                record.status = StepStatus::NonFinite;
                record.counts = counts;
                records.push(record);
                return Ok(finish(&x, fnorm, initial, records, Termination::NonFinite));
            }
            Err(e) => return Err(e.into()),
        };
        let minus_f: Vec<T> = f.iter().map(|&v| -v).collect();
        let inner = match bicgstab(&jac, &minus_f, fnorm, eta, max_inner, &mut counts) {
            Ok(inner) => inner,
            Err(KrylovError::NonFiniteInner { iteration }) => {
                record.inner_iterations = iteration;
                record.status = StepStatus::NonFinite;
                record.counts = counts;
                records.push(record);
                return Ok(finish(&x, fnorm, initial, records, Termination::NonFinite));
            }
            Err(e) => unreachable!("inputs validated before the inner solve: {e}"),
        };
        record.inner_iterations = inner.inner_iterations;
        record.inner_status = Some(inner.status);
        if !inner.status.produced_direction() {
            record.status = StepStatus::InnerBreakdown;
            record.counts = counts;
            records.push(record);
            return Ok(finish(&x, fnorm, initial, records, Termination::InnerBreakdown));
        }

        match armijo_line_search(prob, &x, &inner.direction, fnorm, cfg, &mut counts) {
            Ok(step) => {
                record.step_length = step.step_length.widen();
                record.backtracks = step.backtracks;
                record.fnorm_after = step.fnorm_next.widen();
                record.counts = counts;
                records.push(record);
                x = step.x_next;
                f = step.f_next;
                fnorm = step.fnorm_next;
                eta = update_forcing(fnorm);
            }
            Err(LineSearchError::LineSearchFailure { backtracks }) => {
                record.backtracks = backtracks;
                record.status = StepStatus::LineSearchFailure;
                record.counts = counts;
                records.push(record);
                return Ok(finish(&x, fnorm, initial, records, Termination::LineSearchFailure));
            }
            Err(LineSearchError::ZeroResidual) => unreachable!("loop guard keeps ‖F‖ > ε > 0"),
            Err(LineSearchError::Problem(e)) => return Err(e.into()),
        }
        k += 1;
    }
    Ok(finish(&x, fnorm, initial, records, Termination::ToleranceMet))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forcing_update() {
        assert!((update_forcing(0.09f64) - 0.3).abs() < 1e-15);
        assert_eq!(update_forcing(1.0f64), 0.5);
        assert_eq!(update_forcing(0.0f64), 0.0);
        assert_eq!(update_forcing(1e6f32), 0.5);
    }

    #[test]
    fn config_validation() {
        let ok = SolverConfig::default();
        assert!(ok.validate().is_ok());
        assert_eq!(ok.with_epsilon(-1.0).validate(), Err(ConfigError::Epsilon(-1.0)));
        let bad = SolverConfig { eta0: 1.0, ..ok };
        assert_eq!(bad.validate(), Err(ConfigError::Eta0(1.0)));
        let bad = SolverConfig { backtrack_factor: 0.0, ..ok };
        assert!(bad.validate().is_err());
        let bad = SolverConfig { armijo_c: 1.5, ..ok };
        assert!(bad.validate().is_err());
        let bad = SolverConfig { max_inner: Some(0), ..ok };
        assert_eq!(bad.validate(), Err(ConfigError::MaxInner));
        assert_eq!(ok.inner_cap(7), 14);
    }

    #[test]
    fn start_at_root_takes_no_iterations() {
        let p = ProblemInstance::rosenbrock(4, 1.0).unwrap();
        let cfg = SolverConfig::default().with_epsilon(1e-3);
        for prec in [WorkingPrecision::Binary32, WorkingPrecision::Binary64] {
            let t = solve(&p, &[1.0; 4], &cfg, prec).unwrap();
            assert_eq!(t.termination, Termination::ToleranceMet);
            assert!(t.records.is_empty());
            assert_eq!(t.precision, prec);
        }
    }

    #[test]
    fn line_search_requires_positive_residual() {
        let p = ProblemInstance::rosenbrock(4, 1.0).unwrap();
        let mut c = OpCounts::default();
        let r = armijo_line_search(&p, &[1.0f64; 4], &[0.1; 4], 0.0, &SolverConfig::default(), &mut c);
        assert_eq!(r, Err(LineSearchError::ZeroResidual));
    }

    #[test]
    fn non_finite_start_rejected() {
        let p = ProblemInstance::laplace(3).unwrap();
        let r = solve(&p, &[0.0, f64::NAN, 0.0], &SolverConfig::default(), WorkingPrecision::Binary64);
        assert_eq!(r, Err(SolveError::NonFiniteStart));
    }
}
