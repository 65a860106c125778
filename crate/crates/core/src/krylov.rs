//! Unpreconditioned, matrix-free BI-CGSTAB used as the inner solver of the
//! inexact Newton iteration.
//!
//! The recurrence follows the classic van der Vorst formulation with the
//! iterate written as a correction `s` from zero. The loop runs while
//! `‖r‖ > η‖F(x)‖`, where `‖F(x)‖` is passed in as `fnorm`.
//!
//! Exact-zero tests are replaced by comparisons against the smallest normal
//! number of the working precision.

use serde::{Deserialize, Serialize};

use crate::counters::{self, OpCounts};
use crate::precision::Real;

/// A matrix-free linear operator `v -> A v`.
pub trait LinearOperator<T: Real> {
    fn dim(&self) -> usize;

    /// Writes `A v` into `out`, recording its cost in `counts`.
    fn apply(&self, v: &[T], out: &mut [T], counts: &mut OpCounts);
}

/// Wraps a closure as an operator. Each application counts as one product
/// with `n` flops and `2n` loads unless the closure records more itself.
pub struct FnOperator<F> {
    n: usize,
    f: F,
}

impl<F> FnOperator<F> {
    pub fn new(n: usize, f: F) -> Self {
        FnOperator { n, f }
    }
}

impl<T: Real, F: Fn(&[T], &mut [T])> LinearOperator<T> for FnOperator<F> {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, v: &[T], out: &mut [T], counts: &mut OpCounts) {
        counts.jvps += 1;
        counts.kernel(self.n, 1, 2);
        (self.f)(v, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InnerStatus {
    /// Loop guard satisfied: `‖r‖ ≤ η‖F‖`.
    Converged,
    /// `‖u‖` vanished; the half-step already solves the system.
    EarlyExitZeroU,
    /// `ρ`, `⟨q0, v⟩`, `ω` or `⟨t, t⟩` vanished.
    BreakdownRhoZero,
    MaxInnerExceeded,
}

impl InnerStatus {
    pub fn produced_direction(self) -> bool {
        matches!(self, InnerStatus::Converged | InnerStatus::EarlyExitZeroU)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerResult<T> {
    /// Last computed correction `s`.
    pub direction: Vec<T>,
    pub inner_iterations: usize,
    pub status: InnerStatus,
    /// Norm of the recursively updated residual at exit.
    pub residual_norm: T,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KrylovError {
    #[error("non-finite scalar in BI-CGSTAB recurrence at inner iteration {iteration}")]
    NonFiniteInner { iteration: usize },
    #[error("right-hand side length {got} does not match operator dimension {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid BI-CGSTAB input: {0}")]
    InvalidInput(&'static str),
}

/// Approximately solve `A s = minus_f` until `‖A s - minus_f‖ ≤ eta * fnorm`.
///
/// `fnorm` must equal `‖minus_f‖`; it seeds `‖r⁰‖`.
pub fn bicgstab<T: Real, A: LinearOperator<T> + ?Sized>(
    op: &A,
    minus_f: &[T],
    fnorm: T,
    eta: T,
    max_inner: usize,
    counts: &mut OpCounts,
) -> Result<InnerResult<T>, KrylovError> {
    let n = op.dim();
    if minus_f.len() != n {
        return Err(KrylovError::LengthMismatch { expected: n, got: minus_f.len() });
    }
    if !(fnorm > T::zero()) {
        return Err(KrylovError::InvalidInput("fnorm must be positive"));
    }
    if !(eta >= T::zero() && eta < T::one()) {
        return Err(KrylovError::InvalidInput("eta must lie in [0, 1)"));
    }
    if max_inner == 0 {
        return Err(KrylovError::InvalidInput("max_inner must be at least 1"));
    }

    let tiny = T::tiny();
    let zero = T::zero();

    let mut r = minus_f.to_vec();
    let q0 = r.clone();
    let mut s = vec![zero; n];
    let mut v = vec![zero; n];
    let mut p = vec![zero; n];
    let mut u = vec![zero; n];
    let mut t = vec![zero; n];

    let mut rho_prev = T::one();
    let mut alpha = T::one();
    let mut omega = T::one();
    let mut rnorm = fnorm;
    let target = eta * fnorm;
    let mut i = 0usize;

    let finish = |s: Vec<T>, i: usize, status: InnerStatus, rnorm: T| InnerResult {
        direction: s,
        inner_iterations: i,
        status,
        residual_norm: rnorm,
    };

    while rnorm > target {
        if i == max_inner {
            return Ok(finish(s, i, InnerStatus::MaxInnerExceeded, rnorm));
        }
        i += 1;

        let rho = counters::dot(&q0, &r, counts);
        if !rho.is_finite() {
            return Err(KrylovError::NonFiniteInner { iteration: i });
        }
        if rho.abs() < tiny || omega.abs() < tiny {
            return Ok(finish(s, i, InnerStatus::BreakdownRhoZero, rnorm));
        }
        let beta = (rho / rho_prev) * (alpha / omega);

        // p = r + beta (p - omega v)
        counts.kernel(n, 4, 4);
        for ((pi, &ri), &vi) in p.iter_mut().zip(&r).zip(&v) {
            *pi = ri + beta * (*pi - omega * vi);
        }

        op.apply(&p, &mut v, counts);
        let q0v = counters::dot(&q0, &v, counts);
        if !q0v.is_finite() {
            return Err(KrylovError::NonFiniteInner { iteration: i });
        }
        if q0v.abs() < tiny {
            return Ok(finish(s, i, InnerStatus::BreakdownRhoZero, rnorm));
        }
        alpha = rho / q0v;

        counters::add_scaled(&r, -alpha, &v, &mut u, counts);
        let unorm = counters::norm2(&u, counts);
        if !unorm.is_finite() {
            return Err(KrylovError::NonFiniteInner { iteration: i });
        }
        if unorm < tiny {
            counters::axpy(alpha, &p, &mut s, counts);
            return Ok(finish(s, i, InnerStatus::EarlyExitZeroU, unorm));
        }

        op.apply(&u, &mut t, counts);
        let tt = counters::dot(&t, &t, counts);
        if !tt.is_finite() {
            return Err(KrylovError::NonFiniteInner { iteration: i });
        }
        if tt < tiny {
            return Ok(finish(s, i, InnerStatus::BreakdownRhoZero, rnorm));
        }
        omega = counters::dot(&t, &u, counts) / tt;

        // s += alpha p + omega u
        counts.kernel(n, 4, 4);
        for ((si, &pi), &ui) in s.iter_mut().zip(&p).zip(&u) {
            *si = *si + alpha * pi + omega * ui;
        }
        counters::add_scaled(&u, -omega, &t, &mut r, counts);
        rnorm = counters::norm2(&r, counts);
        if !(rnorm.is_finite() && omega.is_finite()) {
            return Err(KrylovError::NonFiniteInner { iteration: i });
        }
        rho_prev = rho;
    }

    Ok(finish(s, i, InnerStatus::Converged, rnorm))
}
