//! Benchmark nonlinear systems: a central-difference Laplace system and the
//! first-order conditions of the chained Rosenbrock function.
//!
//! Both have tridiagonal Jacobians. Residuals and Jacobian products are
//! evaluated matrix-free in whatever scalar type the caller uses, and the
//! Jacobian is stored as three diagonals.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::counters::OpCounts;
use crate::krylov::LinearOperator;
use crate::precision::Real;

// Per-element costs of the kernels below.
const LAPLACE_RESIDUAL_FLOPS: u64 = 4;
const ROSENBROCK_RESIDUAL_FLOPS: u64 = 11;
const RESIDUAL_LOADS: u64 = 2;
const ROSENBROCK_JACOBIAN_FLOPS: u64 = 7;
const JACOBIAN_LOADS: u64 = 4;
const TRIDIAG_APPLY_FLOPS: u64 = 5;
const TRIDIAG_APPLY_LOADS: u64 = 5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProblemError {
    #[error("problem dimension must be at least 2, got {0}")]
    InvalidDimension(usize),
    #[error("Rosenbrock parameter a must be positive and finite, got {0}")]
    InvalidParameter(f64),
    #[error("vector length {got} does not match problem dimension {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value in residual or Jacobian product")]
    NonFiniteResidual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Laplace,
    Rosenbrock,
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemKind::Laplace => f.write_str("laplace"),
            ProblemKind::Rosenbrock => f.write_str("rosenbrock"),
        }
    }
}

impl FromStr for ProblemKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "laplace" => Ok(ProblemKind::Laplace),
            "rosenbrock" => Ok(ProblemKind::Rosenbrock),
            other => Err(format!("unknown problem `{other}` (expected laplace or rosenbrock)")),
        }
    }
}

/// An immutable problem definition; safe to share between concurrent solves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    kind: ProblemKind,
    n: usize,
    a: f64,
}

impl ProblemInstance {
    pub fn new(kind: ProblemKind, n: usize) -> Result<Self, ProblemError> {
        match kind {
            ProblemKind::Laplace => Self::laplace(n),
            ProblemKind::Rosenbrock => Self::rosenbrock(n, 1.0),
        }
    }

    pub fn laplace(n: usize) -> Result<Self, ProblemError> {
        if n < 2 {
            return Err(ProblemError::InvalidDimension(n));
        }
        Ok(ProblemInstance { kind: ProblemKind::Laplace, n, a: 1.0 })
    }

    /// Chained Rosenbrock with conditioning parameter `a` (standard value 1).
    pub fn rosenbrock(n: usize, a: f64) -> Result<Self, ProblemError> {
        if n < 2 {
            return Err(ProblemError::InvalidDimension(n));
        }
        if !(a > 0.0 && a.is_finite()) {
            return Err(ProblemError::InvalidParameter(a));
        }
        Ok(ProblemInstance { kind: ProblemKind::Rosenbrock, n, a })
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// Laplace right-hand side entry `b_i` (0-based index).
    pub fn laplace_rhs(&self, i: usize) -> f64 {
        if i == 0 {
            1.0
        } else if i + 1 == self.n {
            4.0
        } else {
            -2.0
        }
    }

    fn check_len(&self, len: usize) -> Result<(), ProblemError> {
        if len != self.n {
            return Err(ProblemError::LengthMismatch { expected: self.n, got: len });
        }
        Ok(())
    }

    /// Evaluate F(x) into `out`.
    pub fn residual_into<T: Real>(
        &self,
        x: &[T],
        out: &mut [T],
        counts: &mut OpCounts,
    ) -> Result<(), ProblemError> {
        self.check_len(x.len())?;
        self.check_len(out.len())?;
        let n = self.n;
        counts.residuals += 1;
        match self.kind {
            ProblemKind::Laplace => {
                counts.kernel(n, LAPLACE_RESIDUAL_FLOPS, RESIDUAL_LOADS);
                let four = T::from_f64(4.0);
                let b_first = T::from_f64(1.0);
                let b_mid = T::from_f64(-2.0);
                let b_last = T::from_f64(4.0);
                out[0] = b_first + four * x[0] - x[1];
                for i in 1..n - 1 {
                    out[i] = b_mid - x[i - 1] + four * x[i] - x[i + 1];
                }
                out[n - 1] = b_last - x[n - 2] + four * x[n - 1];
            }
            ProblemKind::Rosenbrock => {
                counts.kernel(n, ROSENBROCK_RESIDUAL_FLOPS, RESIDUAL_LOADS);
                let one = T::one();
                let two_a = T::from_f64(2.0 * self.a);
                let c200 = T::from_f64(200.0);
                let c400 = T::from_f64(400.0);
                out[0] = two_a * (x[0] - one) - c400 * x[0] * (x[1] - x[0] * x[0]);
                for i in 1..n - 1 {
                    out[i] = c200 * (x[i] - x[i - 1] * x[i - 1]) + two_a * (x[i] - one)
                        - c400 * x[i] * (x[i + 1] - x[i] * x[i]);
                }
                out[n - 1] = c200 * (x[n - 1] - x[n - 2] * x[n - 2]);
            }
        }
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(ProblemError::NonFiniteResidual)
        }
    }

    pub fn residual<T: Real>(&self, x: &[T], counts: &mut OpCounts) -> Result<Vec<T>, ProblemError> {
        let mut out = vec![T::zero(); self.n];
        self.residual_into(x, &mut out, counts)?;
        Ok(out)
    }

    /// Assemble the analytic tridiagonal Jacobian at `x`.
    pub fn jacobian<T: Real>(
        &self,
        x: &[T],
        counts: &mut OpCounts,
    ) -> Result<TridiagonalJacobian<T>, ProblemError> {
        self.check_len(x.len())?;
        let n = self.n;
        let mut lower = vec![T::zero(); n];
        let mut diag = vec![T::zero(); n];
        let mut upper = vec![T::zero(); n];
        match self.kind {
            ProblemKind::Laplace => {
                counts.kernel(n, 0, JACOBIAN_LOADS - 1);
                let four = T::from_f64(4.0);
                for i in 0..n {
                    diag[i] = four;
                    if i > 0 {
                        lower[i] = -T::one();
                    }
                    if i + 1 < n {
                        upper[i] = -T::one();
                    }
                }
            }
            ProblemKind::Rosenbrock => {
                // d/dx of the residual above, row by row:
                //   row 0:   [2a - 400 x1 + 1200 x0^2,  -400 x0]
                //   row i:   [-400 x_{i-1},  200 + 2a - 400 x_{i+1} + 1200 x_i^2,  -400 x_i]
                //   row n-1: [-400 x_{n-2},  200]
                counts.kernel(n, ROSENBROCK_JACOBIAN_FLOPS, JACOBIAN_LOADS);
                let two_a = T::from_f64(2.0 * self.a);
                let c200 = T::from_f64(200.0);
                let c400 = T::from_f64(400.0);
                let c1200 = T::from_f64(1200.0);
                for i in 0..n {
                    if i > 0 {
                        lower[i] = -c400 * x[i - 1];
                    }
                    if i + 1 < n {
                        upper[i] = -c400 * x[i];
                        let base = if i == 0 { two_a } else { c200 + two_a };
                        diag[i] = base - c400 * x[i + 1] + c1200 * x[i] * x[i];
                    } else {
                        diag[i] = c200;
                    }
                }
            }
        }
        let jac = TridiagonalJacobian { lower, diag, upper };
        if jac.is_finite() {
            Ok(jac)
        } else {
            Err(ProblemError::NonFiniteResidual)
        }
    }

    /// ∇F(x)·v.
    pub fn jacobian_vector_product<T: Real>(
        &self,
        x: &[T],
        v: &[T],
        counts: &mut OpCounts,
    ) -> Result<Vec<T>, ProblemError> {
        self.check_len(v.len())?;
        let jac = self.jacobian(x, counts)?;
        let mut out = vec![T::zero(); self.n];
        jac.apply(v, &mut out, counts);
        if out.iter().all(|o| o.is_finite()) {
            Ok(out)
        } else {
            Err(ProblemError::NonFiniteResidual)
        }
    }
}

/// Tridiagonal matrix stored as three length-n diagonals.
/// `lower[0]` and `upper[n-1]` are unused and held at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalJacobian<T> {
    pub lower: Vec<T>,
    pub diag: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Real> TridiagonalJacobian<T> {
    fn is_finite(&self) -> bool {
        self.lower
            .iter()
            .chain(&self.diag)
            .chain(&self.upper)
            .all(|v| v.is_finite())
    }
}

impl<T: Real> LinearOperator<T> for TridiagonalJacobian<T> {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, v: &[T], out: &mut [T], counts: &mut OpCounts) {
        let n = self.diag.len();
        counts.jvps += 1;
        counts.kernel(n, TRIDIAG_APPLY_FLOPS, TRIDIAG_APPLY_LOADS);
        if n == 1 {
            out[0] = self.diag[0] * v[0];
            return;
        }
        out[0] = self.diag[0] * v[0] + self.upper[0] * v[1];
        for i in 1..n - 1 {
            out[i] = self.lower[i] * v[i - 1] + self.diag[i] * v[i] + self.upper[i] * v[i + 1];
        }
        out[n - 1] = self.lower[n - 1] * v[n - 2] + self.diag[n - 1] * v[n - 1];
    }
}
