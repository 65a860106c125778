//! Operation counters carried by a single solve.
//!
//! `flops` counts floating-point arithmetic; `loads` counts floating-point
//! values streamed through vector reads and writes in the solver kernels.
//! Both are what the modeled energy backend prices.

use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

use crate::precision::Real;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub flops: u64,
    pub loads: u64,
    /// Jacobian (operator) applications.
    pub jvps: u64,
    /// Residual evaluations.
    pub residuals: u64,
}

impl OpCounts {
    /// Record a kernel touching `n` elements.
    #[inline]
    pub fn kernel(&mut self, n: usize, flops_per_elem: u64, loads_per_elem: u64) {
        let n = n as u64;
        self.flops += n * flops_per_elem;
        self.loads += n * loads_per_elem;
    }
}

impl AddAssign for OpCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.flops += rhs.flops;
        self.loads += rhs.loads;
        self.jvps += rhs.jvps;
        self.residuals += rhs.residuals;
    }
}

impl Add for OpCounts {
    type Output = OpCounts;

    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl Sub for OpCounts {
    type Output = OpCounts;

    fn sub(self, rhs: Self) -> Self {
        OpCounts {
            flops: self.flops - rhs.flops,
            loads: self.loads - rhs.loads,
            jvps: self.jvps - rhs.jvps,
            residuals: self.residuals - rhs.residuals,
        }
    }
}

// Counted level-1 kernels. Reductions run sequentially in the working
// precision so traces are reproducible.

pub(crate) fn dot<T: Real>(a: &[T], b: &[T], c: &mut OpCounts) -> T {
    debug_assert_eq!(a.len(), b.len());
    c.kernel(a.len(), 2, 2);
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub(crate) fn norm2<T: Real>(a: &[T], c: &mut OpCounts) -> T {
    c.kernel(a.len(), 2, 1);
    a.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt()
}

/// y += alpha * x
pub(crate) fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T], c: &mut OpCounts) {
    debug_assert_eq!(x.len(), y.len());
    c.kernel(x.len(), 2, 3);
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

/// out = a + alpha * b
pub(crate) fn add_scaled<T: Real>(a: &[T], alpha: T, b: &[T], out: &mut [T], c: &mut OpCounts) {
    c.kernel(a.len(), 2, 3);
    for ((o, &ai), &bi) in out.iter_mut().zip(a).zip(b) {
        *o = ai + alpha * bi;
    }
}
