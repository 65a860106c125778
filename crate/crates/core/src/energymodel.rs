//! Closed-form energy and accuracy model for two-level precision schemes.
//!
//! Energy per outer iteration at `p` bits is `k n E_c p + l n r E_t p²`
//! (compute energy, transfer energy and miss rate all linear in `p`). An
//! iteration contracts the residual by `λ` (linear rate) or squares it and
//! divides by `λ` (quadratic rate), and a level with `p` bits and slack `s`
//! stalls at the attainable accuracy `2^(s - p)`.
//!
//! All logarithms are base 2 and iteration counts are real-valued.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("contraction factor lambda must exceed 1, got {0}")]
    Lambda(f64),
    #[error("accuracy {0} must lie in (0, 1]")]
    Accuracy(f64),
    #[error("energy ratio must be positive, got {0}")]
    EnergyRatio(f64),
    #[error("precision level must satisfy 0 < 2^(s-p) < 1 (p = {p}, s = {s})")]
    Level { p: f64, s: f64 },
    #[error("accuracy {eps} is below the attainable accuracy {floor} of the higher level")]
    Unattainable { eps: f64, floor: f64 },
    #[error("model parameters must be positive: {0}")]
    Params(&'static str),
}

/// Parameters of the per-iteration energy formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyModelParams {
    /// Flops per outer iteration per unknown.
    pub k: f64,
    /// Storage locations (values moved) per outer iteration per unknown.
    pub l: f64,
    /// Compute energy per bit.
    pub e_c: f64,
    /// Transfer energy per bit.
    pub e_t: f64,
    /// Cache-miss rate per bit.
    pub r: f64,
    pub n: f64,
}

impl Default for EnergyModelParams {
    /// Arbitrary-unit costs for modeled-only runs; `k`, `l`, `n` are
    /// placeholders that solver traces replace with measured counts.
    fn default() -> Self {
        EnergyModelParams { k: 1.0, l: 1.0, e_c: 1.0, e_t: 40.0, r: 1e-4, n: 1.0 }
    }
}

impl EnergyModelParams {
    /// Energy proportional to precision: the transfer term is switched off.
    pub fn proportional() -> Self {
        EnergyModelParams { r: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !(pos(self.k) && pos(self.l) && pos(self.n)) {
            return Err(ModelError::Params("k, l and n"));
        }
        if !pos(self.e_c) {
            return Err(ModelError::Params("E_c"));
        }
        if !(self.e_t >= 0.0 && self.r >= 0.0 && self.e_t.is_finite() && self.r.is_finite()) {
            return Err(ModelError::Params("E_t and r"));
        }
        Ok(())
    }
}

/// `E(p) = k n E_c p + l n r E_t p²`.
pub fn iteration_energy(params: &EnergyModelParams, p: f64) -> f64 {
    let EnergyModelParams { k, l, e_c, e_t, r, n } = *params;
    k * n * e_c * p + l * n * r * e_t * p * p
}

/// A precision level: `p` bits with accuracy slack `s` bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionLevel {
    pub p: f64,
    pub s: f64,
}

impl PrecisionLevel {
    /// `s = 3 lg p - 7 + δ`; `δ` accounts for the conditioning of the problem.
    pub fn with_conditioning(p: u32, delta: f64) -> Self {
        let p = p as f64;
        PrecisionLevel { p, s: 3.0 * p.log2() - 7.0 + delta }
    }

    /// `s = 3 lg p + 1`, the assumption behind the improvement-factor and
    /// energy-curve plots.
    pub fn figure_preset(p: u32) -> Self {
        let p = p as f64;
        PrecisionLevel { p, s: 3.0 * p.log2() + 1.0 }
    }

    pub fn with_slack(p: u32, s: f64) -> Self {
        PrecisionLevel { p: p as f64, s }
    }

    /// Usable bits `p - s`.
    pub fn usable_bits(&self) -> f64 {
        self.p - self.s
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.p > 0.0 && self.usable_bits() > 0.0 && self.usable_bits().is_finite() {
            Ok(())
        } else {
            Err(ModelError::Level { p: self.p, s: self.s })
        }
    }
}

/// `2^(s - p)`, below which a solver at this level stalls.
pub fn attainable_accuracy(level: &PrecisionLevel) -> f64 {
    (-level.usable_bits()).exp2()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateKind {
    Linear,
    Quadratic,
}

/// Convergence model: `ε_{k+1} ≤ ε_k / λ` (linear) or `ε_{k+1} ≤ ε_k² / λ`
/// (quadratic).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePair {
    pub lambda: f64,
    pub kind: RateKind,
}

impl RatePair {
    pub fn linear(lambda: f64) -> Result<Self, ModelError> {
        Self::new(lambda, RateKind::Linear)
    }

    pub fn quadratic(lambda: f64) -> Result<Self, ModelError> {
        Self::new(lambda, RateKind::Quadratic)
    }

    pub fn new(lambda: f64, kind: RateKind) -> Result<Self, ModelError> {
        if lambda > 1.0 && lambda.is_finite() {
            Ok(RatePair { lambda, kind })
        } else {
            Err(ModelError::Lambda(lambda))
        }
    }
}

/// Largest number of iterations a level can take before stalling.
pub fn max_iterations(level: &PrecisionLevel, rate: &RatePair) -> f64 {
    let lg_lambda = rate.lambda.log2();
    match rate.kind {
        RateKind::Linear => level.usable_bits() / lg_lambda,
        RateKind::Quadratic => level.usable_bits() / (2.0 * lg_lambda) + 0.5,
    }
}

fn check_eps(eps: f64) -> Result<(), ModelError> {
    if eps > 0.0 && eps <= 1.0 {
        Ok(())
    } else {
        Err(ModelError::Accuracy(eps))
    }
}

fn check_lambda(lambda: f64) -> Result<f64, ModelError> {
    if lambda > 1.0 && lambda.is_finite() {
        Ok(lambda.log2())
    } else {
        Err(ModelError::Lambda(lambda))
    }
}

/// Energy of a single-level solve to `eps` under a linear rate:
/// `E(p₂) lg(1/ε) / lg λ`.
pub fn baseline_energy(energy_per_iteration: f64, eps: f64, lambda: f64) -> Result<f64, ModelError> {
    check_eps(eps)?;
    let lg_lambda = check_lambda(lambda)?;
    Ok(energy_per_iteration * (1.0 / eps).log2() / lg_lambda)
}

/// Largest high-precision iteration count that keeps a hybrid run within the
/// baseline budget: `lg(1/ε)/lg λ - k₁ E(p₁)/E(p₂)`.
pub fn hybrid_k2_bound(k1: f64, eps: f64, lambda: f64, energy_ratio: f64) -> Result<f64, ModelError> {
    check_eps(eps)?;
    let lg_lambda = check_lambda(lambda)?;
    Ok((1.0 / eps).log2() / lg_lambda - k1 * energy_ratio)
}

/// Hybrid energy `E(p₂) (k₁ ρ + k₂)` with `ρ = E(p₁)/E(p₂)`.
pub fn hybrid_energy(e_high: f64, energy_ratio: f64, k1: f64, k2: f64) -> f64 {
    e_high * (k1 * energy_ratio + k2)
}

fn check_pair(
    low: &PrecisionLevel,
    high: &PrecisionLevel,
    eps: f64,
    energy_ratio: f64,
) -> Result<(), ModelError> {
    low.validate()?;
    high.validate()?;
    check_eps(eps)?;
    if !(energy_ratio > 0.0 && energy_ratio.is_finite()) {
        return Err(ModelError::EnergyRatio(energy_ratio));
    }
    let floor = attainable_accuracy(high);
    if eps < floor {
        return Err(ModelError::Unattainable { eps, floor });
    }
    Ok(())
}

/// Accuracy reached by `k₁` low-precision iterations followed by the
/// budget-limited number of high-precision iterations, linear rate:
/// `max{2^(s₂-p₂), λ^(-k₁(1-ρ)) ε}`.
pub fn hybrid_accuracy_with_split(
    high: &PrecisionLevel,
    k1: f64,
    eps: f64,
    lambda: f64,
    energy_ratio: f64,
) -> Result<f64, ModelError> {
    high.validate()?;
    check_eps(eps)?;
    let lg_lambda = check_lambda(lambda)?;
    let gained = k1 * lg_lambda * (1.0 - energy_ratio) + (1.0 / eps).log2();
    Ok((-high.usable_bits().min(gained)).exp2())
}

/// Upper bound on the hybrid accuracy with the low level run to its stall
/// point. The quadratic rate loses `ρ lg λ` bits relative to the linear one.
pub fn hybrid_accuracy_bound(
    low: &PrecisionLevel,
    high: &PrecisionLevel,
    eps: f64,
    energy_ratio: f64,
    rate: &RatePair,
) -> Result<f64, ModelError> {
    check_pair(low, high, eps, energy_ratio)?;
    let mut gained = low.usable_bits() * (1.0 - energy_ratio) + (1.0 / eps).log2();
    if rate.kind == RateKind::Quadratic {
        gained -= energy_ratio * check_lambda(rate.lambda)?;
    }
    Ok((-high.usable_bits().min(gained)).exp2())
}

/// Lower bound on `ε / ε_{k₁+k₂}` for a linear rate:
/// `2^min{lg ε + p₂ - s₂, (p₁ - s₁)(1 - ρ)}`.
pub fn improvement_factor_bound(
    low: &PrecisionLevel,
    high: &PrecisionLevel,
    eps: f64,
    energy_ratio: f64,
) -> Result<f64, ModelError> {
    check_pair(low, high, eps, energy_ratio)?;
    let exponent = (eps.log2() + high.usable_bits()).min(low.usable_bits() * (1.0 - energy_ratio));
    Ok(exponent.exp2())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub k1: f64,
    pub k2: f64,
}

/// Energy-optimal split: run the low level as far as it goes, then finish at
/// the high level.
pub fn optimal_split(
    low: &PrecisionLevel,
    high: &PrecisionLevel,
    eps: f64,
    lambda: f64,
) -> Result<Split, ModelError> {
    low.validate()?;
    high.validate()?;
    check_eps(eps)?;
    let lg_lambda = check_lambda(lambda)?;
    let bits_needed = (1.0 / eps).log2();
    let k1 = low.usable_bits().min(bits_needed) / lg_lambda;
    let k2 = high.usable_bits().min((bits_needed - k1 * lg_lambda).max(0.0)) / lg_lambda;
    Ok(Split { k1, k2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub eps: f64,
    /// `None` when `eps` is below the high level's attainable accuracy.
    pub energy: Option<f64>,
    pub split: Split,
}

/// Hybrid energy with the optimal split at each accuracy on the grid.
pub fn energy_accuracy_curve(
    low: &PrecisionLevel,
    high: &PrecisionLevel,
    lambda: f64,
    e_low: f64,
    e_high: f64,
    eps_grid: &[f64],
) -> Result<Vec<CurvePoint>, ModelError> {
    if !(e_low > 0.0 && e_high > 0.0) {
        return Err(ModelError::Params("per-iteration energies"));
    }
    let ratio = e_low / e_high;
    let floor = attainable_accuracy(high);
    eps_grid
        .iter()
        .map(|&eps| {
            let split = optimal_split(low, high, eps, lambda)?;
            let energy = (eps >= floor).then(|| hybrid_energy(e_high, ratio, split.k1, split.k2));
            Ok(CurvePoint { eps, energy, split })
        })
        .collect()
}

/// Log-spaced grid `10^from, …, 10^to` with `per_decade` points per decade.
pub fn log_grid(from_exp: i32, to_exp: i32, per_decade: usize) -> Vec<f64> {
    let per_decade = per_decade.max(1);
    let (lo, hi) = (from_exp.min(to_exp), from_exp.max(to_exp));
    let steps = (hi - lo) as usize * per_decade;
    (0..=steps)
        .map(|i| 10f64.powf(hi as f64 - i as f64 / per_decade as f64))
        .collect()
}
