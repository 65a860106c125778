//! Mixed-precision inexact Newton–Krylov solver with energy accounting.
//!
//! The crate is organised bottom-up:
//!
//! * [`problems`]: the Laplace and chained Rosenbrock systems, matrix-free.
//! * [`krylov`]: BI-CGSTAB inner solver.
//! * [`newton`]: inexact Newton outer loop with Armijo backtracking.
//! * [`meta`]: precision ladders and the reinvestment experiment.
//! * [`energymodel`]: closed-form energy/accuracy model of two-level schemes.
//! * [`metering`]: modeled and counter-based energy attribution.
//!
//! Solves are generic over [`Real`] (`f32` or `f64`); every vector and every
//! intermediate of a solve stays in that type.

pub mod counters;
pub mod energymodel;
pub mod krylov;
pub mod meta;
pub mod metering;
pub mod newton;
pub mod precision;
pub mod problems;

pub use counters::OpCounts;
pub use energymodel::{EnergyModelParams, PrecisionLevel, RateKind, RatePair};
pub use krylov::{bicgstab, InnerResult, InnerStatus, LinearOperator};
pub use meta::{
    gradation_sweep, reinvest_experiment, run_ladder, GradationTable, LadderLevel, MetaError, PrecisionLadder,
    ReinvestOutcome, ReinvestReport,
};
pub use metering::{Backend, EnergyMeter, EnergySample, MeasuredMeter, ModeledMeter};
pub use newton::{
    newton_solve, solve, OuterRecord, SolveError, SolveTrace, SolverConfig, Termination,
};
pub use precision::{Real, WorkingPrecision};
pub use problems::{ProblemInstance, ProblemKind};
