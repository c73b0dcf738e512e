//! Distributed learning of risk-averse (CVaR) Nash equilibria from cost
//! samples alone.
//!
//! Everything is generic over the scalar type; `f64` and `f32` aliases are
//! provided below.

pub mod analysis;
pub mod distributions;
mod error;
pub mod games;
pub mod learning;
mod scalar;
pub mod seeds;

pub use analysis::{
    density_constants_along, fit_rate, risk_sums, time_averaged_error, validate_convergence_bound,
    validate_rate, validate_var_concentration, validate_var_tracking, AggregateTrace, BoundKind,
    BoundReport, ConcentrationCheck, ConvergenceConstants, EpisodeRecord, RunTrace, TraceMeta,
};
pub use distributions::{
    dkw_confidence_width, dkw_tail_bound, ClosedFormDistribution, EmpiricalDistribution, RiskLevel,
    VarEstimator,
};
pub use error::{Error, Result};
pub use games::{
    ActionProfile, BoxActionSet, BuiltinGame, CournotGame, NoiseSeed, QuadraticCounterexampleGame,
    StochasticGame,
};
pub use learning::{run, Algorithm, RunConfig, StepSchedule};
pub use scalar::{dot, norm_sq, Scalar};

pub type RiskLevelF64 = RiskLevel<f64>;
pub type EmpiricalDistributionF64 = EmpiricalDistribution<f64>;
pub type ClosedFormDistributionF64 = ClosedFormDistribution<f64>;
pub type ActionProfileF64 = ActionProfile<f64>;
pub type CournotGameF64 = CournotGame<f64>;
pub type QuadraticCounterexampleGameF64 = QuadraticCounterexampleGame<f64>;
pub type BuiltinGameF64 = BuiltinGame<f64>;
pub type RunConfigF64 = RunConfig<f64>;
pub type RunTraceF64 = RunTrace<f64>;
pub type AggregateTraceF64 = AggregateTrace<f64>;

pub type RiskLevelF32 = RiskLevel<f32>;
pub type EmpiricalDistributionF32 = EmpiricalDistribution<f32>;
pub type CournotGameF32 = CournotGame<f32>;
pub type RunConfigF32 = RunConfig<f32>;
pub type RunTraceF32 = RunTrace<f32>;
