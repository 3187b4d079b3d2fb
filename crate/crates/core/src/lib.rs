//! Two-stage (day-ahead / real-time) electricity market equilibria.
//!
//! Generators with quadratic costs and loads with inelastic demand trade in
//! two sequentially cleared stages. The crate computes competitive and Nash
//! equilibria under intercept and slope supply-function bidding, with and
//! without stage-wise market power mitigation, settles them, verifies them
//! numerically and sweeps them over parameter grids.
//!
//! All computations are generic over [`Scalar`]; the `*F64` aliases below
//! cover the common case.

pub mod clearing;
pub mod equilibria;
pub mod error;
pub mod io;
pub mod market;
pub mod scalar;
pub mod settlement;
pub mod sweeps;
pub mod verifier;

pub use error::{MarketError, Result};
pub use market::{
    validate_config, Behavior, BidKind, BidProfile, EquilibriumResult, GeneratorBids,
    GeneratorParams, LoadParams, Market, MarketConfig, Regime, Stage, StageOutcome,
    TwoStageOutcome,
};
pub use scalar::Scalar;
pub use settlement::{NormalizedMetrics, SettlementReport};
pub use verifier::{SearchParams, Verdict, VerificationReport};

pub type MarketF64 = Market<f64>;
pub type MarketConfigF64 = MarketConfig<f64>;
pub type EquilibriumF64 = EquilibriumResult<f64>;
pub type OutcomeF64 = TwoStageOutcome<f64>;
pub type SettlementF64 = SettlementReport<f64>;
pub type ReportF64 = VerificationReport<f64>;
pub type GridF64 = sweeps::SweepGrid<f64>;

pub type MarketF32 = Market<f32>;
pub type MarketConfigF32 = MarketConfig<f32>;
pub type EquilibriumF32 = EquilibriumResult<f32>;
