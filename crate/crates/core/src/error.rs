use thiserror::Error;

use crate::market::{Regime, Stage};

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum MarketError {
    #[error("bid slope for the {stage} stage must be positive and finite, got {value}")]
    InvalidSlope { stage: Stage, value: f64 },

    #[error("cost coefficient of generator `{id}` must be positive and finite, got {value}")]
    InvalidCost { id: String, value: f64 },

    #[error("market needs at least one generator and one load")]
    EmptyParticipants,

    #[error("demand of load `{id}` must be nonnegative, got {value}")]
    NegativeDemand { id: String, value: f64 },

    #[error("demand of load `{id}` is not finite")]
    NonFiniteDemand { id: String },

    #[error("duplicate participant id `{0}`")]
    DuplicateId(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("load split violates the inelastic demand of `{id}`")]
    SplitMismatch { id: String },

    #[error("|G| >= {required} required for {what}, market has {found} generator(s)")]
    TooFewGenerators {
        required: usize,
        found: usize,
        what: &'static str,
    },

    #[error("{what} requires homogeneous generator costs")]
    HeterogeneousUnsupported { what: &'static str },

    #[error("slope-bid clearing has no supply for a nonzero demand of {demand}")]
    DegeneratePrice { demand: f64 },

    #[error("{participant} has no free bid in the {stage} stage under the {regime} regime")]
    UnsupportedRegimePair {
        participant: String,
        stage: Stage,
        regime: Regime,
    },

    #[error("competitive {metric} is zero; ratio undefined")]
    DivisionByZero { metric: &'static str },

    #[error("bid profile does not match the market: {0}")]
    ProfileMismatch(String),

    #[error("real-time subgame has no equilibrium: {0}")]
    NoSubgameEquilibrium(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = MarketError> = std::result::Result<T, E>;

impl MarketError {
    /// Variant name, stable across message wording changes.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::InvalidSlope { .. } => "InvalidSlope",
            Self::InvalidCost { .. } => "InvalidCost",
            Self::EmptyParticipants => "EmptyParticipants",
            Self::NegativeDemand { .. } => "NegativeDemand",
            Self::NonFiniteDemand { .. } => "NonFiniteDemand",
            Self::DuplicateId(_) => "DuplicateId",
            Self::Parse { .. } => "Parse",
            Self::SplitMismatch { .. } => "SplitMismatch",
            Self::TooFewGenerators { .. } => "TooFewGenerators",
            Self::HeterogeneousUnsupported { .. } => "HeterogeneousUnsupported",
            Self::DegeneratePrice { .. } => "DegeneratePrice",
            Self::UnsupportedRegimePair { .. } => "UnsupportedRegimePair",
            Self::DivisionByZero { .. } => "DivisionByZero",
            Self::ProfileMismatch(_) => "ProfileMismatch",
            Self::NoSubgameEquilibrium(_) => "NoSubgameEquilibrium",
            Self::Io(_) => "Io",
            Self::Json(_) => "Json",
            Self::Csv(_) => "Csv",
        }
    }
}
