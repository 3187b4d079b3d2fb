//! Domain types, configuration validation and demand-bid ingestion.
//!
//! Participants are identified by their position in the configuration; every
//! per-participant vector in the crate is indexed in that order.

use std::collections::HashSet;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{MarketError, Result};
use crate::scalar::{approx_eq_scaled, balanced, Scalar, BALANCE_RTOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    DayAhead,
    RealTime,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::DayAhead => "day-ahead",
            Stage::RealTime => "real-time",
        })
    }
}

/// Market design under which an equilibrium is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Intercept bids in both stages, no mitigation.
    Standard,
    /// Real-time generator bids replaced by truthful cost bids.
    RtMpm,
    /// Day-ahead generator bids replaced by truthful cost bids.
    DaMpm,
    /// Slope bids in both stages, no mitigation.
    SlopeStandard,
}

impl Regime {
    pub const ALL: [Regime; 4] = [
        Regime::Standard,
        Regime::RtMpm,
        Regime::DaMpm,
        Regime::SlopeStandard,
    ];

    /// The stage whose generator bids the operator overrides, if any.
    pub fn mitigated_stage(self) -> Option<Stage> {
        match self {
            Regime::RtMpm => Some(Stage::RealTime),
            Regime::DaMpm => Some(Stage::DayAhead),
            Regime::Standard | Regime::SlopeStandard => None,
        }
    }

    pub fn bid_kind(self) -> BidKind {
        match self {
            Regime::SlopeStandard => BidKind::Slope,
            _ => BidKind::Intercept,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Standard => "standard",
            Regime::RtMpm => "rt-mpm",
            Regime::DaMpm => "da-mpm",
            Regime::SlopeStandard => "slope",
        })
    }
}

impl FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "standard" => Ok(Regime::Standard),
            "rt-mpm" | "rtmpm" => Ok(Regime::RtMpm),
            "da-mpm" | "dampm" => Ok(Regime::DaMpm),
            "slope" | "slope-standard" => Ok(Regime::SlopeStandard),
            other => Err(format!(
                "unknown regime `{other}` (expected standard, rt-mpm, da-mpm or slope)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Behavior {
    /// Price-taking participants.
    Competitive,
    /// Price-anticipating participants.
    Nash,
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Behavior::Competitive => "competitive",
            Behavior::Nash => "nash",
        })
    }
}

impl FromStr for Behavior {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "competitive" => Ok(Behavior::Competitive),
            "nash" | "strategic" => Ok(Behavior::Nash),
            other => Err(format!(
                "unknown behavior `{other}` (expected competitive or nash)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BidKind {
    Intercept,
    Slope,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams<T> {
    pub id: String,
    /// Quadratic cost coefficient, $/MW².
    pub cost_coeff: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadParams<T> {
    pub id: String,
    /// Total inelastic demand over both stages, MW.
    #[serde(rename = "demand_mw")]
    pub demand: T,
}

/// Exogenous parameterization of a market instance, as read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig<T> {
    pub generators: Vec<GeneratorParams<T>>,
    pub loads: Vec<LoadParams<T>>,
    /// Day-ahead intercept-bid slope, MW per $/MW.
    pub slope_da: T,
    /// Real-time intercept-bid slope, MW per $/MW.
    pub slope_rt: T,
}

impl<T: Scalar> MarketConfig<T> {
    /// Config with generated ids `G1..`, `L1..`.
    pub fn from_parts(costs: &[T], demands: &[T], slope_da: T, slope_rt: T) -> Self {
        MarketConfig {
            generators: costs
                .iter()
                .enumerate()
                .map(|(i, &c)| GeneratorParams {
                    id: format!("G{}", i + 1),
                    cost_coeff: c,
                })
                .collect(),
            loads: demands
                .iter()
                .enumerate()
                .map(|(i, &d)| LoadParams {
                    id: format!("L{}", i + 1),
                    demand: d,
                })
                .collect(),
            slope_da,
            slope_rt,
        }
    }

    pub fn homogeneous(n_generators: usize, cost: T, demands: &[T], slope_da: T, slope_rt: T) -> Self {
        Self::from_parts(&vec![cost; n_generators], demands, slope_da, slope_rt)
    }

    pub fn validate(self) -> Result<Market<T>> {
        validate_config(self)
    }
}

impl<T> MarketConfig<T>
where
    T: Scalar + Serialize + for<'de> Deserialize<'de>,
{
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// A validated market with cached aggregates.
#[derive(Clone, Debug, PartialEq)]
pub struct Market<T> {
    config: MarketConfig<T>,
    inv_cost_sum: T,
    total_demand: T,
}

/// Checks every configuration invariant and caches `Σ c_j⁻¹` and `d`.
pub fn validate_config<T: Scalar>(cfg: MarketConfig<T>) -> Result<Market<T>> {
    if cfg.generators.is_empty() || cfg.loads.is_empty() {
        return Err(MarketError::EmptyParticipants);
    }
    for (stage, value) in [(Stage::DayAhead, cfg.slope_da), (Stage::RealTime, cfg.slope_rt)] {
        if !(value > T::zero() && value.is_finite()) {
            return Err(MarketError::InvalidSlope {
                stage,
                value: value.as_f64(),
            });
        }
    }
    let mut seen = HashSet::new();
    for g in &cfg.generators {
        if !(g.cost_coeff > T::zero() && g.cost_coeff.is_finite()) {
            return Err(MarketError::InvalidCost {
                id: g.id.clone(),
                value: g.cost_coeff.as_f64(),
            });
        }
        if !seen.insert(g.id.as_str()) {
            return Err(MarketError::DuplicateId(g.id.clone()));
        }
    }
    for l in &cfg.loads {
        if !l.demand.is_finite() {
            return Err(MarketError::NonFiniteDemand { id: l.id.clone() });
        }
        if l.demand < T::zero() {
            return Err(MarketError::NegativeDemand {
                id: l.id.clone(),
                value: l.demand.as_f64(),
            });
        }
        if !seen.insert(l.id.as_str()) {
            return Err(MarketError::DuplicateId(l.id.clone()));
        }
    }
    let total_demand: T = cfg.loads.iter().map(|l| l.demand).sum();
    if !total_demand.is_finite() {
        return Err(MarketError::NonFiniteDemand {
            id: "aggregate".into(),
        });
    }
    let inv_cost_sum = cfg.generators.iter().map(|g| g.cost_coeff.recip()).sum();
    Ok(Market {
        config: cfg,
        inv_cost_sum,
        total_demand,
    })
}

impl<T: Scalar> Market<T> {
    pub fn config(&self) -> &MarketConfig<T> {
        &self.config
    }

    pub fn into_config(self) -> MarketConfig<T> {
        self.config
    }

    pub fn generators(&self) -> &[GeneratorParams<T>] {
        &self.config.generators
    }

    pub fn loads(&self) -> &[LoadParams<T>] {
        &self.config.loads
    }

    pub fn n_generators(&self) -> usize {
        self.config.generators.len()
    }

    pub fn n_loads(&self) -> usize {
        self.config.loads.len()
    }

    pub fn slope_da(&self) -> T {
        self.config.slope_da
    }

    pub fn slope_rt(&self) -> T {
        self.config.slope_rt
    }

    pub fn slope(&self, stage: Stage) -> T {
        match stage {
            Stage::DayAhead => self.config.slope_da,
            Stage::RealTime => self.config.slope_rt,
        }
    }

    pub fn cost(&self, j: usize) -> T {
        self.config.generators[j].cost_coeff
    }

    pub fn costs(&self) -> impl Iterator<Item = T> + '_ {
        self.config.generators.iter().map(|g| g.cost_coeff)
    }

    pub fn demand(&self, l: usize) -> T {
        self.config.loads[l].demand
    }

    pub fn demands(&self) -> impl Iterator<Item = T> + '_ {
        self.config.loads.iter().map(|l| l.demand)
    }

    /// `Σ_j c_j⁻¹`.
    pub fn inv_cost_sum(&self) -> T {
        self.inv_cost_sum
    }

    /// Aggregate inelastic demand `d`.
    pub fn total_demand(&self) -> T {
        self.total_demand
    }

    /// System marginal cost `d / Σ c_j⁻¹`.
    pub fn marginal_price(&self) -> T {
        self.total_demand / self.inv_cost_sum
    }

    /// The common cost coefficient when all generators share it.
    pub fn homogeneous_cost(&self) -> Option<T> {
        let c0 = self.cost(0);
        self.costs()
            .all(|c| approx_eq_scaled(c, c0, T::lit(1e-12)))
            .then_some(c0)
    }

    /// Real-time augmented cost `C_j = 1/(b^r(|G|-1)) + c_j`. Infinite when
    /// there is a single generator.
    pub fn augmented_cost(&self, j: usize) -> T {
        let g = T::count(self.n_generators());
        (self.slope_rt() * (g - T::one())).recip() + self.cost(j)
    }

    /// `Σ_j C_j⁻¹`.
    pub fn augmented_inv_sum(&self) -> T {
        (0..self.n_generators())
            .map(|j| self.augmented_cost(j).recip())
            .sum()
    }

    pub fn with_slopes(&self, slope_da: T, slope_rt: T) -> Result<Market<T>> {
        let mut cfg = self.config.clone();
        cfg.slope_da = slope_da;
        cfg.slope_rt = slope_rt;
        validate_config(cfg)
    }

    pub fn with_costs(&self, costs: &[T]) -> Result<Market<T>> {
        if costs.len() != self.n_generators() {
            return Err(MarketError::ProfileMismatch(format!(
                "{} costs for {} generators",
                costs.len(),
                self.n_generators()
            )));
        }
        let mut cfg = self.config.clone();
        for (g, &c) in cfg.generators.iter_mut().zip(costs) {
            g.cost_coeff = c;
        }
        validate_config(cfg)
    }
}

/// Reads `load_id,demand_mw` rows.
pub fn read_demand_bids<T: Scalar, R: Read>(reader: R) -> Result<Vec<LoadParams<T>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "load_id" || &headers[1] != "demand_mw" {
        return Err(MarketError::Parse {
            line: 1,
            message: "expected header `load_id,demand_mw`".into(),
        });
    }
    let mut loads = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| MarketError::Parse {
            line,
            message: e.to_string(),
        })?;
        if record.len() != 2 {
            return Err(MarketError::Parse {
                line,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(MarketError::Parse {
                line,
                message: "empty load id".into(),
            });
        }
        let value: f64 = record[1].parse().map_err(|_| MarketError::Parse {
            line,
            message: format!("`{}` is not a number", &record[1]),
        })?;
        if !value.is_finite() {
            return Err(MarketError::NonFiniteDemand { id });
        }
        if value < 0.0 {
            return Err(MarketError::NegativeDemand { id, value });
        }
        loads.push(LoadParams {
            id,
            demand: T::lit(value),
        });
    }
    if loads.is_empty() {
        return Err(MarketError::EmptyParticipants);
    }
    Ok(loads)
}

pub fn load_demand_bids<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<LoadParams<T>>> {
    let file = std::fs::File::open(path)?;
    read_demand_bids(file)
}

/// Generator bids for both stages.
///
/// For a stage under market power mitigation the entries hold the
/// equivalent intercept `b·λ − g` of the operator's default bid, so that
/// re-clearing the profile reproduces the mitigated dispatch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorBids<T> {
    /// `g = b·λ − β`; vectors hold the intercepts `β_j`.
    Intercept { day_ahead: Vec<T>, real_time: Vec<T> },
    /// `g = b̂_j·λ`; vectors hold the slopes `b̂_j`.
    Slope { day_ahead: Vec<T>, real_time: Vec<T> },
}

impl<T: Scalar> GeneratorBids<T> {
    pub fn kind(&self) -> BidKind {
        match self {
            GeneratorBids::Intercept { .. } => BidKind::Intercept,
            GeneratorBids::Slope { .. } => BidKind::Slope,
        }
    }

    pub fn stage(&self, stage: Stage) -> &[T] {
        match (self, stage) {
            (GeneratorBids::Intercept { day_ahead, .. }, Stage::DayAhead)
            | (GeneratorBids::Slope { day_ahead, .. }, Stage::DayAhead) => day_ahead,
            (GeneratorBids::Intercept { real_time, .. }, Stage::RealTime)
            | (GeneratorBids::Slope { real_time, .. }, Stage::RealTime) => real_time,
        }
    }

    pub fn stage_mut(&mut self, stage: Stage) -> &mut Vec<T> {
        match (self, stage) {
            (GeneratorBids::Intercept { day_ahead, .. }, Stage::DayAhead)
            | (GeneratorBids::Slope { day_ahead, .. }, Stage::DayAhead) => day_ahead,
            (GeneratorBids::Intercept { real_time, .. }, Stage::RealTime)
            | (GeneratorBids::Slope { real_time, .. }, Stage::RealTime) => real_time,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BidProfile<T> {
    pub generators: GeneratorBids<T>,
    /// Day-ahead quantity bids `d_l^d`, MW. May be negative.
    pub load_da: Vec<T>,
    /// Real-time quantities `d_l^r = d_l − d_l^d`.
    pub load_rt: Vec<T>,
}

impl<T: Scalar> BidProfile<T> {
    pub fn kind(&self) -> BidKind {
        self.generators.kind()
    }

    /// Checks dimensions, slope signs and per-load inelasticity.
    pub fn check(&self, market: &Market<T>) -> Result<()> {
        let g = market.n_generators();
        for stage in [Stage::DayAhead, Stage::RealTime] {
            if self.generators.stage(stage).len() != g {
                return Err(MarketError::ProfileMismatch(format!(
                    "{} {stage} generator bids for {g} generators",
                    self.generators.stage(stage).len()
                )));
            }
        }
        if let GeneratorBids::Slope { day_ahead, real_time } = &self.generators {
            if day_ahead.iter().chain(real_time).any(|&b| b < T::zero()) {
                return Err(MarketError::ProfileMismatch("negative slope bid".into()));
            }
        }
        if self.load_da.len() != market.n_loads() || self.load_rt.len() != market.n_loads() {
            return Err(MarketError::ProfileMismatch("load bid count".into()));
        }
        for (l, load) in market.loads().iter().enumerate() {
            if !approx_eq_scaled(
                self.load_da[l] + self.load_rt[l],
                load.demand,
                T::lit(BALANCE_RTOL),
            ) {
                return Err(MarketError::SplitMismatch { id: load.id.clone() });
            }
        }
        Ok(())
    }

    pub fn total_da_demand(&self) -> T {
        self.load_da.iter().copied().sum()
    }

    pub fn total_rt_demand(&self) -> T {
        self.load_rt.iter().copied().sum()
    }
}

/// One stage's clearing price and quantities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome<T> {
    /// $/MW.
    pub price: T,
    pub gen_dispatch: Vec<T>,
    pub load_alloc: Vec<T>,
    /// Set when the clearing rule did not pin the price (slope bids with no
    /// supply and no demand).
    #[serde(default)]
    pub degenerate: bool,
}

impl<T: Scalar> StageOutcome<T> {
    pub fn supply(&self) -> T {
        self.gen_dispatch.iter().copied().sum()
    }

    pub fn demand(&self) -> T {
        self.load_alloc.iter().copied().sum()
    }

    pub fn is_balanced(&self) -> bool {
        balanced(self.supply(), self.demand())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoStageOutcome<T> {
    pub day_ahead: StageOutcome<T>,
    pub real_time: StageOutcome<T>,
    pub bids: BidProfile<T>,
}

impl<T: Scalar> TwoStageOutcome<T> {
    pub fn stage(&self, stage: Stage) -> &StageOutcome<T> {
        match stage {
            Stage::DayAhead => &self.day_ahead,
            Stage::RealTime => &self.real_time,
        }
    }

    /// Total dispatch `g_j = g_j^d + g_j^r`.
    pub fn gen_total(&self, j: usize) -> T {
        self.day_ahead.gen_dispatch[j] + self.real_time.gen_dispatch[j]
    }

    pub fn gen_totals(&self) -> Vec<T> {
        (0..self.day_ahead.gen_dispatch.len())
            .map(|j| self.gen_total(j))
            .collect()
    }

    /// Checks stage balance, finiteness and per-load inelasticity.
    pub fn check(&self, market: &Market<T>) -> Result<()> {
        for stage in [Stage::DayAhead, Stage::RealTime] {
            let s = self.stage(stage);
            if !s.is_balanced() {
                return Err(MarketError::ProfileMismatch(format!(
                    "{stage} stage is not balanced: supply {} vs demand {}",
                    s.supply(),
                    s.demand()
                )));
            }
        }
        if self.gen_totals().iter().any(|g| !g.is_finite()) {
            return Err(MarketError::ProfileMismatch("non-finite dispatch".into()));
        }
        for (l, load) in market.loads().iter().enumerate() {
            let total = self.day_ahead.load_alloc[l] + self.real_time.load_alloc[l];
            if !approx_eq_scaled(total, load.demand, T::lit(BALANCE_RTOL)) {
                return Err(MarketError::SplitMismatch { id: load.id.clone() });
            }
        }
        Ok(())
    }
}

/// A market outcome tagged with the regime and behavior that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult<T> {
    pub regime: Regime,
    pub behavior: Behavior,
    pub outcome: TwoStageOutcome<T>,
    /// Free directions of a non-unique equilibrium family; empty when unique.
    pub degrees_of_freedom: String,
    pub symmetric: bool,
    #[serde(default)]
    pub warnings: Vec<String>,
}
