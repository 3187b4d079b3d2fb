//! Closed-form competitive and Nash equilibria for each market design.
//!
//! Every solver returns one concrete outcome. Where the equilibrium is a
//! family, a canonical member is returned and the free directions are
//! described in [`EquilibriumResult::degrees_of_freedom`].

use crate::clearing::stage_intercepts;
use crate::error::{MarketError, Result};
use crate::market::{
    Behavior, BidProfile, EquilibriumResult, GeneratorBids, Market, Regime, Stage, StageOutcome,
    TwoStageOutcome,
};
use crate::scalar::{approx_eq_scaled, Scalar, BALANCE_RTOL};

/// Explicit per-load allocation across the two stages.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadSplit<T> {
    pub day_ahead: Vec<T>,
    pub real_time: Vec<T>,
}

impl<T: Scalar> LoadSplit<T> {
    pub fn all_day_ahead(market: &Market<T>) -> Self {
        LoadSplit {
            day_ahead: market.demands().collect(),
            real_time: vec![T::zero(); market.n_loads()],
        }
    }

    pub fn all_real_time(market: &Market<T>) -> Self {
        LoadSplit {
            day_ahead: vec![T::zero(); market.n_loads()],
            real_time: market.demands().collect(),
        }
    }

    /// Day-ahead quantities with the real-time remainder implied.
    pub fn from_day_ahead(market: &Market<T>, day_ahead: Vec<T>) -> Self {
        let real_time = day_ahead
            .iter()
            .zip(market.demands())
            .map(|(&x, d)| d - x)
            .collect();
        LoadSplit { day_ahead, real_time }
    }

    pub fn check(&self, market: &Market<T>) -> Result<()> {
        if self.day_ahead.len() != market.n_loads() || self.real_time.len() != market.n_loads() {
            return Err(MarketError::ProfileMismatch(format!(
                "split covers {}/{} loads, market has {}",
                self.day_ahead.len(),
                self.real_time.len(),
                market.n_loads()
            )));
        }
        for (l, load) in market.loads().iter().enumerate() {
            let total = self.day_ahead[l] + self.real_time[l];
            if !total.is_finite() || !approx_eq_scaled(total, load.demand, T::lit(BALANCE_RTOL)) {
                return Err(MarketError::SplitMismatch { id: load.id.clone() });
            }
        }
        Ok(())
    }

    fn totals(&self) -> (T, T) {
        (
            self.day_ahead.iter().copied().sum(),
            self.real_time.iter().copied().sum(),
        )
    }
}

fn require_generators<T: Scalar>(market: &Market<T>, required: usize, what: &'static str) -> Result<()> {
    let found = market.n_generators();
    if found < required {
        return Err(MarketError::TooFewGenerators { required, found, what });
    }
    Ok(())
}

fn require_homogeneous<T: Scalar>(market: &Market<T>, what: &'static str) -> Result<T> {
    market
        .homogeneous_cost()
        .ok_or(MarketError::HeterogeneousUnsupported { what })
}

fn stage<T: Scalar>(price: T, gen_dispatch: Vec<T>, load_alloc: Vec<T>) -> StageOutcome<T> {
    StageOutcome {
        price,
        gen_dispatch,
        load_alloc,
        degenerate: false,
    }
}

/// Dispatch proportional to `c_j⁻¹`, i.e. at equal marginal cost.
fn merit_split<T: Scalar>(market: &Market<T>, quantity: T) -> Vec<T> {
    let s = market.inv_cost_sum();
    market.costs().map(|c| quantity / (c * s)).collect()
}

fn negative_allocation_warnings<T: Scalar>(market: &Market<T>, outcome: &TwoStageOutcome<T>) -> Vec<String> {
    let mut warnings = Vec::new();
    for (l, load) in market.loads().iter().enumerate() {
        for st in [Stage::DayAhead, Stage::RealTime] {
            let x = outcome.stage(st).load_alloc[l];
            if x < T::zero() {
                warnings.push(format!("{st} allocation of load `{}` is negative ({x})", load.id));
            }
        }
    }
    warnings
}

fn finish<T: Scalar>(
    market: &Market<T>,
    regime: Regime,
    behavior: Behavior,
    outcome: TwoStageOutcome<T>,
    degrees_of_freedom: &str,
) -> EquilibriumResult<T> {
    let symmetric = match (behavior, regime) {
        (Behavior::Nash, Regime::Standard | Regime::SlopeStandard) => true,
        _ => market.homogeneous_cost().is_some(),
    };
    EquilibriumResult {
        regime,
        behavior,
        warnings: negative_allocation_warnings(market, &outcome),
        outcome,
        degrees_of_freedom: degrees_of_freedom.to_string(),
        symmetric,
    }
}

/// Outcome where both stages clear at the system marginal cost and every
/// generator's stage dispatch is its merit share of the stage demand.
fn marginal_cost_outcome<T: Scalar>(market: &Market<T>, split: &LoadSplit<T>) -> (StageOutcome<T>, StageOutcome<T>) {
    let price = market.marginal_price();
    let (dd, dr) = split.totals();
    (
        stage(price, merit_split(market, dd), split.day_ahead.clone()),
        stage(price, merit_split(market, dr), split.real_time.clone()),
    )
}

pub fn competitive_standard<T: Scalar>(market: &Market<T>, split: Option<&LoadSplit<T>>) -> Result<EquilibriumResult<T>> {
    let split = match split {
        Some(s) => {
            s.check(market)?;
            s.clone()
        }
        None => LoadSplit::all_day_ahead(market),
    };
    let (da, rt) = marginal_cost_outcome(market, &split);
    let bids = BidProfile {
        generators: GeneratorBids::Intercept {
            day_ahead: stage_intercepts(market, Stage::DayAhead, &da),
            real_time: stage_intercepts(market, Stage::RealTime, &rt),
        },
        load_da: split.day_ahead,
        load_rt: split.real_time,
    };
    let outcome = TwoStageOutcome {
        day_ahead: da,
        real_time: rt,
        bids,
    };
    Ok(finish(
        market,
        Regime::Standard,
        Behavior::Competitive,
        outcome,
        "per-load stage split is free; each generator's intercepts are pinned only through beta_da + beta_rt",
    ))
}

/// Homogeneous parameters shared by the standard-market Nash formulas.
struct StandardNash<T> {
    c: T,
    g: T,
    l: T,
    bd: T,
    br: T,
    d: T,
    a: T,
    b: T,
    den: T,
}

impl<T: Scalar> StandardNash<T> {
    fn new(market: &Market<T>) -> Result<Self> {
        require_generators(market, 2, "the standard-market Nash equilibrium")?;
        let c = require_homogeneous(market, "the standard-market Nash equilibrium")?;
        let one = T::one();
        let g = T::count(market.n_generators());
        let l = T::count(market.n_loads());
        let (bd, br) = (market.slope_da(), market.slope_rt());
        let a = br * c + (l + one) / (g - one);
        let b = br * c + one / (g - one);
        let den = bd * a + br * b * (g + l - one);
        Ok(StandardNash {
            c,
            g,
            l,
            bd,
            br,
            d: market.total_demand(),
            a,
            b,
            den,
        })
    }

    fn split(&self) -> (T, T) {
        let one = T::one();
        (
            self.bd * self.a * self.d / self.den,
            self.br * self.b * (self.g + self.l - one) * self.d / self.den,
        )
    }
}

/// Day-ahead share `d^d/d` of the standard-market Nash equilibrium. It does
/// not depend on the demand level.
pub fn da_share_standard<T: Scalar>(market: &Market<T>) -> Result<T> {
    let p = StandardNash::new(market)?;
    Ok(p.bd * p.a / p.den)
}

/// Aggregate day-ahead and real-time demand at the standard-market Nash
/// equilibrium.
pub fn load_split_standard<T: Scalar>(market: &Market<T>) -> Result<(T, T)> {
    Ok(StandardNash::new(market)?.split())
}

/// Day-ahead slope at which the Nash day-ahead and real-time aggregates are
/// equal; larger slopes tilt demand toward the day-ahead stage.
pub fn da_dominance_threshold<T: Scalar>(market: &Market<T>) -> Result<T> {
    let p = StandardNash::new(market)?;
    Ok(p.br * p.b * (p.g + p.l - T::one()) / p.a)
}

pub fn nash_standard<T: Scalar>(market: &Market<T>) -> Result<EquilibriumResult<T>> {
    let p = StandardNash::new(market)?;
    let one = T::one();
    let two = T::lit(2.0);
    let (g, l, c, bd, br, d) = (p.g, p.l, p.c, p.bd, p.br, p.d);
    let (dd, dr) = p.split();

    let beta_d = bd * c * d / g
        + (br * c - (g - two) / (g - one)) / p.a * (l + one) / (g * (g - one)) * dd;
    let beta_r = br * c * d / g - (g - two) / (g * (g - one)) * dr;

    let r = br * c * (g - one);
    let share = bd + br * (g - one);
    let load_da: Vec<T> = market
        .demands()
        .map(|dl| bd * dl / share + bd / (one + r) / share * dr - br / share * dd)
        .collect();
    let split = LoadSplit::from_day_ahead(market, load_da);

    let lam_d = (r + two) / (r + one) * c * d / g
        + ((br / bd - one) * c + one / (bd * (g - one))) / (r + one) * dd / g;
    let lam_r = lam_d + ((g - two) / (g - one) - br * c) * d / (g * (g - one) * p.den);

    let n = market.n_generators();
    let outcome = TwoStageOutcome {
        day_ahead: stage(lam_d, vec![dd / g; n], split.day_ahead.clone()),
        real_time: stage(lam_r, vec![dr / g; n], split.real_time.clone()),
        bids: BidProfile {
            generators: GeneratorBids::Intercept {
                day_ahead: vec![beta_d; n],
                real_time: vec![beta_r; n],
            },
            load_da: split.day_ahead,
            load_rt: split.real_time,
        },
    };
    Ok(finish(market, Regime::Standard, Behavior::Nash, outcome, ""))
}

pub fn competitive_rt_mpm<T: Scalar>(market: &Market<T>, split: Option<&LoadSplit<T>>) -> Result<EquilibriumResult<T>> {
    let split = match split {
        Some(s) => {
            s.check(market)?;
            s.clone()
        }
        None => LoadSplit::all_real_time(market),
    };
    let (da, rt) = marginal_cost_outcome(market, &split);
    let bids = BidProfile {
        generators: GeneratorBids::Intercept {
            day_ahead: stage_intercepts(market, Stage::DayAhead, &da),
            real_time: stage_intercepts(market, Stage::RealTime, &rt),
        },
        load_da: split.day_ahead,
        load_rt: split.real_time,
    };
    let outcome = TwoStageOutcome {
        day_ahead: da,
        real_time: rt,
        bids,
    };
    Ok(finish(
        market,
        Regime::RtMpm,
        Behavior::Competitive,
        outcome,
        "day-ahead intercepts and the per-load stage split are free; real-time bids are cost-based",
    ))
}

pub fn nash_rt_mpm<T: Scalar>(market: &Market<T>) -> Result<EquilibriumResult<T>> {
    require_generators(market, 2, "the real-time mitigated Nash equilibrium")?;
    let price = market.marginal_price();
    let n = market.n_generators();
    let split = LoadSplit::all_real_time(market);
    let da = stage(price, vec![T::zero(); n], split.day_ahead.clone());
    let rt = stage(price, merit_split(market, market.total_demand()), split.real_time.clone());
    let bids = BidProfile {
        generators: GeneratorBids::Intercept {
            day_ahead: vec![market.slope_da() * price; n],
            real_time: stage_intercepts(market, Stage::RealTime, &rt),
        },
        load_da: split.day_ahead,
        load_rt: split.real_time,
    };
    let outcome = TwoStageOutcome {
        day_ahead: da,
        real_time: rt,
        bids,
    };
    Ok(finish(market, Regime::RtMpm, Behavior::Nash, outcome, ""))
}

pub fn competitive_da_mpm<T: Scalar>(market: &Market<T>) -> Result<EquilibriumResult<T>> {
    let split = LoadSplit::all_day_ahead(market);
    let (da, rt) = marginal_cost_outcome(market, &split);
    let bids = BidProfile {
        generators: GeneratorBids::Intercept {
            day_ahead: stage_intercepts(market, Stage::DayAhead, &da),
            real_time: stage_intercepts(market, Stage::RealTime, &rt),
        },
        load_da: split.day_ahead,
        load_rt: split.real_time,
    };
    let outcome = TwoStageOutcome {
        day_ahead: da,
        real_time: rt,
        bids,
    };
    Ok(finish(
        market,
        Regime::DaMpm,
        Behavior::Competitive,
        outcome,
        "per-load stage split is free provided all demand clears day-ahead in aggregate",
    ))
}

pub fn nash_da_mpm<T: Scalar>(market: &Market<T>) -> Result<EquilibriumResult<T>> {
    require_generators(market, 2, "the day-ahead mitigated Nash equilibrium")?;
    let one = T::one();
    let s = market.inv_cost_sum();
    let d = market.total_demand();
    let l1 = T::count(market.n_loads()) + one;
    let ratio = market.augmented_inv_sum() / s;

    let load_da: Vec<T> = market
        .demands()
        .map(|dl| dl + (d / l1 - dl) * ratio)
        .collect();
    let split = LoadSplit::from_day_ahead(market, load_da);
    let dd = (one - ratio / l1) * d;

    let lam_d = dd / s;
    let lam_r = lam_d + d / (l1 * s);
    let g_da: Vec<T> = market.costs().map(|c| lam_d / c).collect();
    let g_rt: Vec<T> = (0..market.n_generators())
        .map(|j| d / (market.augmented_cost(j) * l1 * s))
        .collect();

    let da = stage(lam_d, g_da, split.day_ahead.clone());
    let rt = stage(lam_r, g_rt, split.real_time.clone());
    let bids = BidProfile {
        generators: GeneratorBids::Intercept {
            day_ahead: stage_intercepts(market, Stage::DayAhead, &da),
            real_time: stage_intercepts(market, Stage::RealTime, &rt),
        },
        load_da: split.day_ahead,
        load_rt: split.real_time,
    };
    let outcome = TwoStageOutcome {
        day_ahead: da,
        real_time: rt,
        bids,
    };
    Ok(finish(market, Regime::DaMpm, Behavior::Nash, outcome, ""))
}

/// Competitive slope-bid equilibrium. `theta` is the fraction of each
/// generator's truthful slope `1/c_j` bid day-ahead (default 1); loads
/// place the same fraction of their demand day-ahead.
///
/// A stage that receives neither supply nor demand is reported at the
/// system marginal cost with `degenerate` set.
pub fn competitive_slope<T: Scalar>(market: &Market<T>, theta: Option<T>) -> Result<EquilibriumResult<T>> {
    let theta = theta.unwrap_or_else(T::one);
    if !(theta >= T::zero() && theta <= T::one()) {
        return Err(MarketError::ProfileMismatch(format!(
            "day-ahead slope fraction {theta} is outside [0, 1]"
        )));
    }
    let price = market.marginal_price();
    let one = T::one();
    let split = if theta == one {
        LoadSplit::all_day_ahead(market)
    } else if theta == T::zero() {
        LoadSplit::all_real_time(market)
    } else {
        LoadSplit::from_day_ahead(market, market.demands().map(|x| theta * x).collect())
    };
    let slopes_da: Vec<T> = market.costs().map(|c| theta / c).collect();
    let slopes_rt: Vec<T> = market.costs().map(|c| (one - theta) / c).collect();
    let side = |slopes: &[T], alloc: &[T]| {
        let mut s = stage(price, slopes.iter().map(|&b| b * price).collect(), alloc.to_vec());
        s.degenerate = slopes.iter().all(|&b| b == T::zero());
        s
    };
    let outcome = TwoStageOutcome {
        day_ahead: side(&slopes_da, &split.day_ahead),
        real_time: side(&slopes_rt, &split.real_time),
        bids: BidProfile {
            generators: GeneratorBids::Slope {
                day_ahead: slopes_da,
                real_time: slopes_rt,
            },
            load_da: split.day_ahead,
            load_rt: split.real_time,
        },
    };
    Ok(finish(
        market,
        Regime::SlopeStandard,
        Behavior::Competitive,
        outcome,
        "each generator's slope may be divided freely between stages; loads split in the same proportion",
    ))
}

pub fn nash_slope<T: Scalar>(market: &Market<T>) -> Result<EquilibriumResult<T>> {
    require_generators(market, 3, "slope-bid Nash")?;
    let c = require_homogeneous(market, "slope-bid Nash")?;
    let one = T::one();
    let two = T::lit(2.0);
    let n = market.n_generators();
    let g = T::count(n);
    let l = T::count(market.n_loads());
    let d = market.total_demand();

    let lg = l * (g - one);
    let slope_d = (lg + one) / lg * (g - two) / (g - one) / c;
    let slope_r = (g - two) * (g - two) / ((l + one) * (g - one) * (g - one) * c);
    let per_load = (lg + one) / (l * (l + one) * (g - one)) * d;
    let split = LoadSplit::from_day_ahead(market, vec![per_load; market.n_loads()]);
    let (dd, dr) = split.totals();

    let lam_d = l / (l + one) * (g - one) / (g - two) * c * d / g;
    let lam_r = (g - one) / (g - two) * c * d / g;
    let outcome = TwoStageOutcome {
        day_ahead: stage(lam_d, vec![dd / g; n], split.day_ahead.clone()),
        real_time: stage(lam_r, vec![dr / g; n], split.real_time.clone()),
        bids: BidProfile {
            generators: GeneratorBids::Slope {
                day_ahead: vec![slope_d; n],
                real_time: vec![slope_r; n],
            },
            load_da: split.day_ahead,
            load_rt: split.real_time,
        },
    };
    Ok(finish(market, Regime::SlopeStandard, Behavior::Nash, outcome, ""))
}

/// Dispatches to the solver for `(regime, behavior)` with canonical splits.
pub fn solve<T: Scalar>(market: &Market<T>, regime: Regime, behavior: Behavior) -> Result<EquilibriumResult<T>> {
    match (regime, behavior) {
        (Regime::Standard, Behavior::Competitive) => competitive_standard(market, None),
        (Regime::Standard, Behavior::Nash) => nash_standard(market),
        (Regime::RtMpm, Behavior::Competitive) => competitive_rt_mpm(market, None),
        (Regime::RtMpm, Behavior::Nash) => nash_rt_mpm(market),
        (Regime::DaMpm, Behavior::Competitive) => competitive_da_mpm(market),
        (Regime::DaMpm, Behavior::Nash) => nash_da_mpm(market),
        (Regime::SlopeStandard, Behavior::Competitive) => competitive_slope(market, None),
        (Regime::SlopeStandard, Behavior::Nash) => nash_slope(market),
    }
}
