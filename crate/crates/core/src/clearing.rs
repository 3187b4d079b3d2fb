//! Per-stage market clearing and the planner benchmarks.
//!
//! Stage demand is always passed as the per-load allocation vector; the
//! cleared quantity is its sum.

use crate::error::{MarketError, Result};
use crate::market::{BidProfile, GeneratorBids, Market, Regime, Stage, StageOutcome, TwoStageOutcome};
use crate::scalar::Scalar;

/// Clears `g_j = b·λ − β_j` against the stage demand.
pub fn clear_intercept_stage<T: Scalar>(intercepts: &[T], slope: T, load_alloc: &[T]) -> StageOutcome<T> {
    let demand: T = load_alloc.iter().copied().sum();
    let beta_sum: T = intercepts.iter().copied().sum();
    let price = (demand + beta_sum) / (slope * T::count(intercepts.len()));
    StageOutcome {
        price,
        gen_dispatch: intercepts.iter().map(|&b| slope * price - b).collect(),
        load_alloc: load_alloc.to_vec(),
        degenerate: false,
    }
}

/// Clears `g_j = b̂_j·λ` against the stage demand.
pub fn clear_slope_stage<T: Scalar>(slopes: &[T], load_alloc: &[T]) -> Result<StageOutcome<T>> {
    let demand: T = load_alloc.iter().copied().sum();
    let total: T = slopes.iter().copied().sum();
    if total == T::zero() {
        if demand != T::zero() {
            return Err(MarketError::DegeneratePrice {
                demand: demand.as_f64(),
            });
        }
        return Ok(StageOutcome {
            price: T::zero(),
            gen_dispatch: vec![T::zero(); slopes.len()],
            load_alloc: load_alloc.to_vec(),
            degenerate: true,
        });
    }
    let price = demand / total;
    Ok(StageOutcome {
        price,
        gen_dispatch: slopes.iter().map(|&s| s * price).collect(),
        load_alloc: load_alloc.to_vec(),
        degenerate: false,
    })
}

/// Truthful clearing: every generator offers `c_j⁻¹λ − prior_j`, i.e. its
/// marginal cost given what it already sold.
pub fn clear_cost_stage<T: Scalar>(market: &Market<T>, prior: &[T], load_alloc: &[T]) -> StageOutcome<T> {
    let demand: T = load_alloc.iter().copied().sum();
    let prior_sum: T = prior.iter().copied().sum();
    let price = (demand + prior_sum) / market.inv_cost_sum();
    StageOutcome {
        price,
        gen_dispatch: market
            .costs()
            .zip(prior)
            .map(|(c, &p)| price / c - p)
            .collect(),
        load_alloc: load_alloc.to_vec(),
        degenerate: false,
    }
}

/// Least-cost dispatch of the aggregate demand and its marginal price.
pub fn social_planner<T: Scalar>(market: &Market<T>) -> (Vec<T>, T) {
    let price = market.marginal_price();
    (market.costs().map(|c| price / c).collect(), price)
}

/// Real-time strategic subgame outcome given the day-ahead dispatch.
///
/// Minimizes `Σ g_j^r²/(2b^r(|G|−1)) + (c_j/2)(g_j^d + g_j^r)²` subject to
/// real-time balance; the dual of the balance row is the price.
pub fn augmented_planner<T: Scalar>(market: &Market<T>, g_da: &[T], load_alloc: &[T]) -> Result<StageOutcome<T>> {
    let n = market.n_generators();
    if n < 2 {
        return Err(MarketError::TooFewGenerators {
            required: 2,
            found: n,
            what: "the real-time strategic subgame",
        });
    }
    let demand: T = load_alloc.iter().copied().sum();
    let big_c: Vec<T> = (0..n).map(|j| market.augmented_cost(j)).collect();
    let k: T = big_c.iter().map(|c| c.recip()).sum();
    let shifted: T = (0..n).map(|j| market.cost(j) * g_da[j] / big_c[j]).sum();
    let price = (demand + shifted) / k;
    Ok(StageOutcome {
        price,
        gen_dispatch: (0..n)
            .map(|j| (price - market.cost(j) * g_da[j]) / big_c[j])
            .collect(),
        load_alloc: load_alloc.to_vec(),
        degenerate: false,
    })
}

/// Stationarity residual of the augmented planner for generator `j`.
pub fn augmented_kkt_residual<T: Scalar>(market: &Market<T>, g_da: T, g_rt: T, price: T, j: usize) -> T {
    let g = T::count(market.n_generators());
    g_rt / (market.slope_rt() * (g - T::one())) - price + market.cost(j) * (g_da + g_rt)
}

/// Re-clears a bid profile under the regime's clearing rules.
///
/// Mitigated stages ignore the submitted generator bids and clear truthfully.
pub fn clear_profile<T: Scalar>(market: &Market<T>, regime: Regime, bids: &BidProfile<T>) -> Result<TwoStageOutcome<T>> {
    bids.check(market)?;
    let zeros = vec![T::zero(); market.n_generators()];
    let (day_ahead, real_time) = match (&bids.generators, regime) {
        (GeneratorBids::Intercept { day_ahead, real_time }, Regime::Standard) => {
            let da = clear_intercept_stage(day_ahead, market.slope_da(), &bids.load_da);
            let rt = clear_intercept_stage(real_time, market.slope_rt(), &bids.load_rt);
            (da, rt)
        }
        (GeneratorBids::Intercept { day_ahead, .. }, Regime::RtMpm) => {
            let da = clear_intercept_stage(day_ahead, market.slope_da(), &bids.load_da);
            let rt = clear_cost_stage(market, &da.gen_dispatch, &bids.load_rt);
            (da, rt)
        }
        (GeneratorBids::Intercept { real_time, .. }, Regime::DaMpm) => {
            let da = clear_cost_stage(market, &zeros, &bids.load_da);
            let rt = clear_intercept_stage(real_time, market.slope_rt(), &bids.load_rt);
            (da, rt)
        }
        (GeneratorBids::Slope { day_ahead, real_time }, Regime::SlopeStandard) => {
            let da = clear_slope_stage(day_ahead, &bids.load_da)?;
            let rt = clear_slope_stage(real_time, &bids.load_rt)?;
            (da, rt)
        }
        (g, r) => {
            return Err(MarketError::ProfileMismatch(format!(
                "{:?} bids cannot clear under the {r} regime",
                g.kind()
            )))
        }
    };
    Ok(TwoStageOutcome {
        day_ahead,
        real_time,
        bids: bids.clone(),
    })
}

/// Intercept that makes a generator with slope `b` produce `g` at `price`.
#[inline]
pub fn equivalent_intercept<T: Scalar>(slope: T, price: T, dispatch: T) -> T {
    slope * price - dispatch
}

/// Equivalent intercepts for one stage of an outcome.
pub fn stage_intercepts<T: Scalar>(market: &Market<T>, stage: Stage, outcome: &StageOutcome<T>) -> Vec<T> {
    let b = market.slope(stage);
    outcome
        .gen_dispatch
        .iter()
        .map(|&g| equivalent_intercept(b, outcome.price, g))
        .collect()
}
