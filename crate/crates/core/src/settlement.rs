//! Profits, payments, social cost and normalized comparison metrics.

use serde::{Deserialize, Serialize};

use crate::error::{MarketError, Result};
use crate::market::{Market, TwoStageOutcome};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettlementReport<T> {
    /// Per-generator profit, $.
    pub profits: Vec<T>,
    /// Per-load payment, $.
    pub payments: Vec<T>,
    /// `Σ (c_j/2) g_j²`, $.
    pub social_cost: T,
    pub aggregate_profit: T,
    pub aggregate_payment: T,
}

impl<T: Scalar> SettlementReport<T> {
    /// Payment minus revenue paid to generators at the two uniform prices.
    pub fn merchandising_surplus(&self, outcome: &TwoStageOutcome<T>) -> T {
        self.aggregate_payment
            - outcome.day_ahead.price * outcome.day_ahead.supply()
            - outcome.real_time.price * outcome.real_time.supply()
    }
}

/// Generator profit at given prices and stage quantities.
#[inline]
pub fn generator_profit<T: Scalar>(cost: T, lam_d: T, g_d: T, lam_r: T, g_r: T) -> T {
    let g = g_d + g_r;
    lam_d * g_d + lam_r * g_r - cost / T::lit(2.0) * g * g
}

#[inline]
pub fn load_payment<T: Scalar>(lam_d: T, d_d: T, lam_r: T, d_r: T) -> T {
    lam_d * d_d + lam_r * d_r
}

pub fn settle<T: Scalar>(outcome: &TwoStageOutcome<T>, market: &Market<T>) -> SettlementReport<T> {
    let (da, rt) = (&outcome.day_ahead, &outcome.real_time);
    let profits: Vec<T> = (0..market.n_generators())
        .map(|j| {
            generator_profit(
                market.cost(j),
                da.price,
                da.gen_dispatch[j],
                rt.price,
                rt.gen_dispatch[j],
            )
        })
        .collect();
    let payments: Vec<T> = (0..market.n_loads())
        .map(|l| load_payment(da.price, da.load_alloc[l], rt.price, rt.load_alloc[l]))
        .collect();
    let social_cost = (0..market.n_generators())
        .map(|j| {
            let g = outcome.gen_total(j);
            market.cost(j) / T::lit(2.0) * g * g
        })
        .sum();
    SettlementReport {
        aggregate_profit: profits.iter().copied().sum(),
        aggregate_payment: payments.iter().copied().sum(),
        profits,
        payments,
        social_cost,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedMetrics<T> {
    pub cost_ratio: T,
    pub profit_ratio: T,
    pub payment_ratio: T,
}

/// Nash aggregates divided by competitive aggregates.
pub fn normalized_metrics<T: Scalar>(ne: &SettlementReport<T>, ce: &SettlementReport<T>) -> Result<NormalizedMetrics<T>> {
    let ratio = |num: T, den: T, metric: &'static str| {
        if den == T::zero() {
            Err(MarketError::DivisionByZero { metric })
        } else {
            Ok(num / den)
        }
    };
    Ok(NormalizedMetrics {
        cost_ratio: ratio(ne.social_cost, ce.social_cost, "social cost")?,
        profit_ratio: ratio(ne.aggregate_profit, ce.aggregate_profit, "aggregate profit")?,
        payment_ratio: ratio(ne.aggregate_payment, ce.aggregate_payment, "aggregate payment")?,
    })
}

/// `Σ c_j/C_j² − (Σ C_j⁻¹)²/Σ c_j⁻¹`; zero for a homogeneous fleet.
pub fn heterogeneity_delta<T: Scalar>(market: &Market<T>) -> Result<T> {
    let n = market.n_generators();
    if n < 2 {
        return Err(MarketError::TooFewGenerators {
            required: 2,
            found: n,
            what: "the heterogeneity term",
        });
    }
    let mut weighted = T::zero();
    let mut k = T::zero();
    for j in 0..n {
        let cj = market.augmented_cost(j);
        weighted = weighted + market.cost(j) / (cj * cj);
        k = k + cj.recip();
    }
    Ok(weighted - k * k / market.inv_cost_sum())
}
