//! Parameter sweeps over market size and bid slopes.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibria::{da_share_standard, solve};
use crate::error::{MarketError, Result};
use crate::market::{Behavior, Market, MarketConfig, Regime};
use crate::scalar::Scalar;
use crate::settlement::{normalized_metrics, settle};

/// Half-width of the slope perturbation used when comparing mechanisms, $/MW².
pub const MECHANISM_EPSILON: f64 = 0.025;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    ProfitRatio,
    PaymentRatio,
    CostRatio,
    NormalizedDaAllocation,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::ProfitRatio => "profit-ratio",
            Metric::PaymentRatio => "payment-ratio",
            Metric::CostRatio => "cost-ratio",
            Metric::NormalizedDaAllocation => "normalized-da-allocation",
        })
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "profit" | "profit-ratio" => Ok(Metric::ProfitRatio),
            "payment" | "payment-ratio" => Ok(Metric::PaymentRatio),
            "cost" | "cost-ratio" => Ok(Metric::CostRatio),
            "da-allocation" | "normalized-da-allocation" => Ok(Metric::NormalizedDaAllocation),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis<T> {
    pub label: String,
    pub values: Vec<T>,
}

/// A metric evaluated on the product of two axes. `cells[iy][ix]` holds the
/// value at `(x_axis.values[ix], y_axis.values[iy])`; `None` marks cells whose
/// solver preconditions failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid<T> {
    pub label: String,
    pub metric: Metric,
    pub x_axis: Axis<T>,
    pub y_axis: Axis<T>,
    pub cells: Vec<Vec<Option<T>>>,
}

impl<T: Scalar> SweepGrid<T> {
    pub fn get(&self, ix: usize, iy: usize) -> Option<T> {
        self.cells.get(iy).and_then(|row| row.get(ix)).copied().flatten()
    }

    pub fn present(&self) -> impl Iterator<Item = T> + '_ {
        self.cells.iter().flatten().filter_map(|c| *c)
    }

    pub fn dims_match(&self) -> bool {
        self.cells.len() == self.y_axis.values.len()
            && self
                .cells
                .iter()
                .all(|row| row.len() == self.x_axis.values.len())
    }

    /// Allocation cells outside `[-1, 2]`; any entry indicates a solver bug.
    pub fn sanity_violations(&self) -> Vec<(usize, usize, T)> {
        if self.metric != Metric::NormalizedDaAllocation {
            return Vec::new();
        }
        let (lo, hi) = (-T::one(), T::lit(2.0));
        let mut out = Vec::new();
        for (iy, row) in self.cells.iter().enumerate() {
            for (ix, cell) in row.iter().enumerate() {
                if let Some(v) = *cell {
                    if !(v >= lo && v <= hi) {
                        out.push((ix, iy, v));
                    }
                }
            }
        }
        out
    }
}

/// Evaluates `f` on every `(x, y)` pair in parallel; rows follow `ys`.
fn grid_cells<T, F>(xs: &[T], ys: &[T], f: F) -> Vec<Vec<Option<T>>>
where
    T: Scalar,
    F: Fn(T, T) -> Option<T> + Sync,
{
    let flat: Vec<Option<T>> = (0..xs.len() * ys.len())
        .into_par_iter()
        .map(|k| f(xs[k % xs.len()], ys[k / xs.len()]))
        .collect();
    flat.chunks(xs.len().max(1)).map(<[_]>::to_vec).collect()
}

/// Homogeneous market with `n_gen` generators and the aggregate demand
/// divided equally among `n_load` loads.
pub fn homogeneous_instance<T: Scalar>(cost: T, demand: T, n_gen: usize, n_load: usize, slope_da: T, slope_rt: T) -> Result<Market<T>> {
    let per_load = demand / T::count(n_load.max(1));
    MarketConfig::homogeneous(n_gen, cost, &vec![per_load; n_load], slope_da, slope_rt).validate()
}

/// Nash-over-competitive metric of one market instance.
pub fn cell_metric<T: Scalar>(market: &Market<T>, regime: Regime, metric: Metric) -> Result<T> {
    let ne = solve(market, regime, Behavior::Nash)?;
    if metric == Metric::NormalizedDaAllocation {
        let d = market.total_demand();
        if d == T::zero() {
            return Err(MarketError::DivisionByZero { metric: "aggregate demand" });
        }
        return Ok(ne.outcome.bids.total_da_demand() / d);
    }
    let ce = solve(market, regime, Behavior::Competitive)?;
    let ratios = normalized_metrics(&settle(&ne.outcome, market), &settle(&ce.outcome, market))?;
    Ok(match metric {
        Metric::ProfitRatio => ratios.profit_ratio,
        Metric::PaymentRatio => ratios.payment_ratio,
        Metric::CostRatio => ratios.cost_ratio,
        Metric::NormalizedDaAllocation => unreachable!(),
    })
}

/// Metric over `(|G|, |L|)` holding aggregate demand and the cost
/// coefficient of `base` fixed. Slopes default to `b^d = b^r = 1/c`.
pub fn sweep_participants<T: Scalar>(
    base: &Market<T>,
    g_range: &[usize],
    l_range: &[usize],
    regime: Regime,
    metric: Metric,
    slopes: Option<(T, T)>,
) -> Result<SweepGrid<T>> {
    let c = base
        .homogeneous_cost()
        .ok_or(MarketError::HeterogeneousUnsupported { what: "participant sweeps" })?;
    let (bd, br) = slopes.unwrap_or((c.recip(), c.recip()));
    let d = base.total_demand();
    let xs: Vec<T> = g_range.iter().map(|&g| T::count(g)).collect();
    let ys: Vec<T> = l_range.iter().map(|&l| T::count(l)).collect();
    let cells = grid_cells(&xs, &ys, |x, y| {
        let (g, l) = (x.to_usize()?, y.to_usize()?);
        let m = homogeneous_instance(c, d, g, l, bd, br).ok()?;
        cell_metric(&m, regime, metric).ok()
    });
    Ok(SweepGrid {
        label: regime.to_string(),
        metric,
        x_axis: Axis {
            label: "generators".into(),
            values: xs,
        },
        y_axis: Axis {
            label: "loads".into(),
            values: ys,
        },
        cells,
    })
}

/// Normalized day-ahead allocation of the standard-market Nash equilibrium
/// over `(b^d, b^r)`.
pub fn sweep_slopes<T: Scalar>(market: &Market<T>, bd_range: &[T], br_range: &[T]) -> Result<SweepGrid<T>> {
    da_share_standard(market)?;
    if let Some(&bad) = bd_range.iter().chain(br_range).find(|b| !(**b > T::zero() && b.is_finite())) {
        return Err(MarketError::InvalidSlope {
            stage: if bd_range.contains(&bad) {
                crate::market::Stage::DayAhead
            } else {
                crate::market::Stage::RealTime
            },
            value: bad.as_f64(),
        });
    }
    let cells = grid_cells(bd_range, br_range, |bd, br| {
        let m = market.with_slopes(bd, br).ok()?;
        da_share_standard(&m).ok()
    });
    Ok(SweepGrid {
        label: "standard".into(),
        metric: Metric::NormalizedDaAllocation,
        x_axis: Axis {
            label: "slope_da".into(),
            values: bd_range.to_vec(),
        },
        y_axis: Axis {
            label: "slope_rt".into(),
            values: br_range.to_vec(),
        },
        cells,
    })
}

/// Intercept slopes `{(c+ε)⁻¹, c⁻¹, (c−ε)⁻¹}`.
pub fn mechanism_slopes<T: Scalar>(cost: T, eps: T) -> Result<Vec<T>> {
    if !(cost > eps) {
        return Err(MarketError::InvalidSlope {
            stage: crate::market::Stage::DayAhead,
            value: (cost - eps).recip().as_f64(),
        });
    }
    Ok(vec![(cost + eps).recip(), cost.recip(), (cost - eps).recip()])
}

/// Standard-market profit ratio for each intercept slope in `b_values`
/// (used in both stages), followed by the slope-bid mechanism.
pub fn compare_mechanisms<T: Scalar>(
    base: &Market<T>,
    b_values: &[T],
    g_range: &[usize],
    l_range: &[usize],
) -> Result<Vec<SweepGrid<T>>> {
    let mut grids = Vec::with_capacity(b_values.len() + 1);
    for (i, &b) in b_values.iter().enumerate() {
        let mut grid = sweep_participants(base, g_range, l_range, Regime::Standard, Metric::ProfitRatio, Some((b, b)))?;
        grid.label = format!("intercept-{}", i + 1);
        grids.push(grid);
    }
    let mut slope = sweep_participants(base, g_range, l_range, Regime::SlopeStandard, Metric::ProfitRatio, None)?;
    slope.label = "slope".into();
    grids.push(slope);
    Ok(grids)
}
