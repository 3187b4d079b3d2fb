//! Numerical verification of claimed equilibria.
//!
//! Two independent checks run for every participant: stationarity residuals
//! of its individual problem, and a derivative-free best-response search over
//! each of its free bids with all other bids held fixed. Strategic checks
//! re-clear the market for each candidate, propagating day-ahead deviations
//! through the real-time subgame; competitive checks hold prices fixed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clearing::{
    augmented_planner, augmented_kkt_residual, clear_cost_stage, clear_intercept_stage,
    clear_profile, clear_slope_stage,
};
use crate::error::{MarketError, Result};
use crate::market::{
    Behavior, BidKind, BidProfile, EquilibriumResult, Market, Regime, Stage, StageOutcome,
    TwoStageOutcome,
};
use crate::scalar::{Scalar, BALANCE_RTOL};
use crate::settlement::{generator_profit, load_payment};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Generator,
    Load,
}

/// Best-response search settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchParams {
    /// Half-width of the coarse grid; `None` uses `max(1, |bid|)`.
    pub grid_radius: Option<f64>,
    pub grid_points: usize,
    pub refine_iters: usize,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            grid_radius: None,
            grid_points: 41,
            refine_iters: 30,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticipantCheck<T> {
    pub id: String,
    pub role: Role,
    /// Profit for generators, payment for loads, under the verification model.
    pub baseline: T,
    /// Largest objective improvement found (profit gain or payment reduction).
    pub best_deviation_gain: T,
    /// Stationarity residual of largest magnitude over the free bids.
    pub foc_residual: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Verdict<T> {
    Verified,
    Violated {
        participant: String,
        gain: T,
        foc_residual: T,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport<T> {
    pub regime: Regime,
    pub behavior: Behavior,
    /// Relative supply-demand mismatch of the day-ahead and real-time stages.
    pub balance_residuals: [T; 2],
    pub participants: Vec<ParticipantCheck<T>>,
    /// `max(|λ^d|, |λ^r|)`, or 1 when both vanish; FOC residuals are compared
    /// against `tolerance * price_scale`.
    pub price_scale: T,
    pub tolerance: T,
    pub verdict: Verdict<T>,
}

impl<T: Scalar> VerificationReport<T> {
    pub fn is_verified(&self) -> bool {
        matches!(self.verdict, Verdict::Verified)
    }

    pub fn foc_residuals(&self) -> Vec<(&str, T)> {
        self.participants
            .iter()
            .map(|p| (p.id.as_str(), p.foc_residual))
            .collect()
    }

    pub fn best_deviation_gains(&self) -> Vec<(&str, T)> {
        self.participants
            .iter()
            .map(|p| (p.id.as_str(), p.best_deviation_gain))
            .collect()
    }
}

/// Strategic slope-bid subgame of the real-time stage.
///
/// With day-ahead positions fixed, each generator picks a share `s_j` of the
/// real-time demand; stationarity gives
/// `λ(1 − 2s_j) = c_j(g_j^d + s_j d^r)(1 − s_j)`, and the price is found by
/// bisection on `Σ s_j = 1`.
pub fn slope_rt_subgame<T: Scalar>(market: &Market<T>, g_da: &[T], load_alloc: &[T]) -> Result<StageOutcome<T>> {
    let n = market.n_generators();
    let demand: T = load_alloc.iter().copied().sum();
    if demand == T::zero() {
        return Ok(StageOutcome {
            price: T::zero(),
            gen_dispatch: vec![T::zero(); n],
            load_alloc: load_alloc.to_vec(),
            degenerate: false,
        });
    }
    if demand < T::zero() {
        return Err(MarketError::NoSubgameEquilibrium(format!(
            "negative real-time demand {demand}"
        )));
    }
    if n < 3 {
        return Err(MarketError::NoSubgameEquilibrium(format!(
            "slope shares stay below 1/2, so {n} generator(s) cannot cover the demand"
        )));
    }
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let share = |lam: T, j: usize| -> T {
        let c = market.cost(j);
        let excess = lam - c * g_da[j];
        if excess <= T::zero() {
            return T::zero();
        }
        let b = two * lam + c * (demand - g_da[j]);
        let disc = (b * b - four * c * demand * excess).max(T::zero());
        two * excess / (b + disc.sqrt())
    };
    let total = |lam: T| (0..n).map(|j| share(lam, j)).sum::<T>();

    let mut lo = (0..n)
        .map(|j| market.cost(j) * g_da[j])
        .fold(T::infinity(), T::min)
        .min(T::zero());
    let mut hi = (0..n)
        .map(|j| market.cost(j) * (g_da[j].abs() + demand))
        .fold(T::zero(), T::max)
        .max(T::min_positive_value());
    let mut doublings = 0;
    while total(hi) < T::one() {
        hi = hi * two;
        doublings += 1;
        if doublings > 2000 || !hi.is_finite() {
            return Err(MarketError::NoSubgameEquilibrium(
                "no real-time price clears the slope shares".into(),
            ));
        }
    }
    for _ in 0..300 {
        let mid = (lo + hi) / two;
        if mid <= lo || mid >= hi {
            break;
        }
        if total(mid) < T::one() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let price = (lo + hi) / two;
    let shares: Vec<T> = (0..n).map(|j| share(price, j)).collect();
    let sum: T = shares.iter().copied().sum();
    Ok(StageOutcome {
        price,
        gen_dispatch: shares.iter().map(|&s| s / sum * demand).collect(),
        load_alloc: load_alloc.to_vec(),
        degenerate: false,
    })
}

/// Re-clears a bid profile and wraps it as a claimed equilibrium.
pub fn result_from_bids<T: Scalar>(
    market: &Market<T>,
    regime: Regime,
    behavior: Behavior,
    bids: &BidProfile<T>,
) -> Result<EquilibriumResult<T>> {
    if bids.kind() != regime.bid_kind() {
        return Err(MarketError::ProfileMismatch(format!(
            "{:?} bids supplied for the {regime} regime",
            bids.kind()
        )));
    }
    let outcome = clear_profile(market, regime, bids)?;
    Ok(EquilibriumResult {
        regime,
        behavior,
        outcome,
        degrees_of_freedom: String::new(),
        symmetric: false,
        warnings: Vec::new(),
    })
}

fn replaced<T: Copy>(v: &[T], i: usize, x: T) -> Vec<T> {
    let mut out = v.to_vec();
    out[i] = x;
    out
}

/// Participant objectives and stationarity conditions for one claimed
/// outcome under one behavioral model.
struct Model<'a, T> {
    market: &'a Market<T>,
    regime: Regime,
    behavior: Behavior,
    outcome: &'a TwoStageOutcome<T>,
}

impl<'a, T: Scalar> Model<'a, T> {
    fn free_stages(&self, role: Role) -> &'static [Stage] {
        match (role, self.regime) {
            (Role::Load, _) => &[Stage::DayAhead],
            (Role::Generator, Regime::Standard | Regime::SlopeStandard) => {
                &[Stage::DayAhead, Stage::RealTime]
            }
            (Role::Generator, Regime::RtMpm) => &[Stage::DayAhead],
            (Role::Generator, Regime::DaMpm) => &[Stage::RealTime],
        }
    }

    fn check_pair(&self, role: Role, idx: usize, stage: Stage) -> Result<()> {
        if self.free_stages(role).contains(&stage) {
            return Ok(());
        }
        let participant = match role {
            Role::Generator => format!("generator `{}`", self.market.generators()[idx].id),
            Role::Load => format!("load `{}`", self.market.loads()[idx].id),
        };
        Err(MarketError::UnsupportedRegimePair {
            participant,
            stage,
            regime: self.regime,
        })
    }

    fn bids(&self) -> &BidProfile<T> {
        &self.outcome.bids
    }

    fn incumbent(&self, role: Role, idx: usize, stage: Stage) -> T {
        match role {
            Role::Generator => self.bids().generators.stage(stage)[idx],
            Role::Load => self.bids().load_da[idx],
        }
    }

    fn lower_bound(&self, role: Role) -> Option<T> {
        (role == Role::Generator && self.regime.bid_kind() == BidKind::Slope).then(T::zero)
    }

    fn profit(&self, j: usize, da: &StageOutcome<T>, rt: &StageOutcome<T>) -> T {
        generator_profit(
            self.market.cost(j),
            da.price,
            da.gen_dispatch[j],
            rt.price,
            rt.gen_dispatch[j],
        )
    }

    /// Day-ahead clearing for given generator bids and load quantities.
    fn clear_da(&self, gen_da: &[T], load_da: &[T]) -> Option<StageOutcome<T>> {
        match self.regime {
            Regime::Standard | Regime::RtMpm => {
                Some(clear_intercept_stage(gen_da, self.market.slope_da(), load_da))
            }
            Regime::DaMpm => {
                let zeros = vec![T::zero(); self.market.n_generators()];
                Some(clear_cost_stage(self.market, &zeros, load_da))
            }
            Regime::SlopeStandard => clear_slope_stage(gen_da, load_da).ok(),
        }
    }

    /// Real-time clearing at a fixed day-ahead outcome with submitted bids.
    fn clear_rt(&self, gen_rt: &[T], load_rt: &[T]) -> Option<StageOutcome<T>> {
        match self.regime {
            Regime::Standard | Regime::DaMpm => {
                Some(clear_intercept_stage(gen_rt, self.market.slope_rt(), load_rt))
            }
            Regime::SlopeStandard => clear_slope_stage(gen_rt, load_rt).ok(),
            Regime::RtMpm => None,
        }
    }

    /// Real-time outcome once generators respond strategically (or, under
    /// real-time mitigation, truthfully) to a day-ahead outcome.
    fn rt_response(&self, da: &StageOutcome<T>, load_rt: &[T]) -> Result<Option<StageOutcome<T>>> {
        match self.regime {
            Regime::Standard | Regime::DaMpm => {
                augmented_planner(self.market, &da.gen_dispatch, load_rt).map(Some)
            }
            Regime::RtMpm => Ok(Some(clear_cost_stage(self.market, &da.gen_dispatch, load_rt))),
            Regime::SlopeStandard => {
                let demand: T = load_rt.iter().copied().sum();
                if demand < T::zero() {
                    return Ok(None);
                }
                slope_rt_subgame(self.market, &da.gen_dispatch, load_rt).map(Some)
            }
        }
    }

    /// Objective to maximize: profit for generators, minus payment for loads.
    fn objective(&self, role: Role, idx: usize, stage: Stage, x: T) -> Result<Option<T>> {
        if let Some(lb) = self.lower_bound(role) {
            if x < lb {
                return Ok(None);
            }
        }
        match self.behavior {
            Behavior::Nash => self.strategic_objective(role, idx, stage, x),
            Behavior::Competitive => Ok(Some(self.price_taking_objective(role, idx, stage, x))),
        }
    }

    fn strategic_objective(&self, role: Role, idx: usize, stage: Stage, x: T) -> Result<Option<T>> {
        let bids = self.bids();
        match (role, stage) {
            (Role::Generator, Stage::DayAhead) => {
                let gen_da = replaced(bids.generators.stage(Stage::DayAhead), idx, x);
                let Some(da) = self.clear_da(&gen_da, &bids.load_da) else {
                    return Ok(None);
                };
                Ok(self
                    .rt_response(&da, &bids.load_rt)?
                    .map(|rt| self.profit(idx, &da, &rt)))
            }
            (Role::Generator, Stage::RealTime) => {
                let gen_rt = replaced(bids.generators.stage(Stage::RealTime), idx, x);
                Ok(self
                    .clear_rt(&gen_rt, &bids.load_rt)
                    .map(|rt| self.profit(idx, &self.outcome.day_ahead, &rt)))
            }
            (Role::Load, _) => {
                let load_da = replaced(&bids.load_da, idx, x);
                let rest = self.market.demand(idx) - x;
                let load_rt = replaced(&bids.load_rt, idx, rest);
                let Some(da) = self.clear_da(bids.generators.stage(Stage::DayAhead), &load_da) else {
                    return Ok(None);
                };
                Ok(self
                    .rt_response(&da, &load_rt)?
                    .map(|rt| -load_payment(da.price, x, rt.price, rest)))
            }
        }
    }

    /// Own dispatch implied by bid `x` at fixed clearing price.
    fn dispatch_at(&self, stage: Stage, price: T, x: T) -> T {
        match self.regime.bid_kind() {
            BidKind::Intercept => self.market.slope(stage) * price - x,
            BidKind::Slope => x * price,
        }
    }

    fn price_taking_objective(&self, role: Role, idx: usize, stage: Stage, x: T) -> T {
        let (lam_d, lam_r) = (self.outcome.day_ahead.price, self.outcome.real_time.price);
        match role {
            Role::Load => -load_payment(lam_d, x, lam_r, self.market.demand(idx) - x),
            Role::Generator => {
                let mut g_d = self.outcome.day_ahead.gen_dispatch[idx];
                let mut g_r = self.outcome.real_time.gen_dispatch[idx];
                match stage {
                    Stage::DayAhead => {
                        g_d = self.dispatch_at(stage, lam_d, x);
                        if self.regime == Regime::RtMpm {
                            g_r = lam_r / self.market.cost(idx) - g_d;
                        }
                    }
                    Stage::RealTime => g_r = self.dispatch_at(stage, lam_r, x),
                }
                generator_profit(self.market.cost(idx), lam_d, g_d, lam_r, g_r)
            }
        }
    }

    fn baseline(&self, role: Role, idx: usize) -> Result<T> {
        let stage = self.free_stages(role)[0];
        let x0 = self.incumbent(role, idx, stage);
        let value = self.objective(role, idx, stage, x0)?.ok_or_else(|| {
            MarketError::NoSubgameEquilibrium("claimed outcome has no feasible continuation".into())
        })?;
        Ok(match role {
            Role::Generator => value,
            Role::Load => -value,
        })
    }

    /// Stationarity residual for one free bid, in price units.
    fn foc(&self, role: Role, idx: usize, stage: Stage) -> Result<T> {
        self.check_pair(role, idx, stage)?;
        match self.behavior {
            Behavior::Competitive => Ok(self.price_taking_foc(role, idx, stage)),
            Behavior::Nash => self.strategic_foc(role, idx, stage),
        }
    }

    fn price_taking_foc(&self, role: Role, idx: usize, stage: Stage) -> T {
        let (lam_d, lam_r) = (self.outcome.day_ahead.price, self.outcome.real_time.price);
        match role {
            Role::Load => lam_d - lam_r,
            Role::Generator if self.regime == Regime::RtMpm => lam_d - lam_r,
            Role::Generator => {
                self.outcome.stage(stage).price - self.market.cost(idx) * self.outcome.gen_total(idx)
            }
        }
    }

    fn strategic_foc(&self, role: Role, idx: usize, stage: Stage) -> Result<T> {
        let m = self.market;
        let one = T::one();
        let n = T::count(m.n_generators());
        let da = &self.outcome.day_ahead;
        let bids = self.bids();
        match (self.regime, role, stage) {
            (Regime::Standard | Regime::DaMpm, Role::Generator, Stage::RealTime) => {
                if m.n_generators() < 2 {
                    return Err(MarketError::TooFewGenerators {
                        required: 2,
                        found: m.n_generators(),
                        what: "strategic real-time verification",
                    });
                }
                let rt = &self.outcome.real_time;
                Ok(augmented_kkt_residual(
                    m,
                    da.gen_dispatch[idx],
                    rt.gen_dispatch[idx],
                    rt.price,
                    idx,
                ))
            }
            (Regime::Standard, Role::Generator, Stage::DayAhead) => {
                let rt = augmented_planner(m, &da.gen_dispatch, &bids.load_rt)?;
                let (k, mean_ratio) = self.augmented_sums();
                let cj = m.cost(idx);
                let big_c = m.augmented_cost(idx);
                let d_lam_d = (m.slope_da() * n).recip();
                let d_gd = n.recip() - one;
                let d_lam_r = (mean_ratio - cj / big_c) / k;
                let d_gr = (d_lam_r - cj * d_gd) / big_c;
                let (g_d, g_r) = (da.gen_dispatch[idx], rt.gen_dispatch[idx]);
                Ok(d_lam_d * g_d + da.price * d_gd + d_lam_r * g_r + rt.price * d_gr
                    - cj * (g_d + g_r) * (d_gd + d_gr))
            }
            (Regime::RtMpm, Role::Generator, Stage::DayAhead) => {
                let rt = clear_cost_stage(m, &da.gen_dispatch, &bids.load_rt);
                Ok(da.gen_dispatch[idx] / (m.slope_da() * n) + (da.price - rt.price) * (n.recip() - one))
            }
            (Regime::SlopeStandard, Role::Generator, Stage::RealTime) => {
                let rt = &self.outcome.real_time;
                let slopes = bids.generators.stage(Stage::RealTime);
                let total: T = slopes.iter().copied().sum();
                if total == T::zero() {
                    return Ok(T::zero());
                }
                let s = slopes[idx] / total;
                Ok(rt.price * (one - s - s) - m.cost(idx) * self.outcome.gen_total(idx) * (one - s))
            }
            (Regime::SlopeStandard, Role::Generator, Stage::DayAhead) => {
                let deriv = self.numeric_derivative(role, idx, stage)?;
                Ok(if da.price != T::zero() { deriv / da.price } else { deriv })
            }
            (Regime::Standard, Role::Load, _) => {
                let rt = augmented_planner(m, &da.gen_dispatch, &bids.load_rt)?;
                let (k, mean_ratio) = self.augmented_sums();
                let x = bids.load_da[idx];
                let d_lam_r = (mean_ratio - one) / k;
                Ok(x / (m.slope_da() * n) + da.price + d_lam_r * (m.demand(idx) - x) - rt.price)
            }
            (Regime::RtMpm, Role::Load, _) => {
                let rt = clear_cost_stage(m, &da.gen_dispatch, &bids.load_rt);
                Ok(bids.load_da[idx] / (m.slope_da() * n) + da.price - rt.price)
            }
            (Regime::DaMpm, Role::Load, _) => {
                let rt = augmented_planner(m, &da.gen_dispatch, &bids.load_rt)?;
                let s = m.inv_cost_sum();
                let k = m.augmented_inv_sum();
                let x = bids.load_da[idx];
                Ok(x / s + da.price + (m.demand(idx) - x) * (s.recip() - k.recip()) - rt.price)
            }
            (Regime::SlopeStandard, Role::Load, _) => {
                // objective is minus the payment
                Ok(-self.numeric_derivative(role, idx, stage)?)
            }
            (regime, role, stage) => unreachable!("{regime} {role:?} {stage} filtered by check_pair"),
        }
    }

    /// `(Σ C_j⁻¹, mean_j c_j/C_j)` for the augmented real-time subgame.
    fn augmented_sums(&self) -> (T, T) {
        let m = self.market;
        let k = m.augmented_inv_sum();
        let ratio: T = (0..m.n_generators())
            .map(|j| m.cost(j) / m.augmented_cost(j))
            .sum();
        (k, ratio / T::count(m.n_generators()))
    }

    /// Central difference, falling back to a one-sided difference where a
    /// neighbor is infeasible.
    fn numeric_derivative(&self, role: Role, idx: usize, stage: Stage) -> Result<T> {
        let x0 = self.incumbent(role, idx, stage);
        let h = T::lit(1e-6) * x0.abs().max(T::lit(1e-3));
        let mid = self.objective(role, idx, stage, x0)?;
        let up = self.objective(role, idx, stage, x0 + h)?;
        let down = self.objective(role, idx, stage, x0 - h)?;
        Ok(match (down, mid, up) {
            (Some(a), _, Some(b)) => (b - a) / (h + h),
            (None, Some(a), Some(b)) => (b - a) / h,
            (Some(b), Some(a), None) => (a - b) / h,
            _ => T::zero(),
        })
    }

    fn best_gain(&self, role: Role, idx: usize, stage: Stage, params: &SearchParams) -> Result<T> {
        self.check_pair(role, idx, stage)?;
        let x0 = self.incumbent(role, idx, stage);
        let f0 = self.objective(role, idx, stage, x0)?.ok_or_else(|| {
            MarketError::NoSubgameEquilibrium("claimed outcome has no feasible continuation".into())
        })?;
        let radius = params
            .grid_radius
            .map(T::lit)
            .unwrap_or_else(|| T::one().max(x0.abs()));
        let lb = self.lower_bound(role);
        let best = maximize(
            |x| self.objective(role, idx, stage, x),
            x0,
            f0,
            radius,
            lb,
            params,
        )?;
        Ok((best - f0).max(T::zero()))
    }
}

/// Coarse grid around `x0`, then golden-section refinement around the best
/// grid point. Returns the best objective value seen, never below `f0`.
fn maximize<T, F>(f: F, x0: T, f0: T, radius: T, lower: Option<T>, params: &SearchParams) -> Result<T>
where
    T: Scalar,
    F: Fn(T) -> Result<Option<T>>,
{
    let n = params.grid_points.max(3);
    let step = (radius + radius) / T::count(n - 1);
    let clip = |x: T| match lower {
        Some(lb) => x.max(lb),
        None => x,
    };
    let mut best_x = x0;
    let mut best_f = f0;
    for i in 0..n {
        let x = clip(x0 - radius + step * T::count(i));
        if let Some(v) = f(x)? {
            if v > best_f {
                best_f = v;
                best_x = x;
            }
        }
    }
    let phi = T::lit(0.5 * (5f64.sqrt() - 1.0));
    let mut a = clip(best_x - step);
    let mut b = best_x + step;
    let eval = |x: T, best_x: &mut T, best_f: &mut T| -> Result<T> {
        let v = f(x)?.unwrap_or(T::neg_infinity());
        if v > *best_f {
            *best_f = v;
            *best_x = x;
        }
        Ok(v)
    };
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = eval(c, &mut best_x, &mut best_f)?;
    let mut fd = eval(d, &mut best_x, &mut best_f)?;
    let stop = T::lit(1e-10) * radius;
    for _ in 0..params.refine_iters {
        if b - a < stop {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = eval(c, &mut best_x, &mut best_f)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = eval(d, &mut best_x, &mut best_f)?;
        }
    }
    Ok(best_f)
}

fn role_count<T: Scalar>(market: &Market<T>, role: Role) -> usize {
    match role {
        Role::Generator => market.n_generators(),
        Role::Load => market.n_loads(),
    }
}

fn participant_id<T: Scalar>(market: &Market<T>, role: Role, idx: usize) -> String {
    match role {
        Role::Generator => market.generators()[idx].id.clone(),
        Role::Load => market.loads()[idx].id.clone(),
    }
}

fn model<'a, T: Scalar>(eq: &'a EquilibriumResult<T>, market: &'a Market<T>, behavior: Behavior) -> Result<Model<'a, T>> {
    eq.outcome.bids.check(market)?;
    if eq.outcome.bids.kind() != eq.regime.bid_kind() {
        return Err(MarketError::ProfileMismatch(format!(
            "{:?} bids in a {} result",
            eq.outcome.bids.kind(),
            eq.regime
        )));
    }
    Ok(Model {
        market,
        regime: eq.regime,
        behavior,
        outcome: &eq.outcome,
    })
}

/// Best profit gain of generator `j` over all of its free bids.
pub fn best_response_generator<T: Scalar>(
    eq: &EquilibriumResult<T>,
    market: &Market<T>,
    j: usize,
    params: &SearchParams,
) -> Result<T> {
    let m = model(eq, market, eq.behavior)?;
    m.free_stages(Role::Generator)
        .iter()
        .try_fold(T::zero(), |acc, &st| Ok(acc.max(m.best_gain(Role::Generator, j, st, params)?)))
}

/// Best profit gain of generator `j` from its bid in one stage.
pub fn best_response_generator_stage<T: Scalar>(
    eq: &EquilibriumResult<T>,
    market: &Market<T>,
    j: usize,
    stage: Stage,
    params: &SearchParams,
) -> Result<T> {
    model(eq, market, eq.behavior)?.best_gain(Role::Generator, j, stage, params)
}

/// Best payment reduction of load `l` from moving demand between stages.
pub fn best_response_load<T: Scalar>(
    eq: &EquilibriumResult<T>,
    market: &Market<T>,
    l: usize,
    params: &SearchParams,
) -> Result<T> {
    model(eq, market, eq.behavior)?.best_gain(Role::Load, l, Stage::DayAhead, params)
}

/// Stationarity residual of one participant's bid in one stage.
pub fn foc_residual<T: Scalar>(
    eq: &EquilibriumResult<T>,
    market: &Market<T>,
    role: Role,
    idx: usize,
    stage: Stage,
) -> Result<T> {
    model(eq, market, eq.behavior)?.foc(role, idx, stage)
}

/// Residual of largest magnitude per participant, generators first.
pub fn foc_residuals<T: Scalar>(eq: &EquilibriumResult<T>, market: &Market<T>) -> Result<Vec<(String, T)>> {
    let m = model(eq, market, eq.behavior)?;
    let mut out = Vec::new();
    for role in [Role::Generator, Role::Load] {
        for idx in 0..role_count(market, role) {
            out.push((participant_id(market, role, idx), worst_foc(&m, role, idx)?));
        }
    }
    Ok(out)
}

fn worst_foc<T: Scalar>(m: &Model<'_, T>, role: Role, idx: usize) -> Result<T> {
    let mut worst = T::zero();
    for &st in m.free_stages(role) {
        let r = m.foc(role, idx, st)?;
        if r.abs() > worst.abs() || r.is_nan() {
            worst = r;
        }
    }
    Ok(worst)
}

/// Verifies under the behavior the result claims.
pub fn verify_equilibrium<T: Scalar>(eq: &EquilibriumResult<T>, market: &Market<T>, tolerance: T) -> Result<VerificationReport<T>> {
    verify_with(eq, market, eq.behavior, tolerance, &SearchParams::default())
}

/// Verifies an outcome as an equilibrium of the given behavior, which need
/// not be the one it was computed under.
pub fn verify_with<T: Scalar>(
    eq: &EquilibriumResult<T>,
    market: &Market<T>,
    behavior: Behavior,
    tolerance: T,
    params: &SearchParams,
) -> Result<VerificationReport<T>> {
    let m = model(eq, market, behavior)?;
    let slots: Vec<(Role, usize)> = [Role::Generator, Role::Load]
        .into_iter()
        .flat_map(|role| (0..role_count(market, role)).map(move |i| (role, i)))
        .collect();
    let participants: Vec<ParticipantCheck<T>> = slots
        .par_iter()
        .map(|&(role, idx)| -> Result<ParticipantCheck<T>> {
            let mut gain = T::zero();
            for &st in m.free_stages(role) {
                gain = gain.max(m.best_gain(role, idx, st, params)?);
            }
            Ok(ParticipantCheck {
                id: participant_id(market, role, idx),
                role,
                baseline: m.baseline(role, idx)?,
                best_deviation_gain: gain,
                foc_residual: worst_foc(&m, role, idx)?,
            })
        })
        .collect::<Result<_>>()?;

    let o = &eq.outcome;
    let balance = |s: &StageOutcome<T>| (s.supply() - s.demand()).abs() / T::one().max(s.demand().abs());
    let balance_residuals = [balance(&o.day_ahead), balance(&o.real_time)];
    let price_scale = {
        let p = o.day_ahead.price.abs().max(o.real_time.price.abs());
        if p > T::zero() {
            p
        } else {
            T::one()
        }
    };

    let mut verdict = Verdict::Verified;
    let mut worst = T::one();
    if balance_residuals.iter().any(|&r| !(r <= T::lit(BALANCE_RTOL))) {
        verdict = Verdict::Violated {
            participant: "market balance".into(),
            gain: T::zero(),
            foc_residual: T::zero(),
        };
        worst = T::infinity();
    }
    for p in &participants {
        let gain_score = p.best_deviation_gain / (tolerance * T::one().max(p.baseline.abs()));
        let foc_score = p.foc_residual.abs() / (tolerance * price_scale);
        let score = if gain_score.is_nan() || foc_score.is_nan() {
            T::infinity()
        } else {
            gain_score.max(foc_score)
        };
        if score > worst {
            worst = score;
            verdict = Verdict::Violated {
                participant: p.id.clone(),
                gain: p.best_deviation_gain,
                foc_residual: p.foc_residual,
            };
        }
    }
    Ok(VerificationReport {
        regime: eq.regime,
        behavior,
        balance_residuals,
        participants,
        price_scale,
        tolerance,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::{competitive_standard, nash_da_mpm, nash_rt_mpm, nash_standard, solve};
    use crate::market::{GeneratorBids, MarketConfig};

    fn homog() -> Market<f64> {
        MarketConfig::<f64>::homogeneous(3, 0.7, &[1.0, 2.5, 4.0], 1.3, 2.1)
            .validate()
            .unwrap()
    }

    fn hetero() -> Market<f64> {
        MarketConfig::<f64>::from_parts(&[0.3, 1.1, 0.7], &[4.0, 1.0], 2.0, 1.5)
            .validate()
            .unwrap()
    }

    #[test]
    fn closed_form_nash_outcomes_verify() {
        let m = homog();
        for regime in [Regime::Standard, Regime::RtMpm, Regime::DaMpm] {
            let eq = solve(&m, regime, Behavior::Nash).unwrap();
            let rep = verify_equilibrium(&eq, &m, 1e-5).unwrap();
            assert!(rep.is_verified(), "{regime}: {:?}", rep);
        }
        let m = hetero();
        for eq in [nash_rt_mpm(&m).unwrap(), nash_da_mpm(&m).unwrap()] {
            let rep = verify_equilibrium(&eq, &m, 1e-5).unwrap();
            assert!(rep.is_verified(), "{:?}", rep);
        }
    }

    #[test]
    fn da_mpm_residuals_vanish() {
        let m = hetero();
        let eq = nash_da_mpm(&m).unwrap();
        for (_, r) in foc_residuals(&eq, &m).unwrap() {
            assert!(r.abs() < 1e-9, "{r}");
        }
    }

    #[test]
    fn competitive_outcomes_verify_as_price_takers() {
        for m in [homog(), hetero()] {
            for regime in Regime::ALL {
                let eq = solve(&m, regime, Behavior::Competitive).unwrap();
                let rep = verify_equilibrium(&eq, &m, 1e-5).unwrap();
                assert!(rep.is_verified(), "{regime}: {:?}", rep.verdict);
            }
        }
    }

    #[test]
    fn competitive_outcome_is_exploitable_by_strategic_generators() {
        let m = MarketConfig::<f64>::homogeneous(2, 1.0, &[4.0], 1.0, 1.0).validate().unwrap();
        let eq = competitive_standard(&m, None).unwrap();
        let nash_view = EquilibriumResult {
            behavior: Behavior::Nash,
            ..eq
        };
        let gain = best_response_generator(&nash_view, &m, 0, &SearchParams::default()).unwrap();
        assert!(gain > 1e-3, "gain {gain}");
    }

    #[test]
    fn transplanted_bids_fail_on_heterogeneous_costs() {
        let base = homog();
        let eq = nash_standard(&base).unwrap();
        let other = base.with_costs(&[0.5, 0.7, 1.0]).unwrap();
        let re = result_from_bids(&other, Regime::Standard, Behavior::Nash, &eq.outcome.bids).unwrap();
        assert!(!verify_equilibrium(&re, &other, 1e-5).unwrap().is_verified());
    }

    #[test]
    fn one_percent_perturbation_is_detected() {
        let m = homog();
        let eq = nash_standard(&m).unwrap();
        let mut bids = eq.outcome.bids.clone();
        let GeneratorBids::Intercept { real_time, .. } = &mut bids.generators else {
            panic!()
        };
        real_time[1] *= 1.01;
        let re = result_from_bids(&m, Regime::Standard, Behavior::Nash, &bids).unwrap();
        let rep = verify_equilibrium(&re, &m, 1e-5).unwrap();
        assert!(matches!(rep.verdict, Verdict::Violated { ref participant, .. } if participant == "G2"));
    }

    #[test]
    fn unsupported_pair_is_reported() {
        let m = homog();
        let eq = nash_rt_mpm(&m).unwrap();
        let err = best_response_generator_stage(&eq, &m, 0, Stage::RealTime, &SearchParams::default());
        assert!(matches!(err, Err(MarketError::UnsupportedRegimePair { .. })));
        let err = foc_residual(&eq, &m, Role::Generator, 0, Stage::RealTime);
        assert!(matches!(err, Err(MarketError::UnsupportedRegimePair { .. })));
    }

    #[test]
    fn zero_demand_has_no_gain() {
        let m = MarketConfig::<f64>::homogeneous(3, 1.0, &[0.0], 1.0, 1.0).validate().unwrap();
        for regime in Regime::ALL {
            let eq = solve(&m, regime, Behavior::Nash).unwrap();
            let rep = verify_equilibrium(&eq, &m, 1e-5).unwrap();
            for p in &rep.participants {
                assert_eq!(p.best_deviation_gain, 0.0);
                assert!(p.foc_residual.abs() < 1e-8);
            }
        }
    }

    #[test]
    fn slope_subgame_symmetric_price() {
        let c = 0.7;
        let m = MarketConfig::<f64>::homogeneous(4, c, &[3.0], 1.0, 1.0).validate().unwrap();
        let gd = [0.5; 4];
        let rt = slope_rt_subgame(&m, &gd, &[1.0]).unwrap();
        let expect = c * 3.0 * 3.0 / (4.0 * 2.0);
        assert!((rt.price - expect).abs() < 1e-12, "{} vs {expect}", rt.price);
        assert!(rt.is_balanced());
    }

    #[test]
    fn search_is_never_negative() {
        let f = |x: f64| Ok(Some(-(x - 0.3) * (x - 0.3)));
        let best = maximize(f, 0.0, -0.09, 1.0, None, &SearchParams::default()).unwrap();
        assert!((best - 0.0).abs() < 1e-12);
        let best = maximize(|_| Ok(Some(-1.0)), 0.0, 0.0, 1.0, None, &SearchParams::default()).unwrap();
        assert_eq!(best, 0.0);
    }
}
