//! Closed-form and brute-force oracles checked against the production path.

use marketlab::clearing::{augmented_planner, social_planner};
use marketlab::equilibria::{nash_da_mpm, nash_standard, solve};
use marketlab::settlement::{heterogeneity_delta, normalized_metrics, settle};
use marketlab::{Behavior, Market, MarketConfig, Regime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_market(rng: &mut ChaCha8Rng, homogeneous: bool) -> Market<f64> {
    let g = rng.gen_range(2..8);
    let l = rng.gen_range(1..6);
    let c0 = rng.gen_range(0.05..2.0);
    let costs: Vec<f64> = (0..g)
        .map(|_| if homogeneous { c0 } else { rng.gen_range(0.05..2.0) })
        .collect();
    let demands: Vec<f64> = (0..l).map(|_| rng.gen_range(0.5..50.0)).collect();
    MarketConfig::from_parts(&costs, &demands, rng.gen_range(0.2..20.0), rng.gen_range(0.2..20.0))
        .validate()
        .unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Textbook form of the heterogeneity term, written out independently.
fn delta_by_hand(m: &Market<f64>) -> f64 {
    let g = m.n_generators() as f64;
    let big_c: Vec<f64> = m.costs().map(|c| 1.0 / (m.slope_rt() * (g - 1.0)) + c).collect();
    let s: f64 = m.costs().map(|c| 1.0 / c).sum();
    let k: f64 = big_c.iter().map(|x| 1.0 / x).sum();
    m.costs().zip(&big_c).map(|(c, x)| c / (x * x)).sum::<f64>() - k * k / s
}

#[test]
fn da_mpm_ratios_match_closed_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..100 {
        let m = random_market(&mut rng, i % 3 == 0);
        let ne = settle(&solve(&m, Regime::DaMpm, Behavior::Nash).unwrap().outcome, &m);
        let ce = settle(&solve(&m, Regime::DaMpm, Behavior::Competitive).unwrap().outcome, &m);
        let r = normalized_metrics(&ne, &ce).unwrap();

        let l = m.n_loads() as f64;
        let s = m.inv_cost_sum();
        let ratio = m.augmented_inv_sum() / s;
        let delta = delta_by_hand(&m);
        let w = (l + 1.0) * (l + 1.0);
        assert!(close(r.cost_ratio, 1.0 + delta / (s * w), 1e-9), "cost {i}");
        assert!(
            close(r.profit_ratio, 1.0 - ratio * 2.0 * l / w - delta / (s * w), 1e-9),
            "profit {i}"
        );
        assert!(close(r.payment_ratio, 1.0 - ratio * l / w, 1e-9), "payment {i}");
        assert!(close(heterogeneity_delta(&m).unwrap(), delta, 1e-9));
    }
}

#[test]
fn standard_ratios_match_closed_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for i in 0..100 {
        let m = random_market(&mut rng, true);
        let eq = nash_standard(&m).unwrap();
        let ne = settle(&eq.outcome, &m);
        let ce = settle(&solve(&m, Regime::Standard, Behavior::Competitive).unwrap().outcome, &m);
        let r = normalized_metrics(&ne, &ce).unwrap();

        let c = m.cost(0);
        let g1 = m.n_generators() as f64 - 1.0;
        let (bd, br) = (m.slope_da(), m.slope_rt());
        let d = m.total_demand();
        let dd = eq.outcome.bids.total_da_demand() / d;
        let dr = eq.outcome.bids.total_rt_demand() / d;
        let extra = dd * dr / (br * c * g1 + 1.0) + dd * dd / (bd * c * g1) + dr * dr / (br * c * g1);
        assert!(close(r.cost_ratio, 1.0, 1e-9), "cost {i}");
        assert!(close(r.profit_ratio, 1.0 + 2.0 * extra, 1e-9), "profit {i}");
        assert!(close(r.payment_ratio, 1.0 + extra, 1e-9), "payment {i}");
        assert!(r.profit_ratio > 1.0);
    }
}

#[test]
fn standard_payment_hand_value() {
    let m = MarketConfig::<f64>::homogeneous(2, 0.5, &[7.0], 2.0, 2.0).validate().unwrap();
    let eq = nash_standard(&m).unwrap();
    assert!(close(eq.outcome.bids.total_da_demand(), 3.0, 1e-12));
    let ne = settle(&eq.outcome, &m);
    let ce = settle(&solve(&m, Regime::Standard, Behavior::Competitive).unwrap().outcome, &m);
    let r = normalized_metrics(&ne, &ce).unwrap();
    assert!(close(r.payment_ratio, 1.0 + 31.0 / 49.0, 1e-12));
}

#[test]
fn homogeneous_delta_vanishes() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..50 {
        let m = random_market(&mut rng, true);
        assert!(heterogeneity_delta(&m).unwrap().abs() < 1e-12);
    }
}

/// Finds the price with `Σ λ/c_j = d` by bisection.
fn planner_by_bisection(m: &Market<f64>) -> f64 {
    let d = m.total_demand();
    let (mut lo, mut hi) = (0.0, 1.0);
    while m.costs().map(|c| hi / c).sum::<f64>() < d {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if m.costs().map(|c| mid / c).sum::<f64>() < d {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn planner_matches_bisection() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..100 {
        let m = random_market(&mut rng, false);
        let (g, price) = social_planner(&m);
        let p = planner_by_bisection(&m);
        assert!(close(price, p, 1e-12));
        for (j, c) in m.costs().enumerate() {
            assert!(close(g[j], p / c, 1e-10));
        }
    }
}

/// Solves the augmented planner's KKT system by Gaussian elimination.
fn augmented_by_elimination(m: &Market<f64>, g_da: &[f64], demand: f64) -> Vec<f64> {
    let n = m.n_generators();
    let gm1 = n as f64 - 1.0;
    // unknowns: g_1..g_n, λ
    let mut a = vec![vec![0.0; n + 2]; n + 1];
    for j in 0..n {
        let c = m.cost(j);
        a[j][j] = 1.0 / (m.slope_rt() * gm1) + c;
        a[j][n] = -1.0;
        a[j][n + 1] = -c * g_da[j];
        a[n][j] = 1.0;
    }
    a[n][n + 1] = demand;
    for col in 0..=n {
        let piv = (col..=n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        a.swap(col, piv);
        for row in 0..=n {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..n + 2 {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    (0..=n).map(|i| a[i][n + 1] / a[i][i]).collect()
}

#[test]
fn augmented_planner_matches_elimination() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..100 {
        let m = random_market(&mut rng, false);
        let g_da: Vec<f64> = (0..m.n_generators()).map(|_| rng.gen_range(-5.0..20.0)).collect();
        let demand = rng.gen_range(0.0..40.0);
        let s = augmented_planner(&m, &g_da, &[demand]).unwrap();
        let x = augmented_by_elimination(&m, &g_da, demand);
        let n = m.n_generators();
        assert!(close(s.price, x[n], 1e-9));
        for j in 0..n {
            assert!(close(s.gen_dispatch[j], x[j], 1e-9));
        }
    }
}

#[test]
fn da_mpm_real_time_price_gap() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..100 {
        let m = random_market(&mut rng, false);
        let o = nash_da_mpm(&m).unwrap().outcome;
        let expect = m.total_demand() / ((m.n_loads() as f64 + 1.0) * m.inv_cost_sum());
        assert!(close(o.real_time.price - o.day_ahead.price, expect, 1e-9));
    }
}
