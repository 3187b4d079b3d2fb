//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Run with `cargo test -p marketlab-cli --test acceptance -- --nocapture`.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use marketlab::clearing::social_planner;
use marketlab::equilibria::{da_dominance_threshold, nash_da_mpm, nash_rt_mpm, nash_standard, solve};
use marketlab::settlement::{heterogeneity_delta, normalized_metrics, settle};
use marketlab::sweeps::{sweep_participants, sweep_slopes, Metric};
use marketlab::verifier::{result_from_bids, verify_equilibrium};
use marketlab::{Behavior, Market, MarketConfig, Regime, Stage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn random_market(rng: &mut ChaCha8Rng, homogeneous: bool, min_gen: usize) -> Market<f64> {
    let g = rng.gen_range(min_gen..9);
    let l = rng.gen_range(1..7);
    let c0 = rng.gen_range(0.05..2.0);
    let costs: Vec<f64> = (0..g)
        .map(|_| if homogeneous { c0 } else { rng.gen_range(0.05..2.0) })
        .collect();
    let demands: Vec<f64> = (0..l).map(|_| rng.gen_range(0.5..80.0)).collect();
    MarketConfig::from_parts(&costs, &demands, rng.gen_range(0.2..20.0), rng.gen_range(0.2..20.0))
        .validate()
        .unwrap()
}

fn reference() -> Market<f64> {
    MarketConfig::homogeneous(4, 0.1, &[0.2, 25.6, 106.6, 199.6], 10.0, 10.0)
        .validate()
        .unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<Duration, String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:?}, limit {limit:?}"))?;
    Ok(t)
}

fn competitive_planner_alignment() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..200 {
        let m = random_market(&mut rng, false, 2);
        let (g, _) = social_planner(&m);
        let p = m.total_demand() / m.inv_cost_sum();
        for regime in Regime::ALL {
            let o = solve(&m, regime, Behavior::Competitive).map_err(|e| e.to_string())?.outcome;
            for (j, gj) in g.iter().enumerate() {
                ensure(rel(o.gen_total(j), *gj) <= 1e-9, || format!("config {i} {regime}: dispatch of G{}", j + 1))?;
            }
            ensure(o.day_ahead.price == p && o.real_time.price == p, || {
                format!("config {i} {regime}: prices {} {} vs {p}", o.day_ahead.price, o.real_time.price)
            })?;
        }
    }
    let t = within(start, Duration::from_secs(1))?;
    Ok(format!("200 configs x 4 regimes in {t:?}"))
}

fn nash_configs(regime: Regime, rng: &mut ChaCha8Rng) -> Market<f64> {
    let homogeneous = matches!(regime, Regime::Standard | Regime::SlopeStandard);
    let min_gen = if regime == Regime::SlopeStandard { 3 } else { 2 };
    let g = rng.gen_range(min_gen..=6);
    let l = rng.gen_range(1..=6);
    let c0: f64 = rng.gen_range(0.05..2.0);
    let costs: Vec<f64> = (0..g)
        .map(|_| if homogeneous { c0 } else { rng.gen_range(0.05..2.0) })
        .collect();
    let total = rng.gen_range(1.0..500.0);
    let weights: Vec<f64> = (0..l).map(|_| rng.gen_range(0.0..1.0)).collect();
    let wsum: f64 = weights.iter().sum();
    let demands: Vec<f64> = weights.iter().map(|w| total * w / wsum).collect();
    let bd = rng.gen_range(0.2..5.0) / c0;
    let br = rng.gen_range(0.2..5.0) / c0;
    MarketConfig::from_parts(&costs, &demands, bd, br).validate().unwrap()
}

fn nash_fixed_points() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut failures = Vec::new();
    for regime in Regime::ALL {
        let mut violated = 0;
        let mut first = None;
        for _ in 0..100 {
            let m = nash_configs(regime, &mut rng);
            let eq = solve(&m, regime, Behavior::Nash).map_err(|e| e.to_string())?;
            let rep = verify_equilibrium(&eq, &m, 1e-5).map_err(|e| e.to_string())?;
            if !rep.is_verified() {
                violated += 1;
                first.get_or_insert(format!("{:?}", rep.verdict));
            }
        }
        if violated > 0 {
            failures.push(format!("{regime}: {violated}/100 violated, e.g. {}", first.unwrap()));
        }
    }
    let mut missed = 0;
    for k in 0..20 {
        let regime = Regime::ALL[k % 4];
        let m = nash_configs(regime, &mut rng);
        let eq = solve(&m, regime, Behavior::Nash).map_err(|e| e.to_string())?;
        let mut bids = eq.outcome.bids.clone();
        let stage = match regime {
            Regime::RtMpm => Stage::DayAhead,
            Regime::DaMpm => Stage::RealTime,
            _ if k % 2 == 0 => Stage::DayAhead,
            _ => Stage::RealTime,
        };
        let j = k % m.n_generators();
        bids.generators.stage_mut(stage)[j] *= 1.01;
        let re = result_from_bids(&m, regime, Behavior::Nash, &bids).map_err(|e| e.to_string())?;
        if verify_equilibrium(&re, &m, 1e-5).map_err(|e| e.to_string())?.is_verified() {
            missed += 1;
        }
    }
    if missed > 0 {
        failures.push(format!("{missed}/20 perturbed outcomes verified"));
    }
    let t = within(start, Duration::from_secs(120))?;
    if failures.is_empty() {
        Ok(format!("400 verified, 20 perturbations rejected in {t:?}"))
    } else {
        Err(failures.join("; "))
    }
}

fn rt_mpm_structure() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..100 {
        let m = random_market(&mut rng, i % 2 == 0, 2);
        let o = nash_rt_mpm(&m).map_err(|e| e.to_string())?.outcome;
        let p = m.total_demand() / m.inv_cost_sum();
        ensure(o.bids.load_da.iter().all(|&d| d == 0.0), || format!("config {i}: day-ahead allocation"))?;
        ensure(o.day_ahead.price == p && o.real_time.price == p, || format!("config {i}: prices"))?;
    }
    Ok("100 configs".into())
}

fn da_mpm_structure() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..100 {
        let m = random_market(&mut rng, i % 2 == 0, 2);
        let d = m.total_demand();
        let eq = nash_da_mpm(&m).map_err(|e| e.to_string())?;
        let o = &eq.outcome;
        let gap = d / ((m.n_loads() as f64 + 1.0) * m.inv_cost_sum());
        ensure(rel(o.real_time.price - o.day_ahead.price, gap) <= 1e-9, || format!("config {i}: price gap"))?;
        let dr = o.bids.total_rt_demand();
        ensure(dr > 0.0 && dr < d / 2.0, || format!("config {i}: real-time demand {dr} of {d}"))?;
        let ce = solve(&m, Regime::DaMpm, Behavior::Competitive).map_err(|e| e.to_string())?;
        let (pn, pc) = (settle(o, &m).aggregate_profit, settle(&ce.outcome, &m).aggregate_profit);
        ensure(pn < pc, || format!("config {i}: profit {pn} >= {pc}"))?;
    }
    Ok("100 configs".into())
}

fn table_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..100 {
        let m = random_market(&mut rng, false, 2);
        let ne = settle(&nash_da_mpm(&m).map_err(|e| e.to_string())?.outcome, &m);
        let ce = settle(&solve(&m, Regime::DaMpm, Behavior::Competitive).unwrap().outcome, &m);
        let r = normalized_metrics(&ne, &ce).map_err(|e| e.to_string())?;
        let l = m.n_loads() as f64;
        let s = m.inv_cost_sum();
        let w = (l + 1.0) * (l + 1.0);
        let g1 = m.n_generators() as f64 - 1.0;
        let big_c: Vec<f64> = m.costs().map(|c| 1.0 / (m.slope_rt() * g1) + c).collect();
        let k: f64 = big_c.iter().map(|x| 1.0 / x).sum();
        let delta = m.costs().zip(&big_c).map(|(c, x)| c / (x * x)).sum::<f64>() - k * k / s;
        let checks = [
            (r.cost_ratio, 1.0 + delta / (s * w)),
            (r.profit_ratio, 1.0 - k / s * 2.0 * l / w - delta / (s * w)),
            (r.payment_ratio, 1.0 - k / s * l / w),
        ];
        for (got, want) in checks {
            ensure(rel(got, want) <= 1e-9, || format!("da-mpm config {i}: {got} vs {want}"))?;
        }

        let h = random_market(&mut rng, true, 2);
        let eq = nash_standard(&h).map_err(|e| e.to_string())?;
        let ne = settle(&eq.outcome, &h);
        let ce = settle(&solve(&h, Regime::Standard, Behavior::Competitive).unwrap().outcome, &h);
        let r = normalized_metrics(&ne, &ce).map_err(|e| e.to_string())?;
        let (c, g1) = (h.cost(0), h.n_generators() as f64 - 1.0);
        let d = h.total_demand();
        let (dd, dr) = (eq.outcome.bids.total_da_demand() / d, eq.outcome.bids.total_rt_demand() / d);
        let extra = dd * dr / (h.slope_rt() * c * g1 + 1.0)
            + dd * dd / (h.slope_da() * c * g1)
            + dr * dr / (h.slope_rt() * c * g1);
        let checks = [(r.cost_ratio, 1.0), (r.profit_ratio, 1.0 + 2.0 * extra), (r.payment_ratio, 1.0 + extra)];
        for (got, want) in checks {
            ensure(rel(got, want) <= 1e-9, || format!("standard config {i}: {got} vs {want}"))?;
        }
        let dh = heterogeneity_delta(&h).map_err(|e| e.to_string())?;
        ensure(dh.abs() <= 1e-12, || format!("homogeneous config {i}: delta {dh}"))?;
    }
    Ok("100 heterogeneous + 100 homogeneous configs".into())
}

fn dominance_threshold() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..50 {
        let m = random_market(&mut rng, true, 2);
        let thr = da_dominance_threshold(&m).map_err(|e| e.to_string())?;
        let at = nash_standard(&m.with_slopes(thr, m.slope_rt()).unwrap()).unwrap().outcome;
        let gap = at.bids.total_da_demand() - at.bids.total_rt_demand();
        ensure(gap.abs() <= 1e-9 * m.total_demand().max(1.0), || format!("config {i}: gap {gap} at threshold"))?;
        let above = nash_standard(&m.with_slopes(thr * 1.5, m.slope_rt()).unwrap()).unwrap().outcome;
        ensure(above.bids.total_da_demand() > above.bids.total_rt_demand(), || format!("config {i}: above threshold"))?;
    }
    Ok("50 configs".into())
}

fn sweep_signatures() -> Outcome {
    let start = Instant::now();
    let base = reference();
    let gs: Vec<usize> = (2..=25).collect();
    let ls: Vec<usize> = (1..=25).collect();
    let sweep = |regime| sweep_participants(&base, &gs, &ls, regime, Metric::ProfitRatio, None).map_err(|e| e.to_string());

    let da = sweep(Regime::DaMpm)?;
    for iy in 0..ls.len() {
        for ix in 0..gs.len() {
            let v = da.get(ix, iy).ok_or(format!("da-mpm cell ({ix},{iy}) absent"))?;
            ensure(v < 1.0, || format!("da-mpm ratio {v} at G={} L={}", gs[ix], ls[iy]))?;
            if ix > 0 {
                ensure(v < da.get(ix - 1, iy).unwrap(), || format!("da-mpm not decreasing in G at G={}", gs[ix]))?;
            }
            if iy > 0 {
                ensure(v > da.get(ix, iy - 1).unwrap(), || format!("da-mpm not increasing in L at L={}", ls[iy]))?;
            }
        }
    }
    let st = sweep(Regime::Standard)?;
    ensure(st.present().count() == gs.len() * ls.len(), || "standard grid has absent cells".into())?;
    ensure(st.present().all(|v| v > 1.0), || "standard ratio <= 1 somewhere".into())?;

    let sl = sweep(Regime::SlopeStandard)?;
    ensure(sl.present().any(|v| v > 1.0) && sl.present().any(|v| v < 1.0), || "slope grid one-sided".into())?;
    let corner = sl.get(gs.len() - 1, 0).ok_or("slope corner absent")?;
    ensure(corner < 1.0, || format!("slope ratio {corner} at G=25 L=1"))?;
    let t = within(start, Duration::from_secs(30))?;
    Ok(format!("three 24x25 grids in {t:?}"))
}

fn reference_spot_values() -> Outcome {
    let m = reference();
    let ce = solve(&m, Regime::Standard, Behavior::Competitive).map_err(|e| e.to_string())?;
    ensure(rel(ce.outcome.day_ahead.price, 8.3) <= 1e-9, || format!("price {}", ce.outcome.day_ahead.price))?;

    let bd: Vec<f64> = (1..=40).map(|k| k as f64 * 0.5).collect();
    let br: Vec<f64> = (1..=20).map(|k| k as f64).collect();
    let grid = sweep_slopes(&m, &bd, &br).map_err(|e| e.to_string())?;
    for iy in 0..br.len() {
        for ix in 1..bd.len() {
            let (a, b) = (grid.get(ix - 1, iy).ok_or("absent")?, grid.get(ix, iy).ok_or("absent")?);
            ensure(b > a, || format!("not increasing in slope_da at b^r={}", br[iy]))?;
        }
        let row = m.with_slopes(1.0, br[iy]).unwrap();
        let thr = da_dominance_threshold(&row).map_err(|e| e.to_string())?;
        let half = sweep_slopes(&m, &[thr], &[br[iy]]).unwrap().get(0, 0).ok_or("absent")?;
        ensure((half - 0.5).abs() <= 1e-9, || format!("share {half} at threshold, b^r={}", br[iy]))?;
    }
    Ok("price 8.3; slope grid monotone with 0.5 at threshold".into())
}

fn run_cli(args: &[&str]) -> Result<(Option<i32>, Vec<u8>), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_marketlab"))
        .args(args)
        .env_remove("MARKETLAB_CONFIG")
        .env_remove("MARKETLAB_FORMAT")
        .output()
        .map_err(|e| e.to_string())?;
    let mut bytes = out.stdout;
    bytes.extend(out.stderr);
    Ok((out.status.code(), bytes))
}

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("market.json");
    std::fs::write(&cfg, reference().config().to_json_string().unwrap()).map_err(|e| e.to_string())?;
    let c = cfg.to_str().unwrap();
    let eq_path = dir.path().join("eq.json");
    let (code, _) = run_cli(&["equilibrium", "--config", c, "--regime", "standard", "--output", eq_path.to_str().unwrap()])?;
    ensure(code == Some(0), || "equilibrium failed".into())?;
    let bids = eq_path.to_str().unwrap();

    let mut cmds: Vec<Vec<&str>> = Vec::new();
    for regime in ["standard", "rt-mpm", "da-mpm", "slope"] {
        for behavior in ["competitive", "nash"] {
            cmds.push(vec!["equilibrium", "--config", c, "--regime", regime, "--behavior", behavior]);
            cmds.push(vec!["verify", "--config", c, "--regime", regime, "--behavior", behavior]);
        }
    }
    cmds.push(vec!["verify", "--config", c, "--bids", bids, "--format", "json"]);
    for fmt in ["csv", "json"] {
        cmds.push(vec!["sweep", "participants", "--config", c, "--regime", "da-mpm", "--format", fmt]);
        cmds.push(vec!["sweep", "slopes", "--config", c, "--format", fmt]);
        cmds.push(vec!["sweep", "mechanisms", "--config", c, "--generators", "2..10", "--format", fmt]);
    }
    for args in &cmds {
        let a = run_cli(args)?;
        let b = run_cli(args)?;
        ensure(a == b, || format!("outputs differ for {}", args.join(" ")))?;
    }
    let stem = dir.path().join("mech.csv");
    let out = stem.to_str().unwrap();
    let mut files = Vec::new();
    for _ in 0..2 {
        run_cli(&["sweep", "mechanisms", "--config", c, "--generators", "2..6", "--output", out])?;
        let read: Vec<Vec<u8>> = ["intercept-1", "intercept-2", "intercept-3", "slope"]
            .iter()
            .map(|l| std::fs::read(Path::new(&dir.path().join(format!("mech-{l}.csv")))).unwrap_or_default())
            .collect();
        files.push(read);
    }
    ensure(files[0] == files[1] && files[0].iter().all(|f| !f.is_empty()), || "mechanism files differ".into())?;
    Ok(format!("{} commands run twice", cmds.len() + 1))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("competitive solvers align with the planner", competitive_planner_alignment),
        ("Nash outputs verify and perturbations are rejected", nash_fixed_points),
        ("RT-MPM Nash structure", rt_mpm_structure),
        ("DA-MPM Nash structure", da_mpm_structure),
        ("normalized-metric closed forms", table_oracles),
        ("day-ahead dominance threshold", dominance_threshold),
        ("participant sweep signatures", sweep_signatures),
        ("reference-market spot values", reference_spot_values),
        ("CLI determinism", cli_determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {}: PASS  {name} ({detail})", i + 1),
            Err(why) => {
                println!("criterion {}: FAIL  {name} ({why})", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
