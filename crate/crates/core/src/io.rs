//! Report and grid serialization.
//!
//! Every number leaves the crate as a decimal string with 12 significant
//! digits, so output is byte-identical across platforms.

use std::io::Write;

use serde_json::{json, Map, Value};

use crate::error::{MarketError, Result};
use crate::market::{BidProfile, EquilibriumResult, GeneratorBids, Market, Regime, Stage, StageOutcome};
use crate::scalar::Scalar;
use crate::settlement::{settle, SettlementReport};
use crate::sweeps::SweepGrid;
use crate::verifier::{Role, Verdict, VerificationReport};

/// Formats with 12 significant digits, trailing zeros trimmed. Plain
/// notation for decimal exponents in `-5..=11`, scientific otherwise.
pub fn fmt_num<T: Scalar>(x: T) -> String {
    let v = x.as_f64();
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..=11).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    if t == "-0" {
        "0".into()
    } else {
        t.to_string()
    }
}

fn num<T: Scalar>(x: T) -> Value {
    Value::String(fmt_num(x))
}

fn stage_json<T: Scalar>(market: &Market<T>, stage: &StageOutcome<T>, bids: &[T]) -> Value {
    let generators: Vec<Value> = market
        .generators()
        .iter()
        .enumerate()
        .map(|(j, g)| json!({"id": g.id, "bid": num(bids[j]), "dispatch": num(stage.gen_dispatch[j])}))
        .collect();
    let loads: Vec<Value> = market
        .loads()
        .iter()
        .enumerate()
        .map(|(l, d)| json!({"id": d.id, "allocation": num(stage.load_alloc[l])}))
        .collect();
    json!({
        "price": num(stage.price),
        "degenerate": stage.degenerate,
        "generators": generators,
        "loads": loads,
    })
}

fn settlement_json<T: Scalar>(market: &Market<T>, s: &SettlementReport<T>) -> Value {
    let profits: Vec<Value> = market
        .generators()
        .iter()
        .zip(&s.profits)
        .map(|(g, &p)| json!({"id": g.id, "profit": num(p)}))
        .collect();
    let payments: Vec<Value> = market
        .loads()
        .iter()
        .zip(&s.payments)
        .map(|(l, &p)| json!({"id": l.id, "payment": num(p)}))
        .collect();
    json!({
        "profits": profits,
        "payments": payments,
        "social_cost": num(s.social_cost),
        "aggregate_profit": num(s.aggregate_profit),
        "aggregate_payment": num(s.aggregate_payment),
    })
}

/// Equilibrium outcome plus its settlement.
pub fn equilibrium_json<T: Scalar>(market: &Market<T>, eq: &EquilibriumResult<T>) -> Value {
    let o = &eq.outcome;
    let bid_kind = match o.bids.generators {
        GeneratorBids::Intercept { .. } => "intercept",
        GeneratorBids::Slope { .. } => "slope",
    };
    json!({
        "regime": eq.regime.to_string(),
        "behavior": eq.behavior.to_string(),
        "bid_kind": bid_kind,
        "symmetric": eq.symmetric,
        "degrees_of_freedom": eq.degrees_of_freedom,
        "price_gap": num(o.real_time.price - o.day_ahead.price),
        "day_ahead": stage_json(market, &o.day_ahead, o.bids.generators.stage(Stage::DayAhead)),
        "real_time": stage_json(market, &o.real_time, o.bids.generators.stage(Stage::RealTime)),
        "settlement": settlement_json(market, &settle(o, market)),
        "warnings": eq.warnings,
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json values always serialize");
    s.push('\n');
    s
}

fn parse_num<T: Scalar>(v: &Value, what: &str) -> Result<T> {
    let x = match v {
        Value::String(s) => s.trim().parse::<f64>().ok(),
        Value::Number(n) => n.as_f64(),
        _ => None,
    };
    x.map(T::lit).ok_or_else(|| MarketError::Parse {
        line: 0,
        message: format!("{what}: expected a number, found {v}"),
    })
}

fn field<'a>(v: &'a Value, key: &str) -> Result<&'a Value> {
    v.get(key).ok_or_else(|| MarketError::Parse {
        line: 0,
        message: format!("missing field `{key}`"),
    })
}

fn by_id<'a>(entries: &'a Value, what: &str) -> Result<Map<String, Value>> {
    let arr = entries.as_array().ok_or_else(|| MarketError::Parse {
        line: 0,
        message: format!("`{what}` must be an array"),
    })?;
    let mut out = Map::new();
    for e in arr {
        let id = field(e, "id")?.as_str().ok_or_else(|| MarketError::Parse {
            line: 0,
            message: format!("{what} id must be a string"),
        })?;
        out.insert(id.to_string(), e.clone());
    }
    Ok(out)
}

/// Reads the bids back out of an equilibrium report, matching participants
/// to `market` by id. Returns the regime named in the report.
pub fn bids_from_json<T: Scalar>(text: &str, market: &Market<T>) -> Result<(Regime, BidProfile<T>)> {
    let root: Value = serde_json::from_str(text)?;
    let regime: Regime = field(&root, "regime")?
        .as_str()
        .unwrap_or_default()
        .parse()
        .map_err(|message| MarketError::Parse { line: 0, message })?;
    let mut gen = [Vec::new(), Vec::new()];
    let mut loads = [Vec::new(), Vec::new()];
    for (k, key) in ["day_ahead", "real_time"].into_iter().enumerate() {
        let stage = field(&root, key)?;
        let gmap = by_id(field(stage, "generators")?, "generators")?;
        for g in market.generators() {
            let e = gmap
                .get(&g.id)
                .ok_or_else(|| MarketError::ProfileMismatch(format!("no {key} bid for `{}`", g.id)))?;
            gen[k].push(parse_num(field(e, "bid")?, &g.id)?);
        }
        let lmap = by_id(field(stage, "loads")?, "loads")?;
        for l in market.loads() {
            let e = lmap
                .get(&l.id)
                .ok_or_else(|| MarketError::ProfileMismatch(format!("no {key} allocation for `{}`", l.id)))?;
            loads[k].push(parse_num(field(e, "allocation")?, &l.id)?);
        }
    }
    let [da, rt] = gen;
    let [load_da, load_rt] = loads;
    let generators = match field(&root, "bid_kind")?.as_str() {
        Some("slope") => GeneratorBids::Slope {
            day_ahead: da,
            real_time: rt,
        },
        Some("intercept") => GeneratorBids::Intercept {
            day_ahead: da,
            real_time: rt,
        },
        other => {
            return Err(MarketError::Parse {
                line: 0,
                message: format!("unknown bid_kind {other:?}"),
            })
        }
    };
    let profile = BidProfile {
        generators,
        load_da,
        load_rt,
    };
    profile.check(market)?;
    Ok((regime, profile))
}

pub fn report_json<T: Scalar>(report: &VerificationReport<T>) -> Value {
    let participants: Vec<Value> = report
        .participants
        .iter()
        .map(|p| {
            json!({
                "id": p.id,
                "role": match p.role { Role::Generator => "generator", Role::Load => "load" },
                "baseline": num(p.baseline),
                "best_deviation_gain": num(p.best_deviation_gain),
                "foc_residual": num(p.foc_residual),
            })
        })
        .collect();
    let verdict = match &report.verdict {
        Verdict::Verified => json!({"status": "verified"}),
        Verdict::Violated {
            participant,
            gain,
            foc_residual,
        } => json!({
            "status": "violated",
            "participant": participant,
            "gain": num(*gain),
            "foc_residual": num(*foc_residual),
        }),
    };
    json!({
        "regime": report.regime.to_string(),
        "behavior": report.behavior.to_string(),
        "tolerance": num(report.tolerance),
        "price_scale": num(report.price_scale),
        "balance_residuals": {
            "day_ahead": num(report.balance_residuals[0]),
            "real_time": num(report.balance_residuals[1]),
        },
        "participants": participants,
        "verdict": verdict,
    })
}

pub fn write_report_text<T: Scalar, W: Write>(report: &VerificationReport<T>, mut out: W) -> std::io::Result<()> {
    writeln!(out, "regime: {}", report.regime)?;
    writeln!(out, "behavior: {}", report.behavior)?;
    writeln!(out, "tolerance: {}", fmt_num(report.tolerance))?;
    writeln!(
        out,
        "balance residuals: day-ahead {} real-time {}",
        fmt_num(report.balance_residuals[0]),
        fmt_num(report.balance_residuals[1])
    )?;
    writeln!(out, "participant,role,baseline,best_deviation_gain,foc_residual")?;
    for p in &report.participants {
        let role = match p.role {
            Role::Generator => "generator",
            Role::Load => "load",
        };
        writeln!(
            out,
            "{},{role},{},{},{}",
            p.id,
            fmt_num(p.baseline),
            fmt_num(p.best_deviation_gain),
            fmt_num(p.foc_residual)
        )?;
    }
    match &report.verdict {
        Verdict::Verified => writeln!(out, "verdict: verified"),
        Verdict::Violated {
            participant,
            gain,
            foc_residual,
        } => writeln!(
            out,
            "verdict: violated by {participant} (gain {}, foc residual {})",
            fmt_num(*gain),
            fmt_num(*foc_residual)
        ),
    }
}

pub fn grid_json<T: Scalar>(grid: &SweepGrid<T>) -> Value {
    let axis = |a: &crate::sweeps::Axis<T>| {
        json!({"label": a.label, "values": a.values.iter().map(|&v| num(v)).collect::<Vec<_>>()})
    };
    let cells: Vec<Value> = grid
        .cells
        .iter()
        .map(|row| Value::Array(row.iter().map(|c| c.map_or(Value::Null, num)).collect()))
        .collect();
    json!({
        "label": grid.label,
        "metric": grid.metric.to_string(),
        "x_axis": axis(&grid.x_axis),
        "y_axis": axis(&grid.y_axis),
        "cells": cells,
    })
}

/// `x,y,value` rows, x-major; absent cells are written as `null`.
pub fn write_grid_csv<T: Scalar, W: Write>(grid: &SweepGrid<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y", "value"])?;
    for (ix, &x) in grid.x_axis.values.iter().enumerate() {
        for (iy, &y) in grid.y_axis.values.iter().enumerate() {
            let v = grid.get(ix, iy).map_or_else(|| "null".to_string(), fmt_num);
            w.write_record([fmt_num(x), fmt_num(y), v])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn grid_csv_string<T: Scalar>(grid: &SweepGrid<T>) -> Result<String> {
    let mut buf = Vec::new();
    write_grid_csv(grid, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}
