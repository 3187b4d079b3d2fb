//! `marketlab` command-line front end.
//!
//! Exit status: 0 on success, 2 on any input or solver error, 3 when
//! `verify` finds a profitable deviation.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use marketlab::equilibria::solve;
use marketlab::io::{
    bids_from_json, equilibrium_json, grid_csv_string, grid_json, report_json, to_pretty, write_report_text,
};
use marketlab::market::load_demand_bids;
use marketlab::sweeps::{
    compare_mechanisms, mechanism_slopes, sweep_participants, sweep_slopes, Metric, SweepGrid, MECHANISM_EPSILON,
};
use marketlab::verifier::{result_from_bids, verify_equilibrium};
use marketlab::{Behavior, MarketConfig, MarketError, MarketF64, Regime};
use serde_json::Value;

const FORMAT_ENV: &str = "MARKETLAB_FORMAT";

#[derive(Parser)]
#[command(name = "marketlab", version, about = "Two-stage electricity market equilibria")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one equilibrium and write it with its settlement.
    Equilibrium(EquilibriumArgs),
    /// Check that an outcome admits no profitable unilateral deviation.
    Verify(VerifyArgs),
    /// Evaluate a metric over a parameter grid.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct MarketArgs {
    /// Market configuration JSON.
    #[arg(long, env = "MARKETLAB_CONFIG")]
    config: PathBuf,
    /// Replaces the configured loads with `load_id,demand_mw` rows.
    #[arg(long)]
    demand_csv: Option<PathBuf>,
}

impl MarketArgs {
    fn load(&self) -> anyhow::Result<MarketF64> {
        let mut cfg = MarketConfig::<f64>::from_json_file(&self.config)
            .with_context(|| format!("reading config {}", self.config.display()))?;
        if let Some(path) = &self.demand_csv {
            cfg.loads = load_demand_bids(path).with_context(|| format!("reading demand bids {}", path.display()))?;
        }
        Ok(cfg.validate()?)
    }
}

#[derive(Args)]
struct EquilibriumArgs {
    #[command(flatten)]
    market: MarketArgs,
    #[arg(long)]
    regime: Regime,
    #[arg(long, default_value_t = Behavior::Nash)]
    behavior: Behavior,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Only `json`.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    market: MarketArgs,
    /// Defaults to the regime recorded in `--bids`.
    #[arg(long)]
    regime: Option<Regime>,
    #[arg(long, default_value_t = Behavior::Nash)]
    behavior: Behavior,
    /// Equilibrium report whose bids are re-cleared and checked. Without it
    /// the solver's own output is checked.
    #[arg(long)]
    bids: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
    #[arg(long)]
    output: Option<PathBuf>,
    /// `text` or `json`.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(subcommand)]
    mode: SweepMode,
}

#[derive(Args)]
struct GridOut {
    /// Multi-grid sweeps write `<stem>-<label>.<ext>` beside this path.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// `csv` or `json`.
    #[arg(long, global = true)]
    format: Option<String>,
}

#[derive(Subcommand)]
enum SweepMode {
    /// Metric over generator and load counts, cost and demand from the config.
    Participants {
        #[command(flatten)]
        market: MarketArgs,
        #[arg(long)]
        regime: Regime,
        #[arg(long, default_value_t = Metric::ProfitRatio)]
        metric: Metric,
        /// `a..b` (inclusive) or a comma list.
        #[arg(long, default_value = "2..25")]
        generators: String,
        #[arg(long, default_value = "1..25")]
        loads: String,
        #[command(flatten)]
        out: GridOut,
    },
    /// Normalized day-ahead allocation over the two intercept slopes.
    Slopes {
        #[command(flatten)]
        market: MarketArgs,
        /// `start:stop:step` (inclusive) or a comma list.
        #[arg(long, default_value = "1:20:1")]
        slope_da: String,
        #[arg(long, default_value = "1:20:1")]
        slope_rt: String,
        #[command(flatten)]
        out: GridOut,
    },
    /// Standard-market profit ratio for three intercept slopes and for
    /// slope bidding.
    Mechanisms {
        #[command(flatten)]
        market: MarketArgs,
        #[arg(long, default_value_t = MECHANISM_EPSILON)]
        epsilon: f64,
        #[arg(long, default_value = "2..25")]
        generators: String,
        #[arg(long, default_value = "1..25")]
        loads: String,
        #[command(flatten)]
        out: GridOut,
    },
}

/// Flag, then environment, then `default`. An environment value the
/// command does not support is ignored; a bad flag is an error.
fn pick_format(flag: Option<&str>, allowed: &[&str], default: &str) -> anyhow::Result<String> {
    if let Some(f) = flag {
        if allowed.contains(&f) {
            return Ok(f.to_string());
        }
        bail!("unsupported format `{f}`, expected one of {}", allowed.join(", "));
    }
    match std::env::var(FORMAT_ENV) {
        Ok(f) if allowed.contains(&f.as_str()) => Ok(f),
        _ => Ok(default.to_string()),
    }
}

fn emit(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().lock().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn parse_counts(s: &str) -> anyhow::Result<Vec<usize>> {
    let s = s.trim();
    let values: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().with_context(|| format!("bad range start in `{s}`"))?;
        let b: usize = b.trim().parse().with_context(|| format!("bad range end in `{s}`"))?;
        if a > b {
            bail!("empty range `{s}`");
        }
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|t| t.trim().parse().with_context(|| format!("bad count `{t}`")))
            .collect::<anyhow::Result<_>>()?
    };
    if values.is_empty() || values.contains(&0) {
        bail!("counts must be positive in `{s}`");
    }
    Ok(values)
}

fn parse_values(s: &str) -> anyhow::Result<Vec<f64>> {
    let s = s.trim();
    let parts: Vec<&str> = s.split(':').collect();
    let values: Vec<f64> = match parts.as_slice() {
        [a, b, step] => {
            let (a, b, step): (f64, f64, f64) = (
                a.trim().parse().with_context(|| format!("bad start in `{s}`"))?,
                b.trim().parse().with_context(|| format!("bad stop in `{s}`"))?,
                step.trim().parse().with_context(|| format!("bad step in `{s}`"))?,
            );
            if !(step > 0.0 && step.is_finite() && a.is_finite() && b.is_finite()) || a > b {
                bail!("invalid range `{s}`");
            }
            let n = ((b - a) / step + 1e-9).floor() as usize;
            if n > 100_000 {
                bail!("range `{s}` has too many points");
            }
            (0..=n).map(|i| a + step * i as f64).collect()
        }
        [_] => s
            .split(',')
            .map(|t| t.trim().parse::<f64>().with_context(|| format!("bad value `{t}`")))
            .collect::<anyhow::Result<_>>()?,
        _ => bail!("expected `start:stop:step` or a comma list, got `{s}`"),
    };
    if values.is_empty() {
        bail!("empty range `{s}`");
    }
    Ok(values)
}

fn run_equilibrium(args: &EquilibriumArgs) -> anyhow::Result<ExitCode> {
    let _ = pick_format(args.format.as_deref(), &["json"], "json")?;
    let market = args.market.load()?;
    let eq = solve(&market, args.regime, args.behavior)?;
    emit(args.output.as_deref(), &to_pretty(&equilibrium_json(&market, &eq)))?;
    Ok(ExitCode::SUCCESS)
}

fn run_verify(args: &VerifyArgs) -> anyhow::Result<ExitCode> {
    let format = pick_format(args.format.as_deref(), &["text", "json"], "text")?;
    if !(args.tolerance > 0.0 && args.tolerance.is_finite()) {
        bail!("tolerance must be positive, got {}", args.tolerance);
    }
    let market = args.market.load()?;
    let eq = match &args.bids {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading bids {}", path.display()))?;
            let (recorded, bids) = bids_from_json(&text, &market)?;
            let regime = args.regime.unwrap_or(recorded);
            if regime != recorded {
                bail!("bids file records the {recorded} regime, --regime asks for {regime}");
            }
            result_from_bids(&market, regime, args.behavior, &bids)?
        }
        None => {
            let regime = args.regime.ok_or_else(|| anyhow!("--regime is required without --bids"))?;
            solve(&market, regime, args.behavior)?
        }
    };
    let report = verify_equilibrium(&eq, &market, args.tolerance)?;
    let text = if format == "json" {
        to_pretty(&report_json(&report))
    } else {
        let mut buf = Vec::new();
        write_report_text(&report, &mut buf)?;
        String::from_utf8(buf)?
    };
    emit(args.output.as_deref(), &text)?;
    Ok(if report.is_verified() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}

fn write_grids(grids: &[SweepGrid<f64>], out: &GridOut) -> anyhow::Result<()> {
    let format = pick_format(out.format.as_deref(), &["csv", "json"], "csv")?;
    let render = |g: &SweepGrid<f64>| -> anyhow::Result<String> {
        Ok(if format == "json" {
            to_pretty(&grid_json(g))
        } else {
            grid_csv_string(g)?
        })
    };
    match (&out.output, grids) {
        (_, [single]) => emit(out.output.as_deref(), &render(single)?),
        (Some(path), many) => {
            let stem = path
                .file_stem()
                .ok_or_else(|| anyhow!("output path {} has no file name", path.display()))?
                .to_string_lossy();
            let ext = path.extension().map_or(format.clone(), |e| e.to_string_lossy().into_owned());
            for g in many {
                let p = path.with_file_name(format!("{stem}-{}.{ext}", g.label));
                emit(Some(&p), &render(g)?)?;
            }
            Ok(())
        }
        (None, many) => {
            let text = if format == "json" {
                to_pretty(&Value::Array(many.iter().map(grid_json).collect()))
            } else {
                let mut s = String::new();
                for g in many {
                    s.push_str(&format!("# {}\n", g.label));
                    s.push_str(&grid_csv_string(g)?);
                }
                s
            };
            emit(None, &text)
        }
    }
}

fn run_sweep(args: &SweepArgs) -> anyhow::Result<ExitCode> {
    match &args.mode {
        SweepMode::Participants {
            market,
            regime,
            metric,
            generators,
            loads,
            out,
        } => {
            let (gs, ls) = (parse_counts(generators)?, parse_counts(loads)?);
            let grid = sweep_participants(&market.load()?, &gs, &ls, *regime, *metric, None)?;
            write_grids(&[grid], out)?;
        }
        SweepMode::Slopes {
            market,
            slope_da,
            slope_rt,
            out,
        } => {
            let (bd, br) = (parse_values(slope_da)?, parse_values(slope_rt)?);
            let grid = sweep_slopes(&market.load()?, &bd, &br)?;
            write_grids(&[grid], out)?;
        }
        SweepMode::Mechanisms {
            market,
            epsilon,
            generators,
            loads,
            out,
        } => {
            let (gs, ls) = (parse_counts(generators)?, parse_counts(loads)?);
            let m = market.load()?;
            let c = m
                .homogeneous_cost()
                .ok_or(MarketError::HeterogeneousUnsupported { what: "mechanism sweeps" })?;
            let grids = compare_mechanisms(&m, &mechanism_slopes(c, *epsilon)?, &gs, &ls)?;
            write_grids(&grids, out)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Equilibrium(a) => run_equilibrium(a),
        Command::Verify(a) => run_verify(a),
        Command::Sweep(a) => run_sweep(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            match e.downcast_ref::<MarketError>() {
                Some(me) => eprintln!("error: {}: {e:#}", me.kind()),
                None => eprintln!("error: {e:#}"),
            }
            ExitCode::from(2)
        }
    }
}
