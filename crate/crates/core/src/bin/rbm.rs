//! Command-line front end: simulation, exact CDFs, limit CDFs and
//! comparison runs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde::Serialize;

use rbm_kpz::airylim::{cdf_limit, LimitOptions, LimitProcess, PointConfig};
use rbm_kpz::dynamics::{rescaled_samples, SampleOptions, SupRule};
use rbm_kpz::finitet::{finite_t_cdf, FiniteOptions};
use rbm_kpz::harness::{hash_json, run_experiment, write_samples_csv, CdfTable, ExperimentConfig, ExperimentKind};
use rbm_kpz::paths::Flavor;

#[derive(Parser)]
#[command(name = "rbm", version, about = "One-sided reflected Brownian motions and their KPZ fluctuation laws")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate rescaled positions and write them as CSV (replica, r, theta, value).
    Simulate {
        #[arg(long)]
        flavor: String,
        #[arg(long)]
        t: f64,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        r: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        theta: Vec<f64>,
        #[arg(long)]
        samples: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        rho: Option<f64>,
        /// Supremum rule on the time grid: grid, corrected or bridge.
        #[arg(long, default_value = "grid")]
        sup_rule: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate P(x_{n_k}(t) ≤ a_k for all k) and write it as CSV.
    FiniteCdf {
        #[arg(long)]
        flavor: String,
        #[arg(long)]
        t: f64,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        n: Vec<i64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        a: Vec<f64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        order: Option<usize>,
        #[arg(long)]
        lcut: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a limit-process CDF at the points (r_k, s_k) and write it as CSV.
    LimitCdf {
        #[arg(long)]
        process: String,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        r: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        s: Vec<f64>,
        #[arg(long)]
        order: Option<usize>,
        #[arg(long)]
        lcut: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a comparison described by a JSON configuration.
    Compare {
        #[arg(long)]
        kind: String,
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Serialize)]
struct Invocation<'a> {
    command: &'a str,
    args: serde_json::Value,
}

fn paired_columns(prefix: (&str, &str), len: usize) -> Vec<String> {
    (1..=len).flat_map(|k| [format!("{}_{k}", prefix.0), format!("{}_{k}", prefix.1)]).collect()
}

fn write_one(cols: Vec<String>, coords: Vec<f64>, value: f64, order: usize, hash: &str, out: &Path) -> anyhow::Result<()> {
    let refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut table = CdfTable::new(&refs, order, hash);
    table.push(coords, value);
    table.write_csv(out)?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Simulate { flavor, t, r, theta, samples, seed, dt, lambda, rho, sup_rule, out } => {
            let flavor = Flavor::parse(&flavor, lambda, rho)?;
            let theta = if theta.is_empty() { vec![0.0; r.len()] } else { theta };
            let opts = SampleOptions { dt, sup_rule: SupRule::parse(&sup_rule)?, ..SampleOptions::default() };
            let rows = rescaled_samples(flavor, t, &r, &theta, samples, seed, opts)?;
            let flat: Vec<_> = rows.into_iter().flatten().collect();
            write_samples_csv(&flat, &out)?;
            println!("wrote {} samples to {}", flat.len(), out.display());
            Ok(true)
        }
        Command::FiniteCdf { flavor, t, n, a, lambda, rho, order, lcut, out } => {
            let fl = Flavor::parse(&flavor, lambda, rho)?;
            let d = FiniteOptions::default();
            let opts = FiniteOptions { order: order.unwrap_or(d.order), lcut: lcut.unwrap_or(d.lcut) };
            let value = finite_t_cdf(fl, t, &n, &a, opts)?;
            let args = serde_json::json!({"flavor": fl, "t": t, "n": n, "a": a, "order": opts.order, "lcut": opts.lcut});
            let hash = hash_json(&Invocation { command: "finite-cdf", args });
            let coords = n.iter().zip(&a).flat_map(|(&k, &x)| [k as f64, x]).collect();
            write_one(paired_columns(("n", "a"), n.len()), coords, value, opts.order, &hash, &out)?;
            println!("{value}");
            Ok(true)
        }
        Command::LimitCdf { process, delta, r, s, order, lcut, out } => {
            let p = LimitProcess::parse(&process, delta)?;
            let d = LimitOptions::default();
            let opts = LimitOptions { order: order.unwrap_or(d.order), lcut: lcut.unwrap_or(d.lcut) };
            let cfg = PointConfig::new(r.clone(), s.clone())?;
            let value = cdf_limit(p, &cfg, opts)?;
            let args = serde_json::json!({"process": p.name(), "delta": delta, "r": r, "s": s, "order": opts.order, "lcut": opts.lcut});
            let hash = hash_json(&Invocation { command: "limit-cdf", args });
            let coords = r.iter().zip(&s).flat_map(|(&x, &y)| [x, y]).collect();
            write_one(paired_columns(("r", "s"), r.len()), coords, value, opts.order, &hash, &out)?;
            println!("{value}");
            Ok(true)
        }
        Command::Compare { kind, config } => {
            let kind = ExperimentKind::parse(&kind)?;
            let cfg = ExperimentConfig::from_path(&config).with_context(|| format!("reading {}", config.display()))?;
            if cfg.kind != kind {
                bail!("--kind {} does not match config kind {}", kind.name(), cfg.kind.name());
            }
            let report = run_experiment(&cfg)?;
            for row in &report.rows {
                println!("{} {}: {} (bound {})", if row.pass { "PASS" } else { "FAIL" }, row.label, row.statistic, row.bound);
            }
            println!("{}: {}", kind.name(), if report.pass { "PASS" } else { "FAIL" });
            if let Some(out) = &cfg.out {
                println!("report written to {}", out.display());
            }
            Ok(report.pass)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
