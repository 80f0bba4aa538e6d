use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use conformal_arbitrage::forecaster::NoisyOracleConfig;
use conformal_arbitrage::harness::{
    offline_oracle_prepared, oracle_records, prepare, run_prepared, run_sweep, synthesize_prices,
    write_ledger, write_prices, write_summary, write_sweep, write_trajectory, ForecasterKind,
    RunConfig, RunSummary, Strategy,
};
use conformal_arbitrage::valuefn::write_curves;
use conformal_arbitrage::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "cc-arb", version, about = "Risk-aware storage arbitrage backtests")]
struct Cli {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for synthetic prices, forecaster noise and scenarios.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Dispatch strategy (overrides `strategy`).
    #[arg(long, global = true)]
    strategy: Option<Strategy>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one backtest and write trajectory, ledger and summary.
    Simulate,
    /// Compute the perfect-foresight optimum for the configured prices.
    Oracle,
    /// Rerun the backtest once per value of a numeric config field.
    Sweep {
        /// Dotted config path, e.g. `controller.epsilon`.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Write a synthetic price series as CSV.
    GenPrices {
        /// Number of steps (overrides `prices.synthetic.steps`).
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Fit the noisy forecaster's noise scale to a target R².
    CalibrateForecaster {
        /// Target R² (overrides `forecaster.target_r2`).
        #[arg(long, allow_hyphen_values = true)]
        target_r2: Option<f64>,
    },
}

#[derive(Debug, Serialize)]
struct CalibrationReport {
    target_r2: f64,
    measured_r2: f64,
    noise: NoisyOracleConfig,
}

fn load_config(cli: &Cli) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(strategy) = cli.strategy {
        cfg.strategy = strategy;
    }
    cfg.validate()?;
    let out = cli.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    fs::create_dir_all(&out)?;
    Ok((cfg, out))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let prepared = prepare(cfg)?;
    let run = run_prepared(cfg, &prepared)?;
    let oracle = offline_oracle_prepared(&prepared)?;
    let r2 = match prepared.noise {
        Some(_) => Some(prepared.forecast_r2()?),
        None => None,
    };
    write_trajectory(create(out, "trajectory.csv")?, &run.records)?;
    if let Some(ledger) = &run.ledger {
        write_ledger(create(out, "ledger.csv")?, ledger)?;
    }
    if cfg.output.write_curves {
        write_curves(create(out, "curves.csv")?, &prepared.truth)?;
    }
    let summary = RunSummary::new(&run, Some(&oracle), r2);
    write_summary(create(out, "summary.json")?, &summary)?;
    log::info!(
        "{}: profit {:.2}, oracle {:.2}, regret {:.2}",
        summary.strategy,
        summary.profit,
        oracle.profit,
        oracle.profit - summary.profit
    );
    Ok(())
}

fn oracle(cfg: &RunConfig, out: &Path) -> Result<()> {
    let prepared = prepare(cfg)?;
    let oracle = offline_oracle_prepared(&prepared)?;
    let records = oracle_records(&oracle, &prepared.prices, &prepared.spec);
    write_trajectory(create(out, "oracle_trajectory.csv")?, &records)?;
    if cfg.output.write_curves {
        write_curves(create(out, "curves.csv")?, &prepared.truth)?;
    }
    let summary = RunSummary {
        strategy: "offline_oracle".into(),
        steps: records.len(),
        profit: oracle.profit,
        oracle_profit: Some(oracle.profit),
        regret: Some(0.0),
        cumulative_risk: None,
        final_gamma: None,
        terminal_soc: oracle.socs.last().copied(),
        forecast_r2: None,
    };
    write_summary(create(out, "oracle_summary.json")?, &summary)?;
    log::info!("offline optimum {:.2} over {} steps", oracle.profit, records.len());
    Ok(())
}

fn calibrate(cfg: &RunConfig, out: &Path, target: Option<f64>) -> Result<()> {
    let mut cfg = cfg.clone();
    cfg.forecaster.kind = ForecasterKind::Noisy;
    let target = target
        .or(cfg.forecaster.target_r2)
        .ok_or_else(|| Error::Config("no target R² given (use --target-r2 or forecaster.target_r2)".into()))?;
    cfg.forecaster.target_r2 = Some(target);
    cfg.validate()?;
    let prepared = prepare(&cfg)?;
    let report = CalibrationReport {
        target_r2: target,
        measured_r2: prepared.forecast_r2()?,
        noise: prepared.noise.expect("noisy forecaster is prepared with noise"),
    };
    let mut w = create(out, "calibration.json")?;
    serde_json::to_writer_pretty(&mut w, &report)?;
    writeln!(w)?;
    log::info!(
        "noise scale {:.4} gives R² {:.4} (target {target})",
        report.noise.noise_scale,
        report.measured_r2
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let (cfg, out) = load_config(cli)?;
    match &cli.command {
        Command::Simulate => simulate(&cfg, &out),
        Command::Oracle => oracle(&cfg, &out),
        Command::Sweep { param, values } => {
            let rows = run_sweep(&cfg, param, values)?;
            write_sweep(create(&out, "sweep.csv")?, &rows)
        }
        Command::GenPrices { steps } => {
            let mut spec = cfg.prices.synthetic;
            if let Some(n) = steps {
                spec.steps = *n;
            }
            spec.validate()?;
            let prices = synthesize_prices(&spec, cfg.seed)?;
            write_prices(create(&out, "prices.csv")?, &prices)
        }
        Command::CalibrateForecaster { target_r2 } => calibrate(&cfg, &out, *target_r2),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
