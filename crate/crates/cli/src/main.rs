use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand};

use aplab_cli::config::{load_preset, ScenarioConfig};
use aplab_cli::csv::emit_csv;
use aplab_cli::selftest::run_selftest;
use aplab_cli::train::{train_compensator_cmd, train_precoder_cmd};
use aplab_cli::{eval_bler, eval_mse_aging};

#[derive(Parser)]
#[command(
    name = "aplab",
    about = "MIMO-OFDM link simulator with classical and neural precoding",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file; overrides the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in scenario scale.
    #[arg(long, default_value = "desk", value_parser = ["desk", "paper"])]
    preset: String,
    /// Seed for all randomness; overrides the scenario's sweep seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path (CSV for evaluations, checkpoint for training).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the CSI compensator and write its checkpoint.
    TrainCompensator(Common),
    /// Train the neural precoder and write its checkpoint.
    TrainPrecoder(Common),
    /// CSI mean-squared error versus aging lag for the configured
    /// compensation strategies.
    EvalMseAging(Common),
    /// BLER/BER/BMD versus downlink SNR for the configured transmitter
    /// (paired against the zero-forcing baseline when neural).
    EvalBler(Common),
    /// Per-layer flop estimates for the configured architectures.
    Flops(Common),
    /// Run the built-in oracle checks.
    Selftest,
}

fn load_scenario(common: &Common) -> Result<ScenarioConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| anyhow!("reading {}: {e}", path.display()))?;
            ScenarioConfig::from_text(&text, common.preset == "desk")?
        }
        None => load_preset(&common.preset)?,
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::TrainCompensator(common) => {
            let cfg = load_scenario(&common)?;
            let (_, history) =
                train_compensator_cmd(&cfg, cfg.seed, common.out.as_deref(), false)?;
            eprintln!(
                "trained {} iterations, final loss {:?}",
                history.len(),
                history.last().copied().unwrap_or(f64::NAN)
            );
            Ok(())
        }
        Command::TrainPrecoder(common) => {
            let cfg = load_scenario(&common)?;
            let (_, history) =
                train_precoder_cmd(&cfg, cfg.seed, common.out.as_deref(), false)?;
            eprintln!(
                "trained {} iterations, final loss {:?}",
                history.len(),
                history.last().copied().unwrap_or(f64::NAN)
            );
            Ok(())
        }
        Command::EvalMseAging(common) => {
            let cfg = load_scenario(&common)?;
            let rows = eval_mse_aging(&cfg)?;
            match &common.out {
                Some(path) => emit_csv(&rows, path)?,
                None => print!("{}", aplab_cli::csv::render_csv(&rows)?),
            }
            Ok(())
        }
        Command::EvalBler(common) => {
            let cfg = load_scenario(&common)?;
            let rows = eval_bler(&cfg)?;
            match &common.out {
                Some(path) => emit_csv(&rows, path)?,
                None => print!("{}", aplab_cli::csv::render_csv(&rows)?),
            }
            Ok(())
        }
        Command::Flops(common) => {
            let cfg = load_scenario(&common)?;
            let dims = aplab_core::neural::GridDims {
                n_symb: cfg.channel.symbols_per_slot,
                n_sc: cfg.channel.active_subcarriers(),
                n_rx: cfg.channel.n_rx,
                n_tx: cfg.channel.n_tx,
            };
            println!("component,layer,flops");
            for l in aplab_core::neural::compensator_flops(&cfg.train_compensator.arch, dims) {
                println!("compensator,{},{}", l.name, l.flops);
            }
            for l in aplab_core::neural::precoder_flops(&cfg.train_precoder.arch, dims) {
                println!("precoder,{},{}", l.name, l.flops);
            }
            let zf = aplab_core::neural::zf_baseline_flops(dims);
            println!("baseline,{},{}", zf.name, zf.flops);
            Ok(())
        }
        Command::Selftest => {
            let results = run_selftest();
            let mut failed = 0;
            for r in &results {
                let status = if r.pass { "PASS" } else { "FAIL" };
                println!("[{status}] {}: {}", r.name, r.detail);
                if !r.pass {
                    failed += 1;
                }
            }
            if failed > 0 {
                Err(anyhow!("{failed} selftest check(s) failed"))
            } else {
                Ok(())
            }
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
