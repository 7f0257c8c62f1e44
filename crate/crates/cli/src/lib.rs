//! Experiment runner for the MIMO-OFDM neural precoding laboratory:
//! scenario configs, training commands, evaluation sweeps and CSV output.

pub mod config;
pub mod csv;
pub mod runner;
pub mod selftest;
pub mod train;

use std::path::Path;

use anyhow::{anyhow, bail, Result};
use aplab_core::neural::{Compensator, NeuralPrecoder};
use aplab_core::precoding::ZfPrecoder;

use config::{CompensatorKind, PrecoderKind, ScenarioConfig};
use csv::ResultRow;
use runner::{Arm, CompensatorStack, LinkSetup, PrecoderImpl};

/// Resolve the scenario's compensator stack from its checkpoints.
pub fn build_compensator(cfg: &ScenarioConfig) -> Result<CompensatorStack> {
    Ok(match &cfg.compensator {
        CompensatorKind::None => CompensatorStack::None,
        CompensatorKind::Single { checkpoint } => {
            CompensatorStack::Single(train::load_compensator(Path::new(checkpoint))?)
        }
        CompensatorKind::Select { checkpoints } => {
            let models: Result<Vec<Compensator>> = checkpoints
                .iter()
                .map(|p| train::load_compensator(Path::new(p)))
                .collect();
            CompensatorStack::Select(models?)
        }
    })
}

/// Resolve the scenario's precoder.
pub fn build_precoder(cfg: &ScenarioConfig) -> Result<PrecoderImpl> {
    Ok(match &cfg.precoder {
        PrecoderKind::Zf { ridge } => PrecoderImpl::Zf(ZfPrecoder { ridge: *ridge }),
        PrecoderKind::Neural { checkpoint } => {
            let model = train::load_precoder_model(Path::new(checkpoint))?;
            PrecoderImpl::Neural(NeuralPrecoder { model, shift: cfg.channel.n_fft / 2 })
        }
    })
}

/// The BLER experiment as configured: the scenario's arm plus, when the
/// scenario is neural, a paired zero-forcing baseline on identical seeds.
pub fn eval_bler(cfg: &ScenarioConfig) -> Result<Vec<ResultRow>> {
    let setup = LinkSetup::from_config(cfg)?;
    let mut arms = Vec::new();
    let main_is_neural = matches!(cfg.precoder, PrecoderKind::Neural { .. })
        || !matches!(cfg.compensator, CompensatorKind::None);
    if main_is_neural {
        arms.push(Arm {
            label: "zf".into(),
            compensator: CompensatorStack::None,
            precoder: PrecoderImpl::Zf(ZfPrecoder::default()),
        });
        arms.push(Arm {
            label: "neural".into(),
            compensator: build_compensator(cfg)?,
            precoder: build_precoder(cfg)?,
        });
    } else {
        arms.push(Arm {
            label: "zf".into(),
            compensator: CompensatorStack::None,
            precoder: build_precoder(cfg)?,
        });
    }
    if cfg.sweep_snr_db.is_empty() {
        bail!("sweep.snr_db is empty");
    }
    runner::run_bler_sweep(
        &setup,
        &arms,
        &cfg.sweep_snr_db,
        &cfg.snr_csi_db,
        cfg.tau,
        cfg.n_slots,
        cfg.seed,
    )
}

/// The aging-MSE experiment as configured: compensation strategies from
/// the scenario's checkpoint list.
pub fn eval_mse_aging(cfg: &ScenarioConfig) -> Result<Vec<ResultRow>> {
    let models: Vec<(String, Compensator)> = match &cfg.compensator {
        CompensatorKind::None => Vec::new(),
        CompensatorKind::Single { checkpoint } => {
            let label = label_from_path(checkpoint);
            vec![(label, train::load_compensator(Path::new(checkpoint))?)]
        }
        CompensatorKind::Select { checkpoints } => {
            let mut out = Vec::new();
            for p in checkpoints {
                out.push((label_from_path(p), train::load_compensator(Path::new(p))?));
            }
            out
        }
    };
    let snr_csi = *cfg
        .snr_csi_db
        .first()
        .ok_or_else(|| anyhow!("csi.snr_csi_db must hold at least one value"))?;
    runner::run_mse_vs_aging(
        &cfg.channel,
        &models,
        snr_csi,
        cfg.tau_max,
        cfg.n_slots,
        cfg.seed,
    )
}

fn label_from_path(path: &str) -> String {
    Path::new(path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string())
}
