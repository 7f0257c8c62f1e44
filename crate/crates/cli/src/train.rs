//! Training drivers: wrap the core loops with progress CSV on stdout and
//! checkpoint files on disk.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use aplab_core::autodiff::Optimizer;
use aplab_core::neural::{
    train_compensator, train_precoder, Checkpoint, Compensator, CompensatorTrainParams,
    NeuralPrecoderModel, PrecoderTrainParams,
};
use aplab_core::RngStream;

use crate::config::ScenarioConfig;

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes =
        std::fs::read(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    Checkpoint::from_bytes(&bytes).map_err(|e| anyhow!("{e}"))
}

pub fn load_compensator(path: &Path) -> Result<Compensator> {
    Compensator::from_checkpoint(&load_checkpoint(path)?).map_err(|e| anyhow!("{e}"))
}

pub fn load_precoder_model(path: &Path) -> Result<NeuralPrecoderModel> {
    NeuralPrecoderModel::from_checkpoint(&load_checkpoint(path)?).map_err(|e| anyhow!("{e}"))
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, ck.to_bytes())
        .with_context(|| format!("writing checkpoint {}", path.display()))
}

/// Progress sink printing `iteration,loss,wall_ms` lines.
fn progress_printer(quiet: bool) -> impl FnMut(usize, f64) {
    let start = Instant::now();
    let mut out = std::io::stdout();
    move |iter, loss| {
        if quiet {
            return;
        }
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let _ = writeln!(out, "{iter},{loss},{wall_ms:.1}");
    }
}

/// Train a compensator per the scenario's training block and write the
/// checkpoint. Returns the trained model and its loss history.
pub fn train_compensator_cmd(
    cfg: &ScenarioConfig,
    seed: u64,
    out: Option<&Path>,
    quiet: bool,
) -> Result<(Compensator, Vec<f64>)> {
    let tb = &cfg.train_compensator;
    let params = CompensatorTrainParams {
        iterations: tb.iterations,
        batch_slots: tb.batch_slots,
        snr_csi_db: tb.snr_csi_db,
        tau: tb.tau,
        lr: tb.lr,
        optimizer: Optimizer::Adam,
    };
    let mut rng = RngStream::new(seed, 0xc0);
    if !quiet {
        println!("iteration,loss,wall_ms");
    }
    let outcome = train_compensator(
        &tb.arch,
        &params,
        &cfg.channel,
        &mut rng,
        progress_printer(quiet),
    )
    .map_err(|e| anyhow!("{e}"))?;
    if let Some(diag) = &outcome.aborted {
        eprintln!("training aborted: {diag}; writing the last good checkpoint");
    }
    let meta = vec![
        ("seed".to_string(), format!("{seed}")),
        ("iterations".to_string(), format!("{}", outcome.loss_history.len())),
        (
            "final_loss".to_string(),
            format!("{:?}", outcome.loss_history.last().copied().unwrap_or(f64::NAN)),
        ),
    ];
    let ck = outcome.model.to_checkpoint(meta).map_err(|e| anyhow!("{e}"))?;
    if let Some(path) = out {
        save_checkpoint(&ck, path)?;
    }
    Ok((outcome.model, outcome.loss_history))
}

/// Train the neural precoder per the scenario's training block and write
/// the checkpoint.
pub fn train_precoder_cmd(
    cfg: &ScenarioConfig,
    seed: u64,
    out: Option<&Path>,
    quiet: bool,
) -> Result<(NeuralPrecoderModel, Vec<f64>)> {
    let tb = &cfg.train_precoder;
    let params = PrecoderTrainParams {
        iterations: tb.iterations,
        batch_slots: tb.batch_slots,
        snr_db: tb.snr_db,
        snr_csi_db: tb.snr_csi_db,
        tau: tb.tau,
        m_qam: cfg.m_qam,
        lr: tb.lr,
        optimizer: Optimizer::Adam,
    };
    let compensator = match &tb.input_compensator {
        Some(path) => Some(load_compensator(Path::new(path))?),
        None => None,
    };
    let mut rng = RngStream::new(seed, 0xf0);
    if !quiet {
        println!("iteration,loss,wall_ms");
    }
    let outcome = train_precoder(
        &tb.arch,
        &params,
        &cfg.channel,
        compensator.as_ref(),
        &mut rng,
        progress_printer(quiet),
    )
    .map_err(|e| anyhow!("{e}"))?;
    if let Some(diag) = &outcome.aborted {
        eprintln!("training aborted: {diag}; writing the last good checkpoint");
    }
    let meta = vec![
        ("seed".to_string(), format!("{seed}")),
        ("iterations".to_string(), format!("{}", outcome.loss_history.len())),
        (
            "final_loss".to_string(),
            format!("{:?}", outcome.loss_history.last().copied().unwrap_or(f64::NAN)),
        ),
    ];
    let ck = outcome.model.to_checkpoint(meta).map_err(|e| anyhow!("{e}"))?;
    if let Some(path) = out {
        save_checkpoint(&ck, path)?;
    }
    Ok((outcome.model, outcome.loss_history))
}
