//! Experiment runners: the per-slot link chain, BLER/BMD sweeps and the
//! aging-MSE experiment.
//!
//! Paired-seed discipline: every slot owns a stream derived from
//! `(seed, experiment, point, slot)`, and all arms replay clones of the
//! same stream, so baseline and neural runs see identical channels, bits
//! and noise.

use anyhow::{anyhow, bail, Context, Result};
use aplab_core::channel::{ChannelConfig, ChannelProcess, CfrSlot};
use aplab_core::csi::csi_noise_power;
use aplab_core::neural::{csi_mse, select_compensator, Compensator, NeuralPrecoder};
use aplab_core::phy::{
    bce, bits_per_symbol, build_grid, ldpc_encode, lmmse_detect, ls_estimate, propagate,
    qam_map, soft_demap, spa_decode, LdpcCode,
};
use aplab_core::precoding::{apply_precoder, Precoder, ZfPrecoder};
use aplab_core::RngStream;
use rayon::prelude::*;

use crate::config::ScenarioConfig;
use crate::csv::ResultRow;

/// Maximum decoder iterations in the evaluation chain.
const SPA_MAX_ITER: usize = 30;

/// How acquired CSI is cleaned before precoding.
pub enum CompensatorStack {
    None,
    Single(Compensator),
    /// Genie selection among candidates, per slot.
    Select(Vec<Compensator>),
}

pub enum PrecoderImpl {
    Zf(ZfPrecoder),
    Neural(NeuralPrecoder),
}

impl PrecoderImpl {
    fn precode(&self, csi: &CfrSlot) -> aplab_core::Result<aplab_core::precoding::PrecodingTensor> {
        match self {
            PrecoderImpl::Zf(p) => p.precode(csi),
            PrecoderImpl::Neural(p) => p.precode(csi),
        }
    }
}

/// One evaluated transmitter configuration.
pub struct Arm {
    pub label: String,
    pub compensator: CompensatorStack,
    pub precoder: PrecoderImpl,
}

/// Everything fixed across one experiment.
pub struct LinkSetup {
    pub channel: ChannelConfig,
    pub code: LdpcCode,
    pub m_qam: usize,
    pub pilot_symbols: Vec<usize>,
    pub n_layers: usize,
}

impl LinkSetup {
    pub fn from_config(cfg: &ScenarioConfig) -> Result<LinkSetup> {
        let code = match &cfg.code_file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading code file {path}"))?;
                LdpcCode::from_text(&text).map_err(|e| anyhow!("{e}"))?
            }
            None => {
                let mut rng = RngStream::new(cfg.code_seed, 0x1d9c_u64);
                LdpcCode::regular_3_6(cfg.code_n, &mut rng).map_err(|e| anyhow!("{e}"))?
            }
        };
        let bps = bits_per_symbol(cfg.m_qam).map_err(|e| anyhow!("{e}"))?;
        let data_res = (cfg.channel.symbols_per_slot - cfg.pilot_symbols.len())
            * cfg.channel.active_subcarriers();
        if code.block_len() != data_res * bps {
            bail!(
                "code length {} does not fill the {} coded bits per layer",
                code.block_len(),
                data_res * bps
            );
        }
        Ok(LinkSetup {
            channel: cfg.channel.clone(),
            code,
            m_qam: cfg.m_qam,
            pilot_symbols: cfg.pilot_symbols.clone(),
            n_layers: cfg.n_layers,
        })
    }
}

/// Accumulated link metrics for one arm at one sweep point.
#[derive(Debug, Clone, Default)]
pub struct PointMetrics {
    pub bit_errors: usize,
    pub info_bits: usize,
    pub block_errors: usize,
    pub slots: usize,
    pub bce_sum: f64,
    pub coded_bits: usize,
}

impl PointMetrics {
    pub fn ber(&self) -> f64 {
        self.bit_errors as f64 / self.info_bits.max(1) as f64
    }

    pub fn bler(&self) -> f64 {
        self.block_errors as f64 / self.slots.max(1) as f64
    }

    pub fn bmd(&self) -> f64 {
        1.0 - self.bce_sum / (self.coded_bits.max(1) as f64 * std::f64::consts::LN_2)
    }
}

/// Run one slot through the full chain for one arm. The same `slot_rng`
/// replayed for another arm reproduces the identical channel, CSI noise,
/// payload bits and receiver noise.
pub fn run_slot(
    setup: &LinkSetup,
    arm: &Arm,
    snr_db: f64,
    snr_csi_db: f64,
    tau: usize,
    slot_rng: &RngStream,
) -> Result<(PointMetrics, f64)> {
    let mut channel_rng = slot_rng.split(0);
    let mut csi_rng = slot_rng.split(1);
    let mut bits_rng = slot_rng.split(2);
    let mut noise_rng = slot_rng.split(3);

    let speed = channel_rng.uniform_in(setup.channel.ue_speed_mps.0, setup.channel.ue_speed_mps.1);
    let process =
        ChannelProcess::new(&setup.channel, speed, &mut channel_rng).map_err(|e| anyhow!("{e}"))?;
    let h_source = process.cfr_at_slot(0);
    let h_true = process.cfr_at_slot(tau);

    let mut csi = h_source;
    let noise_p = csi_noise_power(snr_csi_db);
    if noise_p > 0.0 {
        let noise = aplab_core::numerics::cgauss(csi.values.len(), noise_p, &mut csi_rng)
            .map_err(|e| anyhow!("{e}"))?;
        for (v, z) in csi.values.iter_mut().zip(&noise) {
            *v += z;
        }
    }
    let uncompensated_mse = csi_mse(&csi, &h_true).map_err(|e| anyhow!("{e}"))?;

    let csi_used = match &arm.compensator {
        CompensatorStack::None => csi,
        CompensatorStack::Single(model) => model.compensate(&csi).map_err(|e| anyhow!("{e}"))?,
        CompensatorStack::Select(models) => {
            let refs: Vec<&Compensator> = models.iter().collect();
            select_compensator(&refs, &csi, &h_true).map_err(|e| anyhow!("{e}"))?.1
        }
    };

    // Payload: one code block per layer.
    let k = setup.code.info_len();
    let n = setup.code.block_len();
    let bps = bits_per_symbol(setup.m_qam).map_err(|e| anyhow!("{e}"))?;
    let mut info_bits = Vec::with_capacity(setup.n_layers);
    let mut coded = Vec::with_capacity(setup.n_layers);
    let mut layer_symbols = Vec::with_capacity(setup.n_layers);
    for _ in 0..setup.n_layers {
        let info: Vec<u8> = (0..k).map(|_| bits_rng.bit()).collect();
        let cw = ldpc_encode(&info, &setup.code).map_err(|e| anyhow!("{e}"))?;
        let syms = qam_map(&cw, setup.m_qam).map_err(|e| anyhow!("{e}"))?;
        info_bits.push(info);
        coded.push(cw);
        layer_symbols.push(syms);
    }
    // Interleave layers in (symbol, subcarrier, layer) fill order.
    let data_res = n / bps;
    let mut data = Vec::with_capacity(data_res * setup.n_layers);
    for re in 0..data_res {
        for v in 0..setup.n_layers {
            data.push(layer_symbols[v][re]);
        }
    }
    let grid = build_grid(
        &data,
        setup.n_layers,
        &setup.pilot_symbols,
        setup.channel.symbols_per_slot,
        setup.channel.active_subcarriers(),
    )
    .map_err(|e| anyhow!("{e}"))?;

    let f = arm.precoder.precode(&csi_used).map_err(|e| anyhow!("{e}"))?;
    let x = apply_precoder(&grid, &f).map_err(|e| anyhow!("{e}"))?;
    let y = propagate(&x, &h_true, snr_db, &mut noise_rng).map_err(|e| anyhow!("{e}"))?;
    let est = ls_estimate(&y, &grid).map_err(|e| anyhow!("{e}"))?;
    let dl_noise = if snr_db.is_infinite() { 0.0 } else { 10f64.powf(-snr_db / 10.0) };
    let eq = lmmse_detect(&y, &est, dl_noise).map_err(|e| anyhow!("{e}"))?;

    // Per layer: demap the data REs in fill order, decode, count.
    let mut metrics = PointMetrics { slots: 1, ..Default::default() };
    let mut slot_block_error = false;
    for v in 0..setup.n_layers {
        let mut symbols = Vec::with_capacity(data_res);
        let mut vars = Vec::with_capacity(data_res);
        for l in 0..grid.n_symb {
            if grid.is_pilot_symbol(l) {
                continue;
            }
            for kk in 0..grid.n_sc {
                let i = eq.idx(l, kk, v);
                symbols.push(eq.symbols[i]);
                vars.push(eq.noise_var[i]);
            }
        }
        let llrs = soft_demap(&symbols, &vars, setup.m_qam).map_err(|e| anyhow!("{e}"))?;
        for (&c, &l) in coded[v].iter().zip(&llrs) {
            metrics.bce_sum += bce(c, l);
        }
        metrics.coded_bits += n;
        let (decoded, _ok) =
            spa_decode(&llrs, &setup.code, SPA_MAX_ITER).map_err(|e| anyhow!("{e}"))?;
        let errors = decoded.iter().zip(&info_bits[v]).filter(|(a, b)| a != b).count();
        metrics.bit_errors += errors;
        metrics.info_bits += k;
        if errors > 0 {
            slot_block_error = true;
        }
    }
    if slot_block_error {
        metrics.block_errors = 1;
    }
    Ok((metrics, uncompensated_mse))
}

fn accumulate(total: &mut PointMetrics, part: &PointMetrics) {
    total.bit_errors += part.bit_errors;
    total.info_bits += part.info_bits;
    total.block_errors += part.block_errors;
    total.slots += part.slots;
    total.bce_sum += part.bce_sum;
    total.coded_bits += part.coded_bits;
}

/// BLER/BER/BMD versus downlink SNR for every arm, on paired seeds.
/// Sweep points run in parallel; output order follows the configuration.
pub fn run_bler_sweep(
    setup: &LinkSetup,
    arms: &[Arm],
    snr_grid: &[f64],
    snr_csi_list: &[f64],
    tau: usize,
    n_slots: usize,
    seed: u64,
) -> Result<Vec<ResultRow>> {
    let mut jobs = Vec::new();
    for (ci, &snr_csi) in snr_csi_list.iter().enumerate() {
        for (pi, &snr) in snr_grid.iter().enumerate() {
            jobs.push((ci, snr_csi, pi, snr));
        }
    }
    let per_point: Vec<Result<Vec<PointMetrics>>> = jobs
        .par_iter()
        .map(|&(ci, snr_csi, pi, snr)| {
            let point_rng =
                RngStream::new(seed, 0xb1e7).split(ci as u64).split(pi as u64);
            let mut totals: Vec<PointMetrics> =
                arms.iter().map(|_| PointMetrics::default()).collect();
            for slot in 0..n_slots {
                let slot_rng = point_rng.split(slot as u64);
                for (ai, arm) in arms.iter().enumerate() {
                    let (m, _) = run_slot(setup, arm, snr, snr_csi, tau, &slot_rng)?;
                    accumulate(&mut totals[ai], &m);
                }
            }
            Ok(totals)
        })
        .collect();

    let mut rows = Vec::new();
    for ((ci, snr_csi, _pi, snr), totals) in jobs.iter().zip(per_point) {
        let totals = totals?;
        let _ = ci;
        for (arm, m) in arms.iter().zip(&totals) {
            for (metric, value) in
                [("ber", m.ber()), ("bler", m.bler()), ("bmd", m.bmd())]
            {
                rows.push(ResultRow {
                    experiment_id: format!("bler/{}", arm.label),
                    snr_db: Some(*snr),
                    snr_csi_db: *snr_csi,
                    tau,
                    metric: metric.into(),
                    value,
                    n_samples: n_slots,
                    seed,
                });
            }
        }
    }
    Ok(rows)
}

/// CSI MSE versus aging lag for a family of compensation strategies:
/// no compensation, each single model, and genie selection over all of
/// them. Lags run in parallel; rows come out in (tau, strategy) order.
pub fn run_mse_vs_aging(
    channel: &ChannelConfig,
    models: &[(String, Compensator)],
    snr_csi_db: f64,
    tau_max: usize,
    n_slots: usize,
    seed: u64,
) -> Result<Vec<ResultRow>> {
    let taus: Vec<usize> = (0..=tau_max).collect();
    let per_tau: Vec<Result<Vec<(String, f64)>>> = taus
        .par_iter()
        .map(|&tau| {
            let tau_rng = RngStream::new(seed, 0x03e).split(tau as u64);
            let mut sums: Vec<f64> = vec![0.0; models.len() + 2];
            for slot in 0..n_slots {
                let slot_rng = tau_rng.split(slot as u64);
                let mut channel_rng = slot_rng.split(0);
                let mut csi_rng = slot_rng.split(1);
                let speed =
                    channel_rng.uniform_in(channel.ue_speed_mps.0, channel.ue_speed_mps.1);
                let process = ChannelProcess::new(channel, speed, &mut channel_rng)
                    .map_err(|e| anyhow!("{e}"))?;
                let source = process.cfr_at_slot(0);
                let truth = process.cfr_at_slot(tau);
                let mut csi = source;
                let noise_p = csi_noise_power(snr_csi_db);
                if noise_p > 0.0 {
                    let noise =
                        aplab_core::numerics::cgauss(csi.values.len(), noise_p, &mut csi_rng)
                            .map_err(|e| anyhow!("{e}"))?;
                    for (v, z) in csi.values.iter_mut().zip(&noise) {
                        *v += z;
                    }
                }
                sums[0] += csi_mse(&csi, &truth).map_err(|e| anyhow!("{e}"))?;
                let mut best = f64::INFINITY;
                for (mi, (_, model)) in models.iter().enumerate() {
                    let out = model.compensate(&csi).map_err(|e| anyhow!("{e}"))?;
                    let mse = csi_mse(&out, &truth).map_err(|e| anyhow!("{e}"))?;
                    sums[1 + mi] += mse;
                    if mse < best {
                        best = mse;
                    }
                }
                if models.is_empty() {
                    best = sums[0] / (slot + 1) as f64;
                }
                *sums.last_mut().unwrap() += best;
            }
            let mut out = Vec::new();
            out.push(("none".to_string(), sums[0] / n_slots as f64));
            for (mi, (label, _)) in models.iter().enumerate() {
                out.push((label.clone(), sums[1 + mi] / n_slots as f64));
            }
            if !models.is_empty() {
                out.push(("nn_selection".to_string(), sums[models.len() + 1] / n_slots as f64));
            }
            Ok(out)
        })
        .collect();

    let mut rows = Vec::new();
    for (tau, strategies) in taus.iter().zip(per_tau) {
        for (label, value) in strategies? {
            rows.push(ResultRow {
                experiment_id: format!("mse_aging/{label}"),
                snr_db: None,
                snr_csi_db,
                tau: *tau,
                metric: "mse".into(),
                value,
                n_samples: n_slots,
                seed,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::load_preset;

    fn desk_setup() -> (crate::config::ScenarioConfig, LinkSetup) {
        let mut cfg = load_preset("desk").unwrap();
        cfg.n_slots = 4;
        let setup = LinkSetup::from_config(&cfg).unwrap();
        (cfg, setup)
    }

    #[test]
    fn clean_high_snr_slot_is_error_free() {
        let (_, setup) = desk_setup();
        let arm = Arm {
            label: "zf".into(),
            compensator: CompensatorStack::None,
            precoder: PrecoderImpl::Zf(ZfPrecoder::default()),
        };
        let rng = RngStream::new(5, 0);
        for slot in 0..5 {
            let (m, _) =
                run_slot(&setup, &arm, 25.0, f64::INFINITY, 0, &rng.split(slot)).unwrap();
            assert_eq!(m.bit_errors, 0, "slot {slot}");
            assert_eq!(m.block_errors, 0);
            assert!(m.bmd() > 0.99);
        }
    }

    #[test]
    fn paired_arms_see_identical_channels() {
        // Two arms with the same configuration produce identical metrics
        // because the slot stream is replayed.
        let (_, setup) = desk_setup();
        let a = Arm {
            label: "a".into(),
            compensator: CompensatorStack::None,
            precoder: PrecoderImpl::Zf(ZfPrecoder::default()),
        };
        let b = Arm {
            label: "b".into(),
            compensator: CompensatorStack::None,
            precoder: PrecoderImpl::Zf(ZfPrecoder::default()),
        };
        let rng = RngStream::new(9, 0);
        for slot in 0..3 {
            let (ma, ua) = run_slot(&setup, &a, 8.0, 5.0, 2, &rng.split(slot)).unwrap();
            let (mb, ub) = run_slot(&setup, &b, 8.0, 5.0, 2, &rng.split(slot)).unwrap();
            assert_eq!(ma.bit_errors, mb.bit_errors);
            assert_eq!(ma.bce_sum, mb.bce_sum);
            assert_eq!(ua, ub);
        }
    }

    #[test]
    fn sweep_rows_are_deterministic_and_ordered() {
        let (_, setup) = desk_setup();
        let arms = vec![Arm {
            label: "zf".into(),
            compensator: CompensatorStack::None,
            precoder: PrecoderImpl::Zf(ZfPrecoder::default()),
        }];
        let run = || {
            run_bler_sweep(&setup, &arms, &[5.0, 15.0], &[5.0], 2, 3, 11).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2 * 3);
        assert_eq!(a[0].snr_db, Some(5.0));
        assert_eq!(a[3].snr_db, Some(15.0));
    }

    #[test]
    fn mse_rows_cover_all_strategies() {
        let cfg = load_preset("desk").unwrap();
        let mut rng = RngStream::new(1, 0);
        let model = Compensator::new(aplab_core::neural::CompensatorConfig {
            n_res_blocks: 1,
            f_input: 4,
            k_input: 3,
            f_block: 4,
            k_block: 3,
            k_output: 3,
        }, &mut rng)
        .unwrap();
        let rows = run_mse_vs_aging(
            &cfg.channel,
            &[("m0".into(), model)],
            f64::INFINITY,
            2,
            3,
            4,
        )
        .unwrap();
        // Strategies: none, m0, nn_selection over taus 0..=2.
        assert_eq!(rows.len(), 3 * 3);
        // Fresh models start as the identity, so their MSE equals the
        // uncompensated one and selection never exceeds it.
        for tau in 0..3 {
            let base = &rows[tau * 3];
            let sel = &rows[tau * 3 + 2];
            assert_eq!(base.experiment_id, "mse_aging/none");
            assert_eq!(sel.experiment_id, "mse_aging/nn_selection");
            assert!(sel.value <= base.value + 1e-12);
        }
        // Uncompensated MSE at tau = 0 with clean CSI is exactly zero.
        assert_eq!(rows[0].tau, 0);
        assert_eq!(rows[0].value, 0.0);
    }
}
