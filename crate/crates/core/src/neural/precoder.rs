//! Wideband neural precoder: 3D convolutions between an angular-delay
//! transform pair.
//!
//! One slot of CSI is arranged as a `(subcarrier, tx, rx)` complex volume
//! per OFDM symbol (symbols ride the batch axis). A 2D FFT over the
//! transmit-antenna and frequency axes moves the data to the angular-delay
//! domain, where it is sparse; the convolution stack works there, and the
//! inverse transform brings the result back. The output is read as the
//! precoding tensor with one layer per receive antenna, and every per-RE
//! beamforming column is renormalized to unit power.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::autodiff::{Activation, DiffTensor, ParamSet, Tape, Tensor};
use crate::channel::{ChannelConfig, ChannelProcess, CfrSlot};
use crate::csi::csi_noise_power;
use crate::error::{Error, Result};
use crate::neural::checkpoint::Checkpoint;
use crate::neural::compensator::{Compensator, TrainOutcome};
use crate::neural::init;
use crate::numerics::{C64, RngStream};
use crate::phy::{bits_per_symbol, qam_map};
use crate::precoding::{Precoder, PrecodingTensor};

/// Architecture of the neural precoder; the output layer always has two
/// filters (the re/im parts of the precoding tensor).
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderConfig {
    pub n_hidden: usize,
    pub f_input: usize,
    pub k_input: usize,
    pub f_hidden: usize,
    pub k_hidden: usize,
    pub k_output: usize,
}

impl PrecoderConfig {
    /// Desk-scale default.
    pub fn desk() -> Self {
        PrecoderConfig { n_hidden: 1, f_input: 32, k_input: 3, f_hidden: 32, k_hidden: 3, k_output: 3 }
    }

    /// Full-scale preset.
    pub fn paper() -> Self {
        PrecoderConfig { n_hidden: 2, f_input: 256, k_input: 9, f_hidden: 256, k_hidden: 7, k_output: 5 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.f_input == 0 || self.f_hidden == 0 {
            return Err(Error::InvalidConfig("precoder needs filters".into()));
        }
        for k in [self.k_input, self.k_hidden, self.k_output] {
            if k % 2 == 0 {
                return Err(Error::InvalidConfig("kernels must be odd".into()));
            }
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        alloc::vec![
            ("n_hidden".into(), format!("{}", self.n_hidden)),
            ("f_input".into(), format!("{}", self.f_input)),
            ("k_input".into(), format!("{}", self.k_input)),
            ("f_hidden".into(), format!("{}", self.f_hidden)),
            ("k_hidden".into(), format!("{}", self.k_hidden)),
            ("k_output".into(), format!("{}", self.k_output)),
        ]
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let get = |k: &str| -> Result<usize> {
            ck.config_value(k)?
                .parse()
                .map_err(|_| Error::Checkpoint(format!("bad config value for {k}")))
        };
        let cfg = PrecoderConfig {
            n_hidden: get("n_hidden")?,
            f_input: get("f_input")?,
            k_input: get("k_input")?,
            f_hidden: get("f_hidden")?,
            k_hidden: get("k_hidden")?,
            k_output: get("k_output")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub struct NeuralPrecoderModel {
    pub cfg: PrecoderConfig,
    pub params: ParamSet,
}

pub struct BoundPrecoder {
    /// Normalized precoding tensor, `(B, N_A, N_t, N_s, 2)`.
    pub precoder: DiffTensor,
    pub param_handles: Vec<(String, DiffTensor)>,
}

impl NeuralPrecoderModel {
    pub fn new(cfg: PrecoderConfig, rng: &mut RngStream) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamSet::new();
        let k = cfg.k_input;
        params.add("input.w", init::glorot_uniform(&[k, k, k, 2, cfg.f_input], rng))?;
        params.add("input.b", Tensor::zeros(&[cfg.f_input]))?;
        let mut cin = cfg.f_input;
        for i in 0..cfg.n_hidden {
            let k = cfg.k_hidden;
            params.add(
                &format!("hidden{i}.w"),
                init::he_uniform(&[k, k, k, cin, cfg.f_hidden], rng),
            )?;
            params.add(&format!("hidden{i}.b"), Tensor::zeros(&[cfg.f_hidden]))?;
            cin = cfg.f_hidden;
        }
        let k = cfg.k_output;
        params.add("output.w", init::glorot_uniform(&[k, k, k, cin, 2], rng))?;
        params.add("output.b", Tensor::zeros(&[2]))?;
        Ok(NeuralPrecoderModel { cfg, params })
    }

    /// Build the forward graph for an input `(B, N_A, N_t, N_r, 2)`. The
    /// frequency-axis shift of the transform pair is `shift` points
    /// (callers pass `n_fft / 2`).
    pub fn forward(
        &self,
        tape: &mut Tape,
        input: DiffTensor,
        shift: usize,
    ) -> Result<BoundPrecoder> {
        let mut handles = Vec::new();
        let mut leaf = |tape: &mut Tape, params: &ParamSet, name: &str| -> Result<DiffTensor> {
            let h = tape.leaf(params.get(name)?.clone());
            handles.push((String::from(name), h));
            Ok(h)
        };
        let spectrum = tape.cplx_fft2_shift(input, shift, false)?;
        let w = leaf(tape, &self.params, "input.w")?;
        let b = leaf(tape, &self.params, "input.b")?;
        let mut x = tape.conv3d(spectrum, w, b, Activation::None)?;
        for i in 0..self.cfg.n_hidden {
            let w = leaf(tape, &self.params, &format!("hidden{i}.w"))?;
            let b = leaf(tape, &self.params, &format!("hidden{i}.b"))?;
            x = tape.conv3d(x, w, b, Activation::Relu)?;
        }
        let w = leaf(tape, &self.params, "output.w")?;
        let b = leaf(tape, &self.params, "output.b")?;
        let out = tape.conv3d(x, w, b, Activation::None)?;
        let back = tape.cplx_fft2_shift(out, shift, true)?;
        let precoder = tape.normalize_columns(back)?;
        Ok(BoundPrecoder { precoder, param_handles: handles })
    }

    pub fn to_checkpoint(&self, meta: Vec<(String, String)>) -> Result<Checkpoint> {
        Checkpoint::from_params("precoder", self.cfg.to_pairs(), meta, &self.params)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != "precoder" {
            return Err(Error::Checkpoint(format!(
                "expected a precoder checkpoint, found {:?}",
                ck.kind
            )));
        }
        let cfg = PrecoderConfig::from_checkpoint(ck)?;
        let params = ck.to_params()?;
        let reference = NeuralPrecoderModel::new(cfg.clone(), &mut RngStream::new(0, 0))?;
        for want in reference.params.iter() {
            let got = params.get(&want.name).map_err(|_| {
                Error::Checkpoint(format!("checkpoint is missing parameter {}", want.name))
            })?;
            if got.shape() != want.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {} has shape {:?}, config implies {:?}",
                    want.name,
                    got.shape(),
                    want.value.shape()
                )));
            }
        }
        Ok(NeuralPrecoderModel { cfg, params })
    }
}

/// Pack CSI slots into the network input layout `(B*N_symb, N_A, N_t,
/// N_r, 2)`.
pub fn csi_to_volume(slots: &[CfrSlot]) -> Result<Tensor> {
    let first = slots.first().ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    let (n_symb, n_sc, n_rx, n_tx) = (first.n_symb, first.n_sc, first.n_rx, first.n_tx);
    let mut data = Vec::with_capacity(slots.len() * n_symb * n_sc * n_tx * n_rx * 2);
    for slot in slots {
        if !slot.same_shape(first) {
            return Err(Error::ShapeMismatch("mixed slot shapes in one batch".into()));
        }
        for l in 0..n_symb {
            for k in 0..n_sc {
                for t in 0..n_tx {
                    for r in 0..n_rx {
                        let z = slot.values[slot.idx(l, k, r, t)];
                        data.push(z.re);
                        data.push(z.im);
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[slots.len() * n_symb, n_sc, n_tx, n_rx, 2], data)
}

/// Pack channel slots as `(B*N_symb, N_A, N_r, N_t, 2)` matrices for the
/// effective-channel product.
fn channel_to_tensor(slots: &[CfrSlot]) -> Result<Tensor> {
    let first = slots.first().ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    let (n_symb, n_sc, n_rx, n_tx) = (first.n_symb, first.n_sc, first.n_rx, first.n_tx);
    let mut data = Vec::with_capacity(slots.len() * n_symb * n_sc * n_rx * n_tx * 2);
    for slot in slots {
        for l in 0..n_symb {
            for k in 0..n_sc {
                for r in 0..n_rx {
                    for t in 0..n_tx {
                        let z = slot.values[slot.idx(l, k, r, t)];
                        data.push(z.re);
                        data.push(z.im);
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[slots.len() * n_symb, n_sc, n_rx, n_tx, 2], data)
}

/// Compute the precoding tensor for one slot of CSI.
pub fn neural_precode(
    model: &NeuralPrecoderModel,
    csi: &CfrSlot,
    shift: usize,
) -> Result<PrecodingTensor> {
    if csi.n_rx > csi.n_tx {
        return Err(Error::InvalidArgument(
            "neural precoding assumes layers = receive antennas <= transmit antennas".into(),
        ));
    }
    let input = csi_to_volume(core::slice::from_ref(csi))?;
    let mut tape = Tape::new();
    let x = tape.leaf(input);
    let bound = model.forward(&mut tape, x, shift)?;
    let values = tape.value(bound.precoder).as_complex()?;
    Ok(PrecodingTensor {
        n_symb: csi.n_symb,
        n_sc: csi.n_sc,
        n_tx: csi.n_tx,
        n_layers: csi.n_rx,
        values,
    })
}

/// `Precoder` adapter for the experiment runners.
pub struct NeuralPrecoder {
    pub model: NeuralPrecoderModel,
    /// Frequency-axis shift of the transform pair (`n_fft / 2`).
    pub shift: usize,
}

impl Precoder for NeuralPrecoder {
    fn precode(&self, csi: &CfrSlot) -> Result<PrecodingTensor> {
        neural_precode(&self.model, csi, self.shift)
    }
}

/// Training hyperparameters for the neural precoder.
#[derive(Debug, Clone)]
pub struct PrecoderTrainParams {
    pub iterations: usize,
    pub batch_slots: usize,
    /// Downlink SNR range in dB, sampled uniformly per iteration.
    pub snr_db: (f64, f64),
    /// CSI impairment during training: acquisition SNR (infinite for
    /// clean) and aging lag in slots.
    pub snr_csi_db: f64,
    pub tau: usize,
    pub m_qam: usize,
    pub lr: f64,
    pub optimizer: crate::autodiff::Optimizer,
}

/// End-to-end training: per iteration, generate fresh slots, precode the
/// (possibly impaired, optionally pre-compensated) CSI, send random coded
/// bits through the true channel with sampled-SNR noise, run the
/// differentiable LMMSE receiver and max-log demapper, and minimize one
/// minus the bit-metric decoding rate. `progress` receives
/// `(iteration, loss)` with `loss = 1 - Gamma`.
pub fn train_precoder(
    cfg: &PrecoderConfig,
    train: &PrecoderTrainParams,
    channel_cfg: &ChannelConfig,
    compensator: Option<&Compensator>,
    rng: &mut RngStream,
    mut progress: impl FnMut(usize, f64),
) -> Result<TrainOutcome<NeuralPrecoderModel>> {
    channel_cfg.validate()?;
    if channel_cfg.n_rx > channel_cfg.n_tx {
        return Err(Error::InvalidConfig("training assumes n_rx <= n_tx".into()));
    }
    if train.batch_slots == 0 || train.iterations == 0 {
        return Err(Error::InvalidConfig("bad training ranges".into()));
    }
    let bps = bits_per_symbol(train.m_qam)?;
    let shift = channel_cfg.n_fft / 2;
    let n_layers = channel_cfg.n_rx;
    let mut model = NeuralPrecoderModel::new(cfg.clone(), &mut rng.split(u64::MAX))?;
    let mut history = Vec::with_capacity(train.iterations);
    let mut last_good = model.clone();

    for iter in 0..train.iterations {
        let mut iter_rng = rng.split(iter as u64);
        let snr_db = iter_rng.uniform_in(train.snr_db.0, train.snr_db.1);
        let noise_p = 10f64.powf(-snr_db / 10.0);
        let csi_noise = csi_noise_power(train.snr_csi_db);

        let mut csi_slots = Vec::with_capacity(train.batch_slots);
        let mut true_slots = Vec::with_capacity(train.batch_slots);
        for b in 0..train.batch_slots {
            let mut slot_rng = iter_rng.split(b as u64);
            let speed = slot_rng
                .uniform_in(channel_cfg.ue_speed_mps.0, channel_cfg.ue_speed_mps.1);
            let process = ChannelProcess::new(channel_cfg, speed, &mut slot_rng)?;
            let mut csi = process.cfr_at_slot(0);
            let truth = process.cfr_at_slot(train.tau);
            if csi_noise > 0.0 {
                let noise =
                    crate::numerics::cgauss(csi.values.len(), csi_noise, &mut slot_rng)?;
                for (v, z) in csi.values.iter_mut().zip(&noise) {
                    *v += z;
                }
            }
            let csi = match compensator {
                Some(c) => c.compensate(&csi)?,
                None => csi,
            };
            csi_slots.push(csi);
            true_slots.push(truth);
        }

        let bn = train.batch_slots * channel_cfg.symbols_per_slot;
        let n_sc = channel_cfg.active_subcarriers();
        let n_sym_total = bn * n_sc * n_layers;
        let bits: Vec<u8> = (0..n_sym_total * bps).map(|_| iter_rng.bit()).collect();
        let symbols = qam_map(&bits, train.m_qam)?;
        let s_tensor = Tensor::from_complex(&[bn, n_sc, n_layers, 1], &symbols)?;
        let noise = crate::numerics::cgauss(bn * n_sc * channel_cfg.n_rx, noise_p, &mut iter_rng)?;
        let z_tensor = Tensor::from_complex(&[bn, n_sc, channel_cfg.n_rx, 1], &noise)?;

        let mut tape = Tape::new();
        let x = tape.leaf(csi_to_volume(&csi_slots)?);
        let h_true = tape.leaf(channel_to_tensor(&true_slots)?);
        let bound = model.forward(&mut tape, x, shift)?;
        let h_eff = tape.cplx_matmul(h_true, bound.precoder)?;
        let s = tape.leaf(s_tensor);
        let z = tape.leaf(z_tensor);
        let hs = tape.cplx_matmul(h_eff, s)?;
        let y = tape.add(hs, z)?;
        let hh = tape.cplx_hermitian(h_eff)?;
        let gram = tape.cplx_matmul(hh, h_eff)?;
        let ginv = tape.cplx_inverse(gram, noise_p)?;
        let g = tape.cplx_matmul(ginv, hh)?;
        let gh = tape.cplx_matmul(g, h_eff)?;
        let d = tape.cplx_diag(gh)?;
        let u = tape.cplx_matmul(g, y)?;
        let u = tape.reshape(u, &[bn, n_sc, n_layers, 2])?;
        let xhat = tape.cplx_div_elem(u, d)?;

        // Per-layer post-equalization variance, detached from the graph.
        let vars = post_eq_variances(
            tape.value(g).data(),
            tape.value(gh).data(),
            tape.value(d).data(),
            bn * n_sc,
            n_layers,
            channel_cfg.n_rx,
            noise_p,
        );
        let llrs = tape.maxlog_llr(xhat, vars, train.m_qam)?;
        let loss = tape.bmd_bce(llrs, bits)?;
        let loss_val = tape.value(loss).data()[0];
        if !loss_val.is_finite() {
            let diag = tape
                .first_non_finite()
                .map(|(node, op)| {
                    format!("non-finite loss at iteration {iter}, first bad op {op} (node {node})")
                })
                .unwrap_or_else(|| format!("non-finite loss at iteration {iter}"));
            last_good.params.quantize_to_f32();
            return Ok(TrainOutcome {
                model: last_good,
                loss_history: history,
                aborted: Some(diag),
            });
        }
        tape.backward(loss)?;
        for (name, h) in &bound.param_handles {
            if let Some(gr) = tape.grad(*h) {
                let gr = gr.clone();
                model.params.accumulate_grad(name, &gr)?;
            }
        }
        model.params.step(train.optimizer, train.lr)?;
        history.push(loss_val);
        progress(iter, loss_val);
        if iter + 1 == train.iterations || iter % 50 == 0 {
            last_good = model.clone();
        }
    }
    model.params.quantize_to_f32();
    Ok(TrainOutcome { model, loss_history: history, aborted: None })
}

/// Residual interference plus filtered noise per layer after the
/// diagonally-normalized LMMSE filter.
fn post_eq_variances(
    g: &[f64],
    gh: &[f64],
    d: &[f64],
    batch: usize,
    n_layers: usize,
    n_rx: usize,
    noise_p: f64,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(batch * n_layers);
    for i in 0..batch {
        for s in 0..n_layers {
            let db = (i * n_layers + s) * 2;
            let den = C64::new(d[db], d[db + 1]);
            let den2 = den.norm_sqr().max(1e-300);
            let mut var = 0.0;
            for j in 0..n_layers {
                if j == s {
                    continue;
                }
                let b = (i * n_layers * n_layers + s * n_layers + j) * 2;
                var += (gh[b] * gh[b] + gh[b + 1] * gh[b + 1]) / den2;
            }
            for r in 0..n_rx {
                let b = (i * n_layers * n_rx + s * n_rx + r) * 2;
                var += noise_p * (g[b] * g[b] + g[b + 1] * g[b + 1]) / den2;
            }
            out.push(var);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Optimizer;
    use crate::channel::test_config;

    fn tiny_cfg() -> PrecoderConfig {
        PrecoderConfig { n_hidden: 1, f_input: 6, k_input: 3, f_hidden: 6, k_hidden: 3, k_output: 3 }
    }

    fn random_slot(seed: u64) -> CfrSlot {
        let mut rng = RngStream::new(seed, 0);
        ChannelProcess::new(&test_config(), 1.0, &mut rng).unwrap().cfr_at_slot(0)
    }

    #[test]
    fn zero_parameters_fall_back_to_canonical_beams() {
        let mut rng = RngStream::new(1, 0);
        let mut model = NeuralPrecoderModel::new(tiny_cfg(), &mut rng).unwrap();
        let names: Vec<String> = model.params.iter().map(|p| p.name.clone()).collect();
        for name in names {
            let shape = model.params.get(&name).unwrap().shape().to_vec();
            model.params.set_value(&name, Tensor::zeros(&shape)).unwrap();
        }
        let slot = random_slot(2);
        let f = neural_precode(&model, &slot, slot.n_sc / 2).unwrap();
        for l in 0..f.n_symb {
            for k in 0..f.n_sc {
                for v in 0..f.n_layers {
                    for t in 0..f.n_tx {
                        let want = if t == v % f.n_tx { 1.0 } else { 0.0 };
                        let got = f.values[f.idx(l, k, t, v)];
                        assert_eq!(got, C64::new(want, 0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn output_columns_are_unit_norm_for_random_params() {
        let mut rng = RngStream::new(3, 0);
        let model = NeuralPrecoderModel::new(tiny_cfg(), &mut rng).unwrap();
        let slot = random_slot(4);
        let f = neural_precode(&model, &slot, slot.n_sc / 2).unwrap();
        assert_eq!(
            (f.n_symb, f.n_sc, f.n_tx, f.n_layers),
            (slot.n_symb, slot.n_sc, slot.n_tx, slot.n_rx)
        );
        for l in 0..f.n_symb {
            for k in 0..f.n_sc {
                for v in 0..f.n_layers {
                    assert!((f.column_norm(l, k, v) - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn identity_conv_stack_roundtrips_through_the_transform() {
        // 1x1x1 kernels carrying the identity between the transform pair:
        // the network output equals its input, so after normalization the
        // precoder is the column-normalized CSI itself.
        let cfg = PrecoderConfig {
            n_hidden: 0,
            f_input: 2,
            k_input: 1,
            f_hidden: 2,
            k_hidden: 1,
            k_output: 1,
        };
        let mut rng = RngStream::new(5, 0);
        let mut model = NeuralPrecoderModel::new(cfg, &mut rng).unwrap();
        model
            .params
            .set_value(
                "input.w",
                Tensor::from_vec(&[1, 1, 1, 2, 2], alloc::vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            )
            .unwrap();
        model
            .params
            .set_value(
                "output.w",
                Tensor::from_vec(&[1, 1, 1, 2, 2], alloc::vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            )
            .unwrap();
        let slot = random_slot(6);
        let f = neural_precode(&model, &slot, slot.n_sc / 2).unwrap();
        for l in 0..slot.n_symb {
            for k in 0..slot.n_sc {
                // Column v of the expected result: CSI column (over tx for
                // rx v), normalized.
                for v in 0..slot.n_rx {
                    let mut norm2 = 0.0;
                    for t in 0..slot.n_tx {
                        norm2 += slot.values[slot.idx(l, k, v, t)].norm_sqr();
                    }
                    let norm = norm2.sqrt();
                    for t in 0..slot.n_tx {
                        let want = slot.values[slot.idx(l, k, v, t)] / norm;
                        let got = f.values[f.idx(l, k, t, v)];
                        assert!(
                            (want - got).norm() < 1e-9,
                            "l={l} k={k} t={t} v={v}: {want} vs {got}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn first_iteration_loss_is_finite_and_every_param_gets_gradient() {
        let cfg = tiny_cfg();
        let channel = test_config();
        let train = PrecoderTrainParams {
            iterations: 1,
            batch_slots: 2,
            snr_db: (0.0, 10.0),
            snr_csi_db: f64::INFINITY,
            tau: 0,
            m_qam: 4,
            lr: 1e-3,
            optimizer: Optimizer::Adam,
        };
        let mut rng = RngStream::new(7, 0);
        let mut got_loss = f64::NAN;
        let out = train_precoder(&cfg, &train, &channel, None, &mut rng, |_, l| got_loss = l)
            .unwrap();
        assert!(out.aborted.is_none());
        assert!(got_loss.is_finite(), "initial loss must be finite");
        // Dead-graph detector: after one step every trainable parameter
        // must have moved (Adam steps any nonzero gradient).
        let reference_rng = RngStream::new(7, 0);
        let reference =
            NeuralPrecoderModel::new(tiny_cfg(), &mut reference_rng.split(u64::MAX)).unwrap();
        for (p, q) in out.model.params.iter().zip(reference.params.iter()) {
            assert_eq!(p.name, q.name);
            let moved = p
                .value
                .data()
                .iter()
                .zip(q.value.data())
                .any(|(a, b)| (a - b).abs() > 1e-12);
            assert!(moved, "parameter {} received no gradient", p.name);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = tiny_cfg();
        let channel = test_config();
        let train = PrecoderTrainParams {
            iterations: 3,
            batch_slots: 1,
            snr_db: (5.0, 15.0),
            snr_csi_db: 5.0,
            tau: 1,
            m_qam: 4,
            lr: 1e-3,
            optimizer: Optimizer::Adam,
        };
        let run = || {
            let mut rng = RngStream::new(8, 0);
            let out = train_precoder(&cfg, &train, &channel, None, &mut rng, |_, _| {}).unwrap();
            out.model.to_checkpoint(alloc::vec![]).unwrap().to_bytes()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn checkpoint_roundtrip_reproduces_outputs() {
        let mut rng = RngStream::new(9, 0);
        let mut model = NeuralPrecoderModel::new(tiny_cfg(), &mut rng).unwrap();
        model.params.quantize_to_f32();
        let ck = model.to_checkpoint(alloc::vec![("seed".into(), "9".into())]).unwrap();
        let restored =
            NeuralPrecoderModel::from_checkpoint(&Checkpoint::from_bytes(&ck.to_bytes()).unwrap())
                .unwrap();
        let slot = random_slot(10);
        let a = neural_precode(&model, &slot, 8).unwrap();
        let b = neural_precode(&restored, &slot, 8).unwrap();
        assert_eq!(a.values, b.values);
    }
}
