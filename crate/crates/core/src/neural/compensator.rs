//! Denoising CNN that estimates and removes CSI impairments.
//!
//! The network sees the impaired CSI of one slot rearranged as a 2D image
//! of shape `(N_symb * N_r * N_t) x N_A` with two channels (re, im). It
//! estimates the additive impairment (acquisition noise minus channel
//! evolution); subtracting that estimate from the input yields the
//! compensated CSI, a prediction of the channel actually in force.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::autodiff::{Activation, BatchStats, DiffTensor, ParamSet, Tape, Tensor, BN_MOMENTUM};
use crate::channel::{ChannelConfig, ChannelProcess, CfrSlot};
use crate::csi::csi_noise_power;
use crate::error::{Error, Result};
use crate::neural::checkpoint::Checkpoint;
use crate::neural::init;
use crate::numerics::{C64, RngStream};

/// Architecture of the compensator. The output layer always carries two
/// filters (the re/im impairment estimate); residual blocks keep the
/// channel count of the input layer.
#[derive(Debug, Clone, PartialEq)]
pub struct CompensatorConfig {
    pub n_res_blocks: usize,
    pub f_input: usize,
    pub k_input: usize,
    pub f_block: usize,
    pub k_block: usize,
    pub k_output: usize,
}

impl CompensatorConfig {
    /// Desk-scale default: narrow and shallow enough to train in minutes.
    pub fn desk() -> Self {
        CompensatorConfig {
            n_res_blocks: 2,
            f_input: 24,
            k_input: 7,
            f_block: 24,
            k_block: 9,
            k_output: 9,
        }
    }

    /// Full-scale preset.
    pub fn paper() -> Self {
        CompensatorConfig {
            n_res_blocks: 5,
            f_input: 96,
            k_input: 7,
            f_block: 96,
            k_block: 9,
            k_output: 9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_res_blocks == 0 || self.f_input == 0 {
            return Err(Error::InvalidConfig("compensator needs blocks and filters".into()));
        }
        if self.f_block != self.f_input {
            return Err(Error::InvalidConfig(
                "residual blocks must keep the input layer's channel count".into(),
            ));
        }
        for k in [self.k_input, self.k_block, self.k_output] {
            if k % 2 == 0 {
                return Err(Error::InvalidConfig("kernels must be odd".into()));
            }
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        alloc::vec![
            ("n_res_blocks".into(), format!("{}", self.n_res_blocks)),
            ("f_input".into(), format!("{}", self.f_input)),
            ("k_input".into(), format!("{}", self.k_input)),
            ("f_block".into(), format!("{}", self.f_block)),
            ("k_block".into(), format!("{}", self.k_block)),
            ("k_output".into(), format!("{}", self.k_output)),
        ]
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let get = |k: &str| -> Result<usize> {
            ck.config_value(k)?
                .parse()
                .map_err(|_| Error::Checkpoint(format!("bad config value for {k}")))
        };
        let cfg = CompensatorConfig {
            n_res_blocks: get("n_res_blocks")?,
            f_input: get("f_input")?,
            k_input: get("k_input")?,
            f_block: get("f_block")?,
            k_block: get("k_block")?,
            k_output: get("k_output")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Compensator model: config plus parameters (including batch-norm
/// running statistics).
#[derive(Debug, Clone)]
pub struct Compensator {
    pub cfg: CompensatorConfig,
    pub params: ParamSet,
}

/// Handles of one forward build, for reading gradients back.
pub struct BoundCompensator {
    /// Estimated impairment, image layout.
    pub impairment: DiffTensor,
    /// Compensated CSI, image layout.
    pub compensated: DiffTensor,
    pub param_handles: Vec<(String, DiffTensor)>,
    pub bn_stats: Vec<(String, BatchStats)>,
}

impl Compensator {
    pub fn new(cfg: CompensatorConfig, rng: &mut RngStream) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamSet::new();
        // Linear input layer: expand 2 channels to the working width.
        params.add(
            "input.w",
            init::glorot_uniform(&[cfg.k_input, cfg.k_input, 2, cfg.f_input], rng),
        )?;
        params.add("input.b", Tensor::zeros(&[cfg.f_input]))?;
        for i in 0..cfg.n_res_blocks {
            params.add(&format!("rb{i}.bn.gamma"), init::ones(&[cfg.f_input]))?;
            params.add(&format!("rb{i}.bn.beta"), Tensor::zeros(&[cfg.f_input]))?;
            params.add_buffer(&format!("rb{i}.bn.running_mean"), Tensor::zeros(&[cfg.f_input]))?;
            params.add_buffer(&format!("rb{i}.bn.running_var"), init::ones(&[cfg.f_input]))?;
            params.add(
                &format!("rb{i}.conv.w"),
                init::he_uniform(&[cfg.k_block, cfg.k_block, cfg.f_input, cfg.f_block], rng),
            )?;
            params.add(&format!("rb{i}.conv.b"), Tensor::zeros(&[cfg.f_block]))?;
        }
        // Linear output layer reconstructs the two impairment channels.
        // Zero-initialized so an untrained compensator is the identity
        // map: with no impairment estimate the input passes through, and
        // the supervised loss starts at the uncompensated error.
        params.add("output.w", Tensor::zeros(&[cfg.k_output, cfg.k_output, cfg.f_input, 2]))?;
        params.add("output.b", Tensor::zeros(&[2]))?;
        Ok(Compensator { cfg, params })
    }

    /// Build the forward graph on `tape` for an image-layout input
    /// `(B, rows, N_A, 2)`. Training mode uses batch statistics and
    /// reports them for the running-average update.
    pub fn forward(
        &self,
        tape: &mut Tape,
        input: DiffTensor,
        train: bool,
    ) -> Result<BoundCompensator> {
        let mut handles = Vec::new();
        let mut bn_stats = Vec::new();
        let mut leaf = |tape: &mut Tape, params: &ParamSet, name: &str| -> Result<DiffTensor> {
            let h = tape.leaf(params.get(name)?.clone());
            handles.push((String::from(name), h));
            Ok(h)
        };

        let w = leaf(tape, &self.params, "input.w")?;
        let b = leaf(tape, &self.params, "input.b")?;
        let mut x = tape.conv2d(input, w, b, Activation::None)?;
        for i in 0..self.cfg.n_res_blocks {
            let gamma = leaf(tape, &self.params, &format!("rb{i}.bn.gamma"))?;
            let beta = leaf(tape, &self.params, &format!("rb{i}.bn.beta"))?;
            let bn = if train {
                let (bn, stats) = tape.batchnorm_train(x, gamma, beta)?;
                bn_stats.push((format!("rb{i}.bn"), stats));
                bn
            } else {
                let mean = self.params.get(&format!("rb{i}.bn.running_mean"))?.data().to_vec();
                let var = self.params.get(&format!("rb{i}.bn.running_var"))?.data().to_vec();
                tape.batchnorm_eval(x, gamma, beta, &mean, &var)?
            };
            let w = leaf(tape, &self.params, &format!("rb{i}.conv.w"))?;
            let b = leaf(tape, &self.params, &format!("rb{i}.conv.b"))?;
            let conv = tape.conv2d(bn, w, b, Activation::Relu)?;
            x = tape.add(x, conv)?;
        }
        let w = leaf(tape, &self.params, "output.w")?;
        let b = leaf(tape, &self.params, "output.b")?;
        let impairment = tape.conv2d(x, w, b, Activation::None)?;
        let compensated = tape.sub(input, impairment)?;
        Ok(BoundCompensator { impairment, compensated, param_handles: handles, bn_stats })
    }

    /// Fold batch statistics into the running averages.
    pub fn update_running_stats(&mut self, bn_stats: &[(String, BatchStats)]) -> Result<()> {
        for (prefix, stats) in bn_stats {
            for (suffix, batch) in
                [("running_mean", &stats.mean), ("running_var", &stats.var)]
            {
                let name = format!("{prefix}.{suffix}");
                let mut run = self.params.get(&name)?.clone();
                for (r, &b) in run.data_mut().iter_mut().zip(batch.iter()) {
                    *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
                }
                self.params.set_value(&name, run)?;
            }
        }
        Ok(())
    }

    /// Compensate one slot of impaired CSI (inference mode).
    pub fn compensate(&self, csi: &CfrSlot) -> Result<CfrSlot> {
        let input = csi_to_image(core::slice::from_ref(csi))?;
        let mut tape = Tape::new();
        let x = tape.leaf(input);
        let bound = self.forward(&mut tape, x, false)?;
        image_to_csi(tape.value(bound.compensated), csi.n_symb, csi.n_sc, csi.n_rx, csi.n_tx)
            .map(|mut slots| slots.remove(0))
    }

    pub fn to_checkpoint(&self, meta: Vec<(String, String)>) -> Result<Checkpoint> {
        Checkpoint::from_params("compensator", self.cfg.to_pairs(), meta, &self.params)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != "compensator" {
            return Err(Error::Checkpoint(format!(
                "expected a compensator checkpoint, found {:?}",
                ck.kind
            )));
        }
        let cfg = CompensatorConfig::from_checkpoint(ck)?;
        let params = ck.to_params()?;
        let reference = Compensator::new(cfg.clone(), &mut RngStream::new(0, 0))?;
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
        Ok(Compensator { cfg, params })
    }
}

/// Rearrange CSI slots into the network's image layout
/// `(B, N_symb * N_r * N_t, N_A, 2)`.
pub fn csi_to_image(slots: &[CfrSlot]) -> Result<Tensor> {
    let first = slots.first().ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    let (n_symb, n_sc, n_rx, n_tx) = (first.n_symb, first.n_sc, first.n_rx, first.n_tx);
    let rows = n_symb * n_rx * n_tx;
    let mut data = Vec::with_capacity(slots.len() * rows * n_sc * 2);
    for slot in slots {
        if !slot.same_shape(first) {
            return Err(Error::ShapeMismatch("mixed slot shapes in one batch".into()));
        }
        for l in 0..n_symb {
            for r in 0..n_rx {
                for t in 0..n_tx {
                    for k in 0..n_sc {
                        let z = slot.values[slot.idx(l, k, r, t)];
                        data.push(z.re);
                        data.push(z.im);
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[slots.len(), rows, n_sc, 2], data)
}

/// Inverse of `csi_to_image`.
pub fn image_to_csi(
    image: &Tensor,
    n_symb: usize,
    n_sc: usize,
    n_rx: usize,
    n_tx: usize,
) -> Result<Vec<CfrSlot>> {
    let rows = n_symb * n_rx * n_tx;
    let shape = image.shape();
    if shape.len() != 4 || shape[1] != rows || shape[2] != n_sc || shape[3] != 2 {
        return Err(Error::ShapeMismatch(format!(
            "image shape {shape:?} does not match {rows}x{n_sc}x2"
        )));
    }
    let b = shape[0];
    let d = image.data();
    let mut out = Vec::with_capacity(b);
    for bi in 0..b {
        let mut slot = CfrSlot::zeros(n_symb, n_sc, n_rx, n_tx);
        let mut src = bi * rows * n_sc * 2;
        for l in 0..n_symb {
            for r in 0..n_rx {
                for t in 0..n_tx {
                    for k in 0..n_sc {
                        let i = slot.idx(l, k, r, t);
                        slot.values[i] = C64::new(d[src], d[src + 1]);
                        src += 2;
                    }
                }
            }
        }
        out.push(slot);
    }
    Ok(out)
}

/// Training hyperparameters for the compensator.
#[derive(Debug, Clone)]
pub struct CompensatorTrainParams {
    pub iterations: usize,
    pub batch_slots: usize,
    /// CSI acquisition SNR range in dB, sampled uniformly per iteration;
    /// use infinities for the noiseless regime.
    pub snr_csi_db: (f64, f64),
    /// Aging range in slots (inclusive), sampled uniformly per iteration.
    pub tau: (usize, usize),
    pub lr: f64,
    pub optimizer: crate::autodiff::Optimizer,
}

/// Result of a training run. `aborted` carries a diagnostic when a
/// non-finite loss cut the run short; the model then holds the last good
/// parameters.
pub struct TrainOutcome<M> {
    pub model: M,
    pub loss_history: Vec<f64>,
    pub aborted: Option<String>,
}

/// Supervised training: per iteration, draw a fresh mini-batch of channel
/// realizations, age them by a sampled lag, corrupt with sampled-SNR
/// noise, and minimize the mean squared error between the compensated CSI
/// and the true current channel. `progress` receives `(iteration, loss)`.
pub fn train_compensator(
    cfg: &CompensatorConfig,
    train: &CompensatorTrainParams,
    channel_cfg: &ChannelConfig,
    rng: &mut RngStream,
    mut progress: impl FnMut(usize, f64),
) -> Result<TrainOutcome<Compensator>> {
    channel_cfg.validate()?;
    if train.tau.1 < train.tau.0 || train.batch_slots == 0 || train.iterations == 0 {
        return Err(Error::InvalidConfig("bad training ranges".into()));
    }
    let mut model = Compensator::new(cfg.clone(), &mut rng.split(u64::MAX))?;
    let mut history = Vec::with_capacity(train.iterations);
    let mut last_good = model.clone();

    for iter in 0..train.iterations {
        let mut iter_rng = rng.split(iter as u64);
        let tau =
            train.tau.0 + iter_rng.below((train.tau.1 - train.tau.0 + 1) as u64) as usize;
        let snr_csi = if train.snr_csi_db.0.is_infinite() {
            f64::INFINITY
        } else {
            iter_rng.uniform_in(train.snr_csi_db.0, train.snr_csi_db.1)
        };
        let noise_p = csi_noise_power(snr_csi);

        let mut inputs = Vec::with_capacity(train.batch_slots);
        let mut targets = Vec::with_capacity(train.batch_slots);
        for b in 0..train.batch_slots {
            let mut slot_rng = iter_rng.split(b as u64);
            let speed = slot_rng
                .uniform_in(channel_cfg.ue_speed_mps.0, channel_cfg.ue_speed_mps.1);
            let process = ChannelProcess::new(channel_cfg, speed, &mut slot_rng)?;
            let source = process.cfr_at_slot(0);
            let target = process.cfr_at_slot(tau);
            let mut impaired = source;
            if noise_p > 0.0 {
                let noise =
                    crate::numerics::cgauss(impaired.values.len(), noise_p, &mut slot_rng)?;
                for (v, z) in impaired.values.iter_mut().zip(&noise) {
                    *v += z;
                }
            }
            inputs.push(impaired);
            targets.push(target);
        }

        let input = csi_to_image(&inputs)?;
        let target = csi_to_image(&targets)?;
        let mut tape = Tape::new();
        let x = tape.leaf(input);
        let t = tape.leaf(target);
        let bound = model.forward(&mut tape, x, true)?;
        let loss = tape.mse(bound.compensated, t)?;
        let loss_val = tape.value(loss).data()[0];
        if !loss_val.is_finite() {
            let diag = tape
                .first_non_finite()
                .map(|(node, op)| format!("non-finite loss at iteration {iter}, first bad op {op} (node {node})"))
                .unwrap_or_else(|| format!("non-finite loss at iteration {iter}"));
            last_good.params.quantize_to_f32();
            return Ok(TrainOutcome { model: last_good, loss_history: history, aborted: Some(diag) });
        }
        tape.backward(loss)?;
        for (name, h) in &bound.param_handles {
            if let Some(g) = tape.grad(*h) {
                let g = g.clone();
                model.params.accumulate_grad(name, &g)?;
            }
        }
        model.update_running_stats(&bound.bn_stats)?;
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

/// Mean squared error per complex entry between two same-shaped slots.
pub fn csi_mse(a: &CfrSlot, b: &CfrSlot) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch("slot shapes differ".into()));
    }
    let sum: f64 =
        a.values.iter().zip(&b.values).map(|(x, y)| (x - y).norm_sqr()).sum();
    Ok(sum / a.values.len() as f64)
}

/// Genie model selection: run every candidate and keep the one with the
/// smallest MSE against the reference channel (ties go to the lowest
/// index). Returns the winning index and its output.
pub fn select_compensator(
    candidates: &[&Compensator],
    csi: &CfrSlot,
    reference: &CfrSlot,
) -> Result<(usize, CfrSlot)> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidate compensators".into()));
    }
    let mut best: Option<(usize, f64, CfrSlot)> = None;
    for (i, cand) in candidates.iter().enumerate() {
        let out = cand.compensate(csi)?;
        let mse = csi_mse(&out, reference)?;
        let better = match &best {
            Some((_, best_mse, _)) => mse < *best_mse,
            None => true,
        };
        if better {
            best = Some((i, mse, out));
        }
    }
    let (idx, _, out) = best.unwrap();
    Ok((idx, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Optimizer;
    use crate::channel::test_config;

    fn tiny_cfg() -> CompensatorConfig {
        CompensatorConfig {
            n_res_blocks: 1,
            f_input: 4,
            k_input: 3,
            f_block: 4,
            k_block: 3,
            k_output: 3,
        }
    }

    fn random_slot(seed: u64) -> CfrSlot {
        let mut rng = RngStream::new(seed, 0);
        let cfg = test_config();
        ChannelProcess::new(&cfg, 1.0, &mut rng).unwrap().cfr_at_slot(0)
    }

    #[test]
    fn image_layout_roundtrip() {
        let slot = random_slot(1);
        let img = csi_to_image(core::slice::from_ref(&slot)).unwrap();
        assert_eq!(img.shape(), &[1, slot.n_symb * slot.n_rx * slot.n_tx, slot.n_sc, 2]);
        let back = image_to_csi(&img, slot.n_symb, slot.n_sc, slot.n_rx, slot.n_tx).unwrap();
        assert_eq!(back[0], slot);
    }

    #[test]
    fn zeroed_output_layer_makes_identity() {
        let mut rng = RngStream::new(2, 0);
        let mut model = Compensator::new(tiny_cfg(), &mut rng).unwrap();
        let shape = model.params.get("output.w").unwrap().shape().to_vec();
        model.params.set_value("output.w", Tensor::zeros(&shape)).unwrap();
        let slot = random_slot(3);
        let out = model.compensate(&slot).unwrap();
        assert_eq!(out, slot, "zero impairment estimate must return the input exactly");
    }

    #[test]
    fn compensated_minus_truth_equals_impairment_error() {
        // The implementation satisfies the residual identity exactly:
        // compensated - truth = (input - truth) - estimated_impairment.
        let mut rng = RngStream::new(4, 0);
        let model = Compensator::new(tiny_cfg(), &mut rng).unwrap();
        let truth = random_slot(5);
        let mut input = truth.clone();
        let noise = crate::numerics::cgauss(input.values.len(), 0.3, &mut rng).unwrap();
        for (v, z) in input.values.iter_mut().zip(&noise) {
            *v += z;
        }
        let out = model.compensate(&input).unwrap();
        // Reconstruct the estimate from input - output.
        for i in 0..out.values.len() {
            let est = input.values[i] - out.values[i];
            let lhs = out.values[i] - truth.values[i];
            let rhs = (input.values[i] - truth.values[i]) - est;
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn select_compensator_prefers_lower_mse_and_breaks_ties_low() {
        let mut rng = RngStream::new(6, 0);
        let identity = Compensator::new(tiny_cfg(), &mut rng).unwrap();
        // A compensator that subtracts a nonzero estimate from everything.
        let mut noisy = Compensator::new(tiny_cfg(), &mut rng).unwrap();
        let shape = noisy.params.get("output.w").unwrap().shape().to_vec();
        noisy.params.set_value("output.w", init::glorot_uniform(&shape, &mut rng)).unwrap();

        let truth = random_slot(7);
        let mut input = truth.clone();
        let noise = crate::numerics::cgauss(input.values.len(), 0.5, &mut rng).unwrap();
        for (v, z) in input.values.iter_mut().zip(&noise) {
            *v += z;
        }
        // Identity returns the input; reference = input means identity has
        // zero error and must win even from index 1.
        let (idx, _) = select_compensator(&[&noisy, &identity], &input, &input).unwrap();
        assert_eq!(idx, 1);
        // Identical candidates tie; lowest index wins.
        let (idx, _) = select_compensator(&[&identity, &identity], &input, &truth).unwrap();
        assert_eq!(idx, 0);
        // Single candidate.
        let (idx, _) = select_compensator(&[&noisy], &input, &truth).unwrap();
        assert_eq!(idx, 0);
    }

    #[test]
    fn checkpoint_roundtrip_reproduces_outputs() {
        let mut rng = RngStream::new(8, 0);
        let mut model = Compensator::new(tiny_cfg(), &mut rng).unwrap();
        model.params.quantize_to_f32();
        let ck = model.to_checkpoint(alloc::vec![("seed".into(), "8".into())]).unwrap();
        let bytes = ck.to_bytes();
        let restored =
            Compensator::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        let slot = random_slot(9);
        let a = model.compensate(&slot).unwrap();
        let b = restored.compensate(&slot).unwrap();
        assert_eq!(a, b, "loaded model must reproduce outputs exactly");
        // Save -> load -> save is byte-identical.
        let ck2 = restored.to_checkpoint(alloc::vec![("seed".into(), "8".into())]).unwrap();
        assert_eq!(bytes, ck2.to_bytes());
    }

    #[test]
    fn clean_frozen_training_stays_near_zero_loss() {
        // tau = 0 and no noise: nothing to learn beyond identity; the loss
        // starts near zero and stays small.
        let cfg = tiny_cfg();
        let mut channel = test_config();
        channel.ue_speed_mps = (0.0, 0.0);
        let train = CompensatorTrainParams {
            iterations: 30,
            batch_slots: 2,
            snr_csi_db: (f64::INFINITY, f64::INFINITY),
            tau: (0, 0),
            lr: 1e-3,
            optimizer: Optimizer::Adam,
        };
        let mut rng = RngStream::new(10, 0);
        let out = train_compensator(&cfg, &train, &channel, &mut rng, |_, _| {}).unwrap();
        assert!(out.aborted.is_none());
        assert!(
            out.loss_history.iter().all(|&l| l < 1e-3),
            "max loss {:?}",
            out.loss_history.iter().cloned().fold(0.0, f64::max)
        );
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = tiny_cfg();
        let channel = test_config();
        let train = CompensatorTrainParams {
            iterations: 5,
            batch_slots: 2,
            snr_csi_db: (0.0, 10.0),
            tau: (0, 2),
            lr: 1e-3,
            optimizer: Optimizer::Adam,
        };
        let run = || {
            let mut rng = RngStream::new(11, 0);
            let out = train_compensator(&cfg, &train, &channel, &mut rng, |_, _| {}).unwrap();
            out.model.to_checkpoint(alloc::vec![]).unwrap().to_bytes()
        };
        assert_eq!(run(), run());
    }
}
