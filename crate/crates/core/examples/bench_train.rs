use aplab_core::autodiff::Optimizer;
use aplab_core::channel::ChannelConfig;
use aplab_core::neural::*;
use aplab_core::RngStream;
use std::time::Instant;

fn main() {
    let channel = ChannelConfig {
        carrier_freq_hz: 28.0e9,
        delay_spread_s: 100.0e-9,
        num_taps: 8,
        tap_decay_rate: 1.0,
        ue_speed_mps: (3.0 / 3.6, 5.0 / 3.6),
        n_fft: 16,
        guard: (0, 0),
        n_tx: 4,
        n_rx: 2,
        scs_hz: 30.0e3,
        symbols_per_slot: 4,
    };
    // Compensator desk config, 20 iterations timed.
    let cfg = CompensatorConfig::desk();
    let train = CompensatorTrainParams {
        iterations: 20,
        batch_slots: 4,
        snr_csi_db: (-5.0, 5.0),
        tau: (0, 10),
        lr: 1e-3,
        optimizer: Optimizer::Adam,
    };
    let mut rng = RngStream::new(1, 0);
    let t0 = Instant::now();
    let out = train_compensator(&cfg, &train, &channel, &mut rng, |_, _| {}).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!("compensator: {:.3} s / 20 iters = {:.1} ms/iter; loss {:.4} -> {:.4}",
        dt, dt / 20.0 * 1000.0, out.loss_history[0], out.loss_history.last().unwrap());

    let pcfg = PrecoderConfig::desk();
    let ptrain = PrecoderTrainParams {
        iterations: 20,
        batch_slots: 4,
        snr_db: (-10.0, 10.0),
        snr_csi_db: f64::INFINITY,
        tau: 0,
        m_qam: 4,
        lr: 1e-3,
        optimizer: Optimizer::Adam,
    };
    let mut rng = RngStream::new(2, 0);
    let t0 = Instant::now();
    let out = train_precoder(&pcfg, &ptrain, &channel, None, &mut rng, |_, _| {}).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!("precoder: {:.3} s / 20 iters = {:.1} ms/iter; loss {:.4} -> {:.4}",
        dt, dt / 20.0 * 1000.0, out.loss_history[0], out.loss_history.last().unwrap());
}
