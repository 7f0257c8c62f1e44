use aplab_cli::config::load_preset;
use aplab_cli::runner::*;
use aplab_core::autodiff::Optimizer;
use aplab_core::neural::*;
use aplab_core::precoding::ZfPrecoder;
use aplab_core::RngStream;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(|s| s.as_str()).unwrap_or("c8");

    let mut cfg = load_preset("desk").unwrap();
    let mut train_channel = cfg.channel.clone();
    train_channel.symbols_per_slot = 4;

    if which == "c8" {
        let t0 = Instant::now();
        let arch = CompensatorConfig::desk();
        let params = CompensatorTrainParams {
            iterations: 2000,
            batch_slots: 4,
            snr_csi_db: (-5.0, 5.0),
            tau: (0, 10),
            lr: 1e-3,
            optimizer: Optimizer::Adam,
        };
        let mut rng = RngStream::new(42, 0xc0);
        let out = train_compensator(&arch, &params, &train_channel, &mut rng, |i, l| {
            if i % 200 == 0 { eprintln!("iter {i}: loss {l:.4}"); }
        }).unwrap();
        eprintln!("whole-range trained in {:.1} s", t0.elapsed().as_secs_f64());
        let rows = run_mse_vs_aging(&train_channel, &[("whole".into(), out.model)], 5.0, 8, 200, 999).unwrap();
        for r in &rows { eprintln!("tau {} {}: {:.4}", r.tau, r.experiment_id, r.value); }
    }

    if which == "c9a" {
        let mut frozen = cfg.channel.clone();
        frozen.ue_speed_mps = (0.0, 0.0);
        let arch = PrecoderConfig::desk();
        let params = PrecoderTrainParams {
            iterations: 2000,
            batch_slots: 8,
            snr_db: (10.0, 10.0),
            snr_csi_db: f64::INFINITY,
            tau: 0,
            m_qam: 4,
            lr: 1e-3,
            optimizer: Optimizer::Adam,
        };
        let t0 = Instant::now();
        let mut rng = RngStream::new(7, 0xf0);
        let out = train_precoder(&arch, &params, &frozen, None, &mut rng, |i, l| {
            if i % 200 == 0 { eprintln!("iter {i}: loss {l:.4} (gamma {:.4})", 1.0 - l); }
        }).unwrap();
        eprintln!("precoder trained in {:.1} s", t0.elapsed().as_secs_f64());

        cfg.channel = frozen.clone();
        let setup = LinkSetup::from_config(&cfg).unwrap();
        let arms = vec![
            Arm { label: "zf".into(), compensator: CompensatorStack::None,
                  precoder: PrecoderImpl::Zf(ZfPrecoder::default()) },
            Arm { label: "neural".into(), compensator: CompensatorStack::None,
                  precoder: PrecoderImpl::Neural(NeuralPrecoder { model: out.model, shift: frozen.n_fft / 2 }) },
        ];
        let rows = run_bler_sweep(&setup, &arms, &[10.0], &[f64::INFINITY], 0, 300, 555).unwrap();
        for r in rows.iter().filter(|r| r.metric == "bmd" || r.metric == "bler") {
            eprintln!("{} {}: {:.4}", r.experiment_id, r.metric, r.value);
        }
    }
}
