//! Built-in oracle checks, runnable without the test harness. Each check
//! prints one pass/fail line; the command exits nonzero on any failure.

use aplab_core::autodiff::{Activation, Tape, Tensor};
use aplab_core::channel::{coherence_time, doppler_freq};
use aplab_core::csi::{f_csi, CsiSchedule};
use aplab_core::numerics::{cgauss, cinv, fft1, CMat, RngStream};
use aplab_core::phy::{bmd_rate, ldpc_encode, spa_decode, LdpcCode, LLR_CLIP};
use aplab_core::precoding::zf_precode;
use aplab_core::C64;

pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &'static str, pass: bool, detail: String) -> CheckResult {
    CheckResult { name, pass, detail }
}

pub fn run_selftest() -> Vec<CheckResult> {
    let mut results = Vec::new();
    let kmh = 1.0 / 3.6;

    let fd = doppler_freq(3.0 * kmh, 28.0e9);
    let tc = coherence_time(5.0 * kmh, 28.0e9);
    results.push(check(
        "doppler_coherence",
        (fd - 77.78).abs() < 0.01 && (tc - 3.85e-3).abs() < 0.01e-3,
        format!("f_D(3 km/h) = {fd:.2} Hz, T_c(5 km/h) = {:.2} ms", tc * 1e3),
    ));

    let sched = CsiSchedule::new(4, 0).unwrap();
    results.push(check(
        "csi_schedule",
        f_csi(6, sched).unwrap() == 4 && f_csi(4, sched).unwrap() == 4,
        "f_csi arithmetic".into(),
    ));

    let mut rng = RngStream::new(7, 1);
    let v = cgauss(200_000, 1.0, &mut rng).unwrap();
    let p = v.iter().map(|z| z.norm_sqr()).sum::<f64>() / v.len() as f64;
    results.push(check(
        "cgauss_power",
        (0.99..=1.01).contains(&p),
        format!("mean |z|^2 = {p:.4}"),
    ));

    let mut rng = RngStream::new(8, 0);
    let a = CMat::from_rows(4, 4, cgauss(16, 1.0, &mut rng).unwrap());
    let inv = cinv(&a, 0.0).unwrap();
    let mut resid = a.matmul(&inv);
    for i in 0..4 {
        resid[(i, i)] -= C64::new(1.0, 0.0);
    }
    results.push(check(
        "cinv_residual",
        resid.fro_norm() < 1e-10,
        format!("|A inv(A) - I| = {:.2e}", resid.fro_norm()),
    ));

    let x = cgauss(21, 1.0, &mut rng).unwrap();
    let back = fft1(&fft1(&x, false), true);
    let err = x.iter().zip(&back).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    results.push(check("fft_roundtrip", err < 1e-12, format!("max error {err:.2e}")));

    let mut worst_off = 0.0f64;
    let mut worst_norm = 0.0f64;
    for s in 0..50 {
        let mut rng = RngStream::new(20, s);
        let csi = aplab_core::channel::CfrSlot {
            n_symb: 1,
            n_sc: 1,
            n_rx: 2,
            n_tx: 4,
            values: cgauss(8, 1.0, &mut rng).unwrap(),
        };
        let f = zf_precode(&csi, 1e-10).unwrap();
        let hf = csi.at(0, 0).matmul(&f.at(0, 0));
        for r in 0..2 {
            for c in 0..2 {
                if r != c {
                    worst_off = worst_off.max(hf[(r, c)].norm());
                }
            }
            worst_norm = worst_norm.max((f.column_norm(0, 0, r) - 1.0).abs());
        }
    }
    results.push(check(
        "zf_diagonalizes",
        worst_off < 1e-9 && worst_norm < 1e-9,
        format!("max off-diagonal {worst_off:.2e}, max column-norm error {worst_norm:.2e}"),
    ));

    let mut rng = RngStream::new(21, 0);
    let code = LdpcCode::regular_3_6(32, &mut rng).unwrap();
    let bits: Vec<u8> = (0..code.info_len()).map(|_| rng.bit()).collect();
    let cw = ldpc_encode(&bits, &code).unwrap();
    let llrs: Vec<f64> =
        cw.iter().map(|&b| if b == 1 { LLR_CLIP } else { -LLR_CLIP }).collect();
    let (decoded, ok) = spa_decode(&llrs, &code, 5).unwrap();
    results.push(check(
        "ldpc_decode",
        ok && decoded == bits && code.syndrome_ok(&cw),
        "noiseless decode".into(),
    ));

    let g0 = bmd_rate(&[1, 0], &[LLR_CLIP, -LLR_CLIP]).unwrap();
    let gz = bmd_rate(&[1, 0], &[0.0, 0.0]).unwrap();
    results.push(check(
        "bmd_normalization",
        g0 >= 1.0 - 1e-15 && gz.abs() < 1e-15,
        format!("perfect {g0}, zero {gz}"),
    ));

    // A small conv gradient probe.
    let mut rng = RngStream::new(22, 0);
    let x = Tensor::from_vec(&[1, 3, 3, 1], (0..9).map(|_| rng.uniform_in(-1.0, 1.0)).collect())
        .unwrap();
    let w = Tensor::from_vec(&[3, 3, 1, 1], (0..9).map(|_| rng.uniform_in(-1.0, 1.0)).collect())
        .unwrap();
    let b = Tensor::zeros(&[1]);
    let target = Tensor::zeros(&[1, 3, 3, 1]);
    let loss_of = |xv: &Tensor| {
        let mut tape = Tape::new();
        let hx = tape.leaf(xv.clone());
        let hw = tape.leaf(w.clone());
        let hb = tape.leaf(b.clone());
        let ht = tape.leaf(target.clone());
        let y = tape.conv2d(hx, hw, hb, Activation::Relu).unwrap();
        let l = tape.mse(y, ht).unwrap();
        (tape.value(l).data()[0], tape, hx, l)
    };
    let (_, mut tape, hx, l) = loss_of(&x);
    tape.backward(l).unwrap();
    let an = tape.grad(hx).unwrap().data()[4];
    let h = 1e-5;
    let mut xp = x.clone();
    xp.data_mut()[4] += h;
    let mut xm = x.clone();
    xm.data_mut()[4] -= h;
    let fd = (loss_of(&xp).0 - loss_of(&xm).0) / (2.0 * h);
    let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-3);
    results.push(check(
        "conv_gradient",
        rel < 1e-4,
        format!("finite-difference relative error {rel:.2e}"),
    ));

    results
}
