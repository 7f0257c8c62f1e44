//! Gray-labeled square QAM mapping and max-log soft demapping.
//!
//! Labeling convention, fixed across the crate: the in-phase bits of a
//! symbol come first, then the quadrature bits; within one axis the bit
//! group is Gray-coded with bit value 0 on the positive amplitudes (so
//! QPSK maps bits (0,0) to (1+j)/sqrt(2)). Average constellation energy
//! is exactly one.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::numerics::C64;
use crate::phy::metrics::LLR_CLIP;

/// log2(M) for the supported constellations.
pub fn bits_per_symbol(m: usize) -> Result<usize> {
    match m {
        4 => Ok(2),
        16 => Ok(4),
        64 => Ok(6),
        256 => Ok(8),
        _ => Err(Error::InvalidArgument(alloc::format!("unsupported QAM order {m}"))),
    }
}

fn gray_to_binary(mut g: usize) -> usize {
    let mut b = g;
    while g > 0 {
        g >>= 1;
        b ^= g;
    }
    b
}

/// Per-axis amplitude for a Gray-coded bit group of `bits` bits.
fn axis_amplitude(group: usize, bits: usize, scale: f64) -> f64 {
    let levels = 1usize << bits;
    let idx = gray_to_binary(group);
    scale * ((levels - 1) as f64 - 2.0 * idx as f64)
}

/// Unit-energy scale for square M-QAM: each axis carries (M - 1) / 3 mean
/// energy at unit level spacing, with L^2 = M levels per axis squared.
fn energy_scale(m: usize) -> f64 {
    (3.0 / (2.0 * (m as f64 - 1.0))).sqrt()
}

/// Per-axis amplitude table for the shared Gray labeling: entry `g` is
/// the amplitude of the axis bit group `g`. Returns (bits per axis,
/// amplitudes).
pub(crate) fn axis_amp_table(m: usize) -> Result<(usize, Vec<f64>)> {
    let bps = bits_per_symbol(m)?;
    let half = bps / 2;
    let scale = energy_scale(m);
    let amps = (0..1usize << half).map(|g| axis_amplitude(g, half, scale)).collect();
    Ok((half, amps))
}

/// Map a bit sequence onto Gray-labeled M-QAM symbols.
pub fn qam_map(bits: &[u8], m: usize) -> Result<Vec<C64>> {
    let bps = bits_per_symbol(m)?;
    if bits.len() % bps != 0 {
        return Err(Error::InvalidArgument(alloc::format!(
            "{} bits do not fill whole {m}-QAM symbols",
            bits.len()
        )));
    }
    let half = bps / 2;
    let scale = energy_scale(m);
    let mut out = Vec::with_capacity(bits.len() / bps);
    for chunk in bits.chunks_exact(bps) {
        let mut i_group = 0usize;
        let mut q_group = 0usize;
        for j in 0..half {
            i_group = (i_group << 1) | chunk[j] as usize;
            q_group = (q_group << 1) | chunk[half + j] as usize;
        }
        out.push(C64::new(
            axis_amplitude(i_group, half, scale),
            axis_amplitude(q_group, half, scale),
        ));
    }
    Ok(out)
}

/// Max-log LLRs for equalized symbols. `noise_var` holds one effective
/// noise variance per symbol; positive LLR means bit 1. Values are clipped
/// to +/- `LLR_CLIP`.
pub fn soft_demap(symbols: &[C64], noise_var: &[f64], m: usize) -> Result<Vec<f64>> {
    let bps = bits_per_symbol(m)?;
    if symbols.len() != noise_var.len() {
        return Err(Error::ShapeMismatch("one noise variance per symbol".into()));
    }
    let half = bps / 2;
    let levels = 1usize << half;
    let scale = energy_scale(m);
    // Amplitude of every axis bit-group, indexed by the group value.
    let amps: Vec<f64> = (0..levels).map(|g| axis_amplitude(g, half, scale)).collect();

    let mut out = Vec::with_capacity(symbols.len() * bps);
    for (s, &var) in symbols.iter().zip(noise_var) {
        let var = var.max(1e-300);
        for axis in 0..2 {
            let x = if axis == 0 { s.re } else { s.im };
            for bit in 0..half {
                let mask = 1usize << (half - 1 - bit);
                let mut best0 = f64::INFINITY;
                let mut best1 = f64::INFINITY;
                for (g, &a) in amps.iter().enumerate() {
                    let d = x - a;
                    let metric = d * d;
                    if g & mask == 0 {
                        best0 = best0.min(metric);
                    } else {
                        best1 = best1.min(metric);
                    }
                }
                let llr = (best0 - best1) / var;
                out.push(llr.clamp(-LLR_CLIP, LLR_CLIP));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qpsk_all_zero_bits_map_to_first_quadrant() {
        let s = qam_map(&[0, 0], 4).unwrap();
        let want = 1.0 / 2f64.sqrt();
        assert!((s[0].re - want).abs() < 1e-15);
        assert!((s[0].im - want).abs() < 1e-15);
    }

    #[test]
    fn constellations_have_unit_mean_energy() {
        for &m in &[4usize, 16, 64, 256] {
            let bps = bits_per_symbol(m).unwrap();
            let mut total = 0.0;
            for v in 0..m {
                let bits: Vec<u8> = (0..bps).map(|j| ((v >> (bps - 1 - j)) & 1) as u8).collect();
                let s = qam_map(&bits, m).unwrap()[0];
                total += s.norm_sqr();
            }
            let mean = total / m as f64;
            assert!((mean - 1.0).abs() < 1e-12, "M={m}: mean energy {mean}");
        }
    }

    #[test]
    fn gray_adjacency_for_16qam() {
        // Every pair of constellation points at minimum distance differs
        // in exactly one bit.
        let m = 16;
        let bps = 4;
        let mut points = alloc::vec::Vec::new();
        for v in 0..m {
            let bits: Vec<u8> = (0..bps).map(|j| ((v >> (bps - 1 - j)) & 1) as u8).collect();
            points.push((v, qam_map(&bits, m).unwrap()[0]));
        }
        let dmin = 2.0 * energy_scale(m);
        for (va, sa) in &points {
            for (vb, sb) in &points {
                if va >= vb {
                    continue;
                }
                if ((sa - sb).norm() - dmin).abs() < 1e-9 {
                    let hamming = (va ^ vb).count_ones();
                    assert_eq!(hamming, 1, "points {va:04b} and {vb:04b} are adjacent");
                }
            }
        }
    }

    #[test]
    fn bit_count_must_fill_symbols() {
        assert!(qam_map(&[0, 1, 0], 4).is_err());
        assert!(qam_map(&[0, 1], 5).is_err());
    }

    #[test]
    fn noiseless_demap_saturates_with_hard_decision_sign() {
        // (1+j)/sqrt(2) carries bits (0,0): both LLRs at the negative clip.
        let s = qam_map(&[0, 0], 4).unwrap();
        let llr = soft_demap(&s, &[1e-12], 4).unwrap();
        assert_eq!(llr, alloc::vec![-LLR_CLIP, -LLR_CLIP]);
        let s = qam_map(&[1, 1], 4).unwrap();
        let llr = soft_demap(&s, &[1e-12], 4).unwrap();
        assert_eq!(llr, alloc::vec![LLR_CLIP, LLR_CLIP]);
    }

    #[test]
    fn decision_boundary_gives_zero_llr() {
        // Zero in-phase part sits exactly between the two QPSK columns.
        let x = C64::new(0.0, 0.7);
        let llr = soft_demap(&[x], &[0.5], 4).unwrap();
        assert_eq!(llr[0], 0.0);
        assert!(llr[1] < 0.0);
    }

    #[test]
    fn maxlog_sign_agrees_with_exact_llr_for_qpsk() {
        use crate::numerics::RngStream;
        let mut rng = RngStream::new(17, 0);
        let var = 0.5;
        let a = 1.0 / 2f64.sqrt();
        for _ in 0..10_000 {
            let x = C64::new(rng.uniform_in(-2.0, 2.0), rng.uniform_in(-2.0, 2.0));
            let llr = soft_demap(&[x], &[var], 4).unwrap();
            // Exact log-MAP per axis (two-point PAM).
            for (axis, &l) in llr.iter().enumerate() {
                let v = if axis == 0 { x.re } else { x.im };
                let p1 = (-(v + a) * (v + a) / var).exp();
                let p0 = (-(v - a) * (v - a) / var).exp();
                let exact = (p1 / p0).ln();
                if exact.abs() > 1e-9 {
                    assert_eq!(l.signum(), exact.signum(), "axis {axis}, x={v}");
                }
            }
        }
    }
}
