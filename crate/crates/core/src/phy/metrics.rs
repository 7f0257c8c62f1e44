//! Link quality metrics: BMD rate, BER and BLER.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// LLR magnitudes are clipped here throughout the chain.
pub const LLR_CLIP: f64 = 40.0;

/// LLR values for a batch of slots, indexed `[slot, layer, coded bit]`.
/// Positive means bit 1.
#[derive(Debug, Clone)]
pub struct LlrTensor {
    pub n_slots: usize,
    pub n_layers: usize,
    pub n_bits: usize,
    pub values: Vec<f64>,
}

impl LlrTensor {
    pub fn new(n_slots: usize, n_layers: usize, n_bits: usize) -> Self {
        LlrTensor { n_slots, n_layers, n_bits, values: alloc::vec![0.0; n_slots * n_layers * n_bits] }
    }

    #[inline]
    pub fn idx(&self, q: usize, v: usize, b: usize) -> usize {
        (q * self.n_layers + v) * self.n_bits + b
    }

    pub fn slot_layer(&self, q: usize, v: usize) -> &[f64] {
        let base = self.idx(q, v, 0);
        &self.values[base..base + self.n_bits]
    }

    pub fn set_slot_layer(&mut self, q: usize, v: usize, llrs: &[f64]) {
        assert_eq!(llrs.len(), self.n_bits);
        let base = self.idx(q, v, 0);
        for (dst, &l) in self.values[base..base + self.n_bits].iter_mut().zip(llrs) {
            *dst = l.clamp(-LLR_CLIP, LLR_CLIP);
        }
    }
}

/// Numerically stable ln(1 + e^x).
#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-(x.abs())).exp().ln_1p()
}

/// Binary cross entropy of one coded bit against its LLR (natural log).
#[inline]
pub fn bce(bit: u8, llr: f64) -> f64 {
    if bit == 1 {
        softplus(-llr)
    } else {
        softplus(llr)
    }
}

/// Bit-metric decoding rate in bits per channel bit.
///
/// Normalized so that perfect LLRs give 1 and uninformative (all-zero)
/// LLRs give 0: `1 - mean(bce) / ln 2`. Compensated summation keeps the
/// all-zero case at zero to machine precision.
pub fn bmd_rate(coded_bits: &[u8], llrs: &[f64]) -> Result<f64> {
    if coded_bits.len() != llrs.len() {
        return Err(Error::ShapeMismatch("bits and LLRs must pair up".into()));
    }
    if coded_bits.is_empty() {
        return Err(Error::InvalidArgument("empty input".into()));
    }
    let mut sum = 0.0;
    let mut comp = 0.0;
    for (&c, &l) in coded_bits.iter().zip(llrs) {
        let term = bce(c, l);
        let t = sum + (term - comp);
        comp = (t - sum) - (term - comp);
        sum = t;
    }
    let n = coded_bits.len() as f64;
    Ok(1.0 - sum / (n * core::f64::consts::LN_2))
}

/// Bit error rate and block error rate, with blocks of `block_bits` bits.
pub fn ber_bler(decoded: &[u8], reference: &[u8], block_bits: usize) -> Result<(f64, f64)> {
    if decoded.len() != reference.len() {
        return Err(Error::ShapeMismatch("decoded and reference lengths differ".into()));
    }
    if block_bits == 0 || decoded.len() % block_bits != 0 {
        return Err(Error::InvalidArgument("bits must form whole blocks".into()));
    }
    let mut bit_errors = 0usize;
    let mut block_errors = 0usize;
    for (d, r) in decoded.chunks_exact(block_bits).zip(reference.chunks_exact(block_bits)) {
        let e = d.iter().zip(r).filter(|(a, b)| a != b).count();
        bit_errors += e;
        if e > 0 {
            block_errors += 1;
        }
    }
    let n_blocks = decoded.len() / block_bits;
    Ok((
        bit_errors as f64 / decoded.len() as f64,
        block_errors as f64 / n_blocks as f64,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_llrs_reach_unit_rate() {
        let bits: Vec<u8> = (0..1000).map(|i| (i % 2) as u8).collect();
        let llrs: Vec<f64> =
            bits.iter().map(|&b| if b == 1 { LLR_CLIP } else { -LLR_CLIP }).collect();
        let g = bmd_rate(&bits, &llrs).unwrap();
        assert!(g >= 1.0 - 1e-15, "gamma = {g}");
    }

    #[test]
    fn zero_llrs_give_zero_rate() {
        for n in [1usize, 3, 1000, 1001] {
            let bits: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
            let llrs = alloc::vec![0.0; n];
            let g = bmd_rate(&bits, &llrs).unwrap();
            assert!(g.abs() < 1e-15, "n={n}: gamma = {g}");
        }
    }

    #[test]
    fn single_bit_closed_form() {
        // bce(1, ln 3) = ln(4/3), so gamma = 1 - ln(4/3)/ln 2.
        let g = bmd_rate(&[1], &[3f64.ln()]).unwrap();
        let want = 1.0 - (4f64 / 3.0).ln() / core::f64::consts::LN_2;
        assert!((g - want).abs() < 1e-12);
        assert!((g - 0.5849625007211562).abs() < 1e-12);
    }

    #[test]
    fn rate_shrinks_with_llr_magnitude() {
        let bits: Vec<u8> = (0..256).map(|i| (i % 2) as u8).collect();
        let mut last = 1.0;
        for mag in [20.0, 5.0, 2.0, 0.5, 0.0] {
            let llrs: Vec<f64> =
                bits.iter().map(|&b| if b == 1 { mag } else { -mag }).collect();
            let g = bmd_rate(&bits, &llrs).unwrap();
            assert!(g <= last + 1e-15, "gamma must not grow as magnitudes shrink");
            last = g;
        }
        assert!((last - 0.0).abs() < 1e-15);
    }

    #[test]
    fn wrong_sign_llrs_go_negative() {
        let bits = alloc::vec![1u8; 64];
        let llrs = alloc::vec![-10.0; 64];
        assert!(bmd_rate(&bits, &llrs).unwrap() < 0.0);
    }

    #[test]
    fn ber_bler_counting() {
        let reference = alloc::vec![0u8; 1000];
        let mut decoded = reference.clone();
        assert_eq!(ber_bler(&decoded, &reference, 100).unwrap(), (0.0, 0.0));
        decoded[137] = 1;
        let (ber, bler) = ber_bler(&decoded, &reference, 100).unwrap();
        assert!((ber - 0.001).abs() < 1e-15);
        assert!((bler - 0.1).abs() < 1e-15);
        let complement: Vec<u8> = reference.iter().map(|b| b ^ 1).collect();
        let (ber, bler) = ber_bler(&complement, &reference, 100).unwrap();
        assert_eq!((ber, bler), (1.0, 1.0));
    }

    #[test]
    fn llr_tensor_clips_on_insert() {
        let mut t = LlrTensor::new(1, 1, 4);
        t.set_slot_layer(0, 0, &[100.0, -100.0, 3.0, f64::INFINITY]);
        assert_eq!(t.slot_layer(0, 0), &[LLR_CLIP, -LLR_CLIP, 3.0, LLR_CLIP]);
    }
}
