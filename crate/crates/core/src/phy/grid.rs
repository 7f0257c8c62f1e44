//! Resource-grid mapping with the Kronecker pilot pattern, and propagation
//! of the precoded grid through the channel.
//!
//! A slot grid spans `n_symb` OFDM symbols by `N_A` active subcarriers by
//! `N_s` layers. Pilot symbols (the set `L`) are fully reserved for
//! reference signals: on those symbols, layer `v` transmits the known
//! QPSK sequence only on subcarriers with `k mod N_s == v` and zero power
//! elsewhere, which keeps the layer pilots orthogonal in frequency within
//! every group of `N_s` consecutive subcarriers (one coherence resource
//! group, CRG). All remaining symbols carry data on every subcarrier.

use alloc::format;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::channel::CfrSlot;
use crate::error::{Error, Result};
use crate::numerics::{C64, RngStream};

/// One slot of layer-mapped constellation symbols plus the pilot layout.
#[derive(Debug, Clone)]
pub struct ResourceGrid {
    pub n_symb: usize,
    pub n_sc: usize,
    pub n_layers: usize,
    /// Pilot OFDM symbol indices, strictly increasing.
    pub pilot_symbols: Vec<usize>,
    /// Symbols indexed `[symbol, subcarrier, layer]`.
    pub symbols: Vec<C64>,
}

impl ResourceGrid {
    #[inline]
    pub fn idx(&self, l: usize, k: usize, v: usize) -> usize {
        (l * self.n_sc + k) * self.n_layers + v
    }

    pub fn is_pilot_symbol(&self, l: usize) -> bool {
        self.pilot_symbols.binary_search(&l).is_ok()
    }

    /// Number of data resource elements (per layer).
    pub fn data_re_count(&self) -> usize {
        (self.n_symb - self.pilot_symbols.len()) * self.n_sc
    }

    /// Number of pilot resource elements.
    pub fn pilot_re_count(&self) -> usize {
        self.pilot_symbols.len() * self.n_sc
    }

    /// Data symbols read back in (symbol, subcarrier, layer) order.
    pub fn data_symbols(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.data_re_count() * self.n_layers);
        for l in 0..self.n_symb {
            if self.is_pilot_symbol(l) {
                continue;
            }
            for k in 0..self.n_sc {
                for v in 0..self.n_layers {
                    out.push(self.symbols[self.idx(l, k, v)]);
                }
            }
        }
        out
    }
}

/// SplitMix64 finalizer used to derive the deterministic pilot sequence.
fn hash64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Known QPSK pilot sequence value `p_n`, unit modulus.
pub fn pilot_symbol_value(n: usize) -> C64 {
    let h = hash64(n as u64 ^ 0x70696c6f74_u64);
    let a = 1.0 / 2f64.sqrt();
    let re = if h & 1 == 0 { a } else { -a };
    let im = if h & 2 == 0 { a } else { -a };
    C64::new(re, im)
}

/// Pilot sequence index for subcarrier `k` on the `i`-th pilot symbol:
/// `n = k + N_A * i`.
pub fn pilot_sequence_index(k: usize, symbol_pos: usize, n_sc: usize) -> usize {
    k + n_sc * symbol_pos
}

/// Assemble one slot grid: pilots per the Kronecker pattern, data filling
/// the remaining symbols in (symbol, subcarrier, layer) order.
pub fn build_grid(
    data_symbols: &[C64],
    n_layers: usize,
    pilot_symbols: &[usize],
    n_symb: usize,
    n_sc: usize,
) -> Result<ResourceGrid> {
    if n_layers == 0 || n_layers > n_sc {
        return Err(Error::InvalidConfig(format!(
            "layer count {n_layers} must be in 1..={n_sc}"
        )));
    }
    let mut pilots = pilot_symbols.to_vec();
    pilots.sort_unstable();
    pilots.dedup();
    if pilots.len() != pilot_symbols.len() {
        return Err(Error::InvalidConfig("duplicate pilot symbols".into()));
    }
    if pilots.iter().any(|&l| l >= n_symb) {
        return Err(Error::InvalidConfig(format!("pilot symbol beyond the {n_symb}-symbol slot")));
    }
    if pilots.is_empty() {
        return Err(Error::InvalidConfig("at least one pilot symbol is required".into()));
    }
    let expected = (n_symb - pilots.len()) * n_sc * n_layers;
    if data_symbols.len() != expected {
        return Err(Error::InvalidArgument(format!(
            "expected {expected} data symbols, got {}",
            data_symbols.len()
        )));
    }

    let mut grid = ResourceGrid {
        n_symb,
        n_sc,
        n_layers,
        pilot_symbols: pilots,
        symbols: alloc::vec![C64::new(0.0, 0.0); n_symb * n_sc * n_layers],
    };
    let mut next = 0usize;
    for l in 0..n_symb {
        if let Ok(pos) = grid.pilot_symbols.binary_search(&l) {
            for k in 0..n_sc {
                let v = k % n_layers;
                let n = pilot_sequence_index(k, pos, n_sc);
                let i = grid.idx(l, k, v);
                grid.symbols[i] = pilot_symbol_value(n);
            }
        } else {
            for k in 0..n_sc {
                for v in 0..n_layers {
                    let i = grid.idx(l, k, v);
                    grid.symbols[i] = data_symbols[next];
                    next += 1;
                }
            }
        }
    }
    Ok(grid)
}

/// Antenna-domain grid after precoding, `[symbol, subcarrier, tx]`.
#[derive(Debug, Clone)]
pub struct TxGrid {
    pub n_symb: usize,
    pub n_sc: usize,
    pub n_tx: usize,
    pub values: Vec<C64>,
}

impl TxGrid {
    #[inline]
    pub fn idx(&self, l: usize, k: usize, t: usize) -> usize {
        (l * self.n_sc + k) * self.n_tx + t
    }
}

/// Received grid, `[symbol, subcarrier, rx]`.
#[derive(Debug, Clone)]
pub struct RxGrid {
    pub n_symb: usize,
    pub n_sc: usize,
    pub n_rx: usize,
    pub values: Vec<C64>,
}

impl RxGrid {
    #[inline]
    pub fn idx(&self, l: usize, k: usize, r: usize) -> usize {
        (l * self.n_sc + k) * self.n_rx + r
    }
}

/// Pass the precoded grid through the channel and add receiver noise of
/// per-entry power `10^(-snr_db/10)`; `snr_db = inf` is noiseless.
pub fn propagate(x: &TxGrid, h: &CfrSlot, snr_db: f64, rng: &mut RngStream) -> Result<RxGrid> {
    if x.n_symb != h.n_symb || x.n_sc != h.n_sc || x.n_tx != h.n_tx {
        return Err(Error::ShapeMismatch(format!(
            "grid {}x{}x{} vs channel {}x{}x{}",
            x.n_symb, x.n_sc, x.n_tx, h.n_symb, h.n_sc, h.n_tx
        )));
    }
    let noise_p = if snr_db.is_infinite() && snr_db > 0.0 {
        0.0
    } else {
        10f64.powf(-snr_db / 10.0)
    };
    let mut y = RxGrid {
        n_symb: x.n_symb,
        n_sc: x.n_sc,
        n_rx: h.n_rx,
        values: alloc::vec![C64::new(0.0, 0.0); x.n_symb * x.n_sc * h.n_rx],
    };
    for l in 0..x.n_symb {
        for k in 0..x.n_sc {
            for r in 0..h.n_rx {
                let mut acc = C64::new(0.0, 0.0);
                for t in 0..x.n_tx {
                    acc += h.values[h.idx(l, k, r, t)] * x.values[x.idx(l, k, t)];
                }
                let i = y.idx(l, k, r);
                y.values[i] = acc;
            }
        }
    }
    if noise_p > 0.0 {
        let noise = crate::numerics::cgauss(y.values.len(), noise_p, rng)?;
        for (v, z) in y.values.iter_mut().zip(&noise) {
            *v += z;
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dummy_data(count: usize) -> Vec<C64> {
        (0..count).map(|i| C64::new(i as f64, -(i as f64))).collect()
    }

    #[test]
    fn pilot_mask_matches_the_reference_checkerboard() {
        // 16 subcarriers, no guards, 2 layers, pilots on symbols 2 and 11:
        // layer 0 occupies even subcarriers of both pilot symbols, layer 1
        // the odd ones, everything else on those symbols is zero.
        let n_symb = 14;
        let n_sc = 16;
        let data = dummy_data((n_symb - 2) * n_sc * 2);
        let grid = build_grid(&data, 2, &[2, 11], n_symb, n_sc).unwrap();
        for &l in &[2usize, 11] {
            for k in 0..n_sc {
                let v_on = k % 2;
                let on = grid.symbols[grid.idx(l, k, v_on)];
                let off = grid.symbols[grid.idx(l, k, 1 - v_on)];
                assert!((on.norm() - 1.0).abs() < 1e-12, "pilot RE must be unit modulus");
                assert_eq!(off, C64::new(0.0, 0.0), "masked RE must be silent");
            }
        }
        // Counts straight from the pattern definition.
        assert_eq!(grid.pilot_re_count(), 2 * n_sc);
        assert_eq!(grid.data_re_count(), 12 * n_sc);
    }

    #[test]
    fn pilot_sequence_index_is_position_major() {
        let n_sc = 16;
        assert_eq!(pilot_sequence_index(3, 0, n_sc), 3);
        assert_eq!(pilot_sequence_index(3, 1, n_sc), 19);
    }

    #[test]
    fn single_layer_occupies_every_pilot_subcarrier() {
        let n_symb = 4;
        let n_sc = 8;
        let data = dummy_data((n_symb - 1) * n_sc);
        let grid = build_grid(&data, 1, &[1], n_symb, n_sc).unwrap();
        for k in 0..n_sc {
            assert!((grid.symbols[grid.idx(1, k, 0)].norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn crg_holds_exactly_n_s_pilot_subcarriers_per_layer_set() {
        let n_symb = 6;
        let n_sc = 12;
        let n_layers = 3;
        let data = dummy_data((n_symb - 1) * n_sc * n_layers);
        let grid = build_grid(&data, n_layers, &[0], n_symb, n_sc).unwrap();
        for g in 0..n_sc / n_layers {
            let mut occupied = 0;
            for k in g * n_layers..(g + 1) * n_layers {
                for v in 0..n_layers {
                    if grid.symbols[grid.idx(0, k, v)].norm() > 0.0 {
                        occupied += 1;
                        assert_eq!(k % n_layers, v);
                    }
                }
            }
            assert_eq!(occupied, n_layers);
        }
    }

    #[test]
    fn layer_pilot_vectors_are_orthogonal_within_a_crg() {
        let n_symb = 3;
        let n_sc = 8;
        let n_layers = 2;
        let data = dummy_data((n_symb - 1) * n_sc * n_layers);
        let grid = build_grid(&data, n_layers, &[0], n_symb, n_sc).unwrap();
        for g in 0..n_sc / n_layers {
            let mut dot = C64::new(0.0, 0.0);
            for k in g * n_layers..(g + 1) * n_layers {
                let a = grid.symbols[grid.idx(0, k, 0)];
                let b = grid.symbols[grid.idx(0, k, 1)];
                dot += a * b.conj();
            }
            assert_eq!(dot, C64::new(0.0, 0.0));
        }
    }

    #[test]
    fn data_roundtrip_preserves_fill_order() {
        let n_symb = 5;
        let n_sc = 6;
        let data = dummy_data((n_symb - 2) * n_sc * 2);
        let grid = build_grid(&data, 2, &[0, 3], n_symb, n_sc).unwrap();
        assert_eq!(grid.data_symbols(), data);
    }

    #[test]
    fn invalid_layouts_are_rejected() {
        assert!(build_grid(&[], 3, &[0], 2, 2).is_err(), "layers beyond subcarriers");
        assert!(build_grid(&[], 1, &[5], 4, 2).is_err(), "pilot out of range");
        assert!(build_grid(&[], 1, &[], 4, 2).is_err(), "no pilots");
        assert!(build_grid(&dummy_data(3), 1, &[0], 4, 2).is_err(), "bad data count");
    }

    #[test]
    fn propagation_identity_and_noise_power() {
        use crate::channel::CfrSlot;
        let n_symb = 2;
        let n_sc = 4;
        let n_ant = 2;
        // Per-RE identity channel.
        let mut h = CfrSlot::zeros(n_symb, n_sc, n_ant, n_ant);
        for l in 0..n_symb {
            for k in 0..n_sc {
                for a in 0..n_ant {
                    let i = h.idx(l, k, a, a);
                    h.values[i] = C64::new(1.0, 0.0);
                }
            }
        }
        let x = TxGrid {
            n_symb,
            n_sc,
            n_tx: n_ant,
            values: dummy_data(n_symb * n_sc * n_ant),
        };
        let mut rng = RngStream::new(8, 0);
        let y = propagate(&x, &h, f64::INFINITY, &mut rng).unwrap();
        assert_eq!(y.values, x.values);

        // Pure noise from a silent grid has the configured power.
        let silent = TxGrid {
            n_symb: 50,
            n_sc: 100,
            n_tx: n_ant,
            values: alloc::vec![C64::new(0.0, 0.0); 50 * 100 * n_ant],
        };
        let mut hbig = CfrSlot::zeros(50, 100, n_ant, n_ant);
        for v in hbig.values.iter_mut() {
            *v = C64::new(0.0, 0.0);
        }
        let snr_db = 7.0;
        let y = propagate(&silent, &hbig, snr_db, &mut rng).unwrap();
        let p = y.values.iter().map(|z| z.norm_sqr()).sum::<f64>() / y.values.len() as f64;
        let want = 10f64.powf(-snr_db / 10.0);
        assert!((p / want - 1.0).abs() < 0.02, "noise power {p} vs {want}");
    }
}
