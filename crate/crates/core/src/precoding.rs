//! Baseline precoders and the precoder interface shared with the neural
//! implementation.

use alloc::format;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::channel::CfrSlot;
use crate::error::{Error, Result};
use crate::numerics::{cinv, C64, CMat};
use crate::phy::{ResourceGrid, TxGrid};

/// Ridge added to the Gram matrix of the zero-forcing pseudo-inverse when
/// nothing else is configured; a numerical floor rather than a tuning
/// knob.
pub const DEFAULT_ZF_RIDGE: f64 = 1e-10;

/// Precoding tensor indexed `[symbol, subcarrier, tx, layer]`; every
/// per-RE column (the beamforming vector of one layer) has unit norm.
#[derive(Debug, Clone)]
pub struct PrecodingTensor {
    pub n_symb: usize,
    pub n_sc: usize,
    pub n_tx: usize,
    pub n_layers: usize,
    pub values: Vec<C64>,
}

impl PrecodingTensor {
    pub fn zeros(n_symb: usize, n_sc: usize, n_tx: usize, n_layers: usize) -> Self {
        PrecodingTensor {
            n_symb,
            n_sc,
            n_tx,
            n_layers,
            values: alloc::vec![C64::new(0.0, 0.0); n_symb * n_sc * n_tx * n_layers],
        }
    }

    #[inline]
    pub fn idx(&self, l: usize, k: usize, t: usize, v: usize) -> usize {
        ((l * self.n_sc + k) * self.n_tx + t) * self.n_layers + v
    }

    /// The `n_tx x n_layers` matrix at one resource element.
    pub fn at(&self, l: usize, k: usize) -> CMat {
        let base = self.idx(l, k, 0, 0);
        CMat::from_rows(
            self.n_tx,
            self.n_layers,
            self.values[base..base + self.n_tx * self.n_layers].to_vec(),
        )
    }

    /// Norm of the layer-`v` beamforming column at one resource element.
    pub fn column_norm(&self, l: usize, k: usize, v: usize) -> f64 {
        (0..self.n_tx)
            .map(|t| self.values[self.idx(l, k, t, v)].norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// Anything that turns one slot of (possibly impaired) CSI into a
/// precoding tensor. Implementations are deterministic in their inputs
/// and internal parameters.
pub trait Precoder {
    fn precode(&self, csi: &CfrSlot) -> Result<PrecodingTensor>;
}

/// Regularized zero-forcing baseline.
#[derive(Debug, Clone)]
pub struct ZfPrecoder {
    pub ridge: f64,
}

impl Default for ZfPrecoder {
    fn default() -> Self {
        ZfPrecoder { ridge: DEFAULT_ZF_RIDGE }
    }
}

impl Precoder for ZfPrecoder {
    fn precode(&self, csi: &CfrSlot) -> Result<PrecodingTensor> {
        zf_precode(csi, self.ridge)
    }
}

/// Per-RE regularized zero-forcing: `V = H^H (H H^H + ridge I)^-1`, then
/// every column rescaled to unit norm. The channel rows must not exceed
/// the transmit antenna count.
pub fn zf_precode(csi: &CfrSlot, ridge: f64) -> Result<PrecodingTensor> {
    if csi.n_rx > csi.n_tx {
        return Err(Error::InvalidArgument(format!(
            "zero forcing needs n_rx <= n_tx, got {}x{}",
            csi.n_rx, csi.n_tx
        )));
    }
    if !(ridge >= 0.0) {
        return Err(Error::InvalidArgument("ridge must be >= 0".into()));
    }
    let mut f = PrecodingTensor::zeros(csi.n_symb, csi.n_sc, csi.n_tx, csi.n_rx);
    for l in 0..csi.n_symb {
        for k in 0..csi.n_sc {
            let h = csi.at(l, k);
            let hh = h.hermitian();
            let gram = h.matmul(&hh);
            let inv = cinv(&gram, ridge).map_err(|e| {
                Error::Singular(format!("ZF at symbol {l} subcarrier {k}: {e}"))
            })?;
            let v = hh.matmul(&inv);
            for col in 0..csi.n_rx {
                let norm = (0..csi.n_tx).map(|t| v[(t, col)].norm_sqr()).sum::<f64>().sqrt();
                if norm < 1e-280 {
                    return Err(Error::Singular(format!(
                        "vanishing beam for layer {col} at symbol {l} subcarrier {k}"
                    )));
                }
                let scale = 1.0 / norm;
                for t in 0..csi.n_tx {
                    let i = f.idx(l, k, t, col);
                    f.values[i] = v[(t, col)] * scale;
                }
            }
        }
    }
    Ok(f)
}

/// Apply the precoder to a layer-mapped grid: per resource element,
/// `x = sum_i F[:, i] * s_i`.
pub fn apply_precoder(grid: &ResourceGrid, f: &PrecodingTensor) -> Result<TxGrid> {
    if grid.n_symb != f.n_symb || grid.n_sc != f.n_sc || grid.n_layers != f.n_layers {
        return Err(Error::ShapeMismatch(format!(
            "grid {}x{}x{} vs precoder {}x{}x{}",
            grid.n_symb, grid.n_sc, grid.n_layers, f.n_symb, f.n_sc, f.n_layers
        )));
    }
    let mut x = TxGrid {
        n_symb: grid.n_symb,
        n_sc: grid.n_sc,
        n_tx: f.n_tx,
        values: alloc::vec![C64::new(0.0, 0.0); grid.n_symb * grid.n_sc * f.n_tx],
    };
    for l in 0..grid.n_symb {
        for k in 0..grid.n_sc {
            for v in 0..grid.n_layers {
                let s = grid.symbols[grid.idx(l, k, v)];
                if s.re == 0.0 && s.im == 0.0 {
                    continue;
                }
                for t in 0..f.n_tx {
                    let i = x.idx(l, k, t);
                    x.values[i] += f.values[f.idx(l, k, t, v)] * s;
                }
            }
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{cgauss, RngStream};
    use crate::phy::build_grid;

    fn random_csi(n_symb: usize, n_sc: usize, n_rx: usize, n_tx: usize, seed: u64) -> CfrSlot {
        let mut rng = RngStream::new(seed, 0);
        CfrSlot {
            n_symb,
            n_sc,
            n_rx,
            n_tx,
            values: cgauss(n_symb * n_sc * n_rx * n_tx, 1.0, &mut rng).unwrap(),
        }
    }

    #[test]
    fn orthonormal_rows_yield_the_hermitian() {
        // H = first two rows of I4: V = H^H, already unit-norm columns.
        let mut csi = CfrSlot::zeros(1, 1, 2, 4);
        let i = csi.idx(0, 0, 0, 0);
        csi.values[i] = C64::new(1.0, 0.0);
        let i = csi.idx(0, 0, 1, 1);
        csi.values[i] = C64::new(1.0, 0.0);
        let f = zf_precode(&csi, 0.0).unwrap();
        let hf = csi.at(0, 0).matmul(&f.at(0, 0));
        for r in 0..2 {
            for c in 0..2 {
                let want = if r == c { 1.0 } else { 0.0 };
                assert!((hf[(r, c)] - C64::new(want, 0.0)).norm() < 1e-12);
            }
        }
        for v in 0..2 {
            assert!((f.column_norm(0, 0, v) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn random_channels_are_diagonalized_with_unit_columns() {
        for seed in 0..200 {
            let csi = random_csi(1, 1, 2, 4, 1000 + seed);
            let f = zf_precode(&csi, DEFAULT_ZF_RIDGE).unwrap();
            let hf = csi.at(0, 0).matmul(&f.at(0, 0));
            for r in 0..2 {
                for c in 0..2 {
                    if r == c {
                        assert!(hf[(r, c)].re > 0.0, "diagonal must be positive real");
                        assert!(hf[(r, c)].im.abs() < 1e-9);
                    } else {
                        assert!(
                            hf[(r, c)].norm() < 1e-9,
                            "interference {} at seed {seed}",
                            hf[(r, c)].norm()
                        );
                    }
                }
            }
            for v in 0..2 {
                assert!((f.column_norm(0, 0, v) - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn scaling_the_channel_leaves_the_precoder_unchanged() {
        let csi = random_csi(2, 3, 2, 4, 7);
        let mut scaled = csi.clone();
        for v in scaled.values.iter_mut() {
            *v *= 3.7;
        }
        let fa = zf_precode(&csi, 0.0).unwrap();
        let fb = zf_precode(&scaled, 0.0).unwrap();
        for (a, b) in fa.values.iter().zip(&fb.values) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn too_many_rx_rows_rejected() {
        let csi = random_csi(1, 1, 4, 2, 3);
        assert!(zf_precode(&csi, 0.0).is_err());
    }

    #[test]
    fn identity_precoder_passes_symbols_through() {
        let n_symb = 3;
        let n_sc = 4;
        let n = 2;
        let mut rng = RngStream::new(9, 0);
        let data = cgauss((n_symb - 1) * n_sc * n, 1.0, &mut rng).unwrap();
        let grid = build_grid(&data, n, &[0], n_symb, n_sc).unwrap();
        let mut f = PrecodingTensor::zeros(n_symb, n_sc, n, n);
        for l in 0..n_symb {
            for k in 0..n_sc {
                for v in 0..n {
                    let i = f.idx(l, k, v, v);
                    f.values[i] = C64::new(1.0, 0.0);
                }
            }
        }
        let x = apply_precoder(&grid, &f).unwrap();
        assert_eq!(x.values, grid.symbols);
    }

    #[test]
    fn single_layer_scales_the_beam() {
        let n_sc = 2;
        let mut rng = RngStream::new(10, 0);
        let data = cgauss(n_sc, 1.0, &mut rng).unwrap();
        let grid = build_grid(&data, 1, &[0], 2, n_sc).unwrap();
        let beam = cgauss(4, 1.0, &mut rng).unwrap();
        let norm = beam.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let mut f = PrecodingTensor::zeros(2, n_sc, 4, 1);
        for l in 0..2 {
            for k in 0..n_sc {
                for t in 0..4 {
                    let i = f.idx(l, k, t, 0);
                    f.values[i] = beam[t] / norm;
                }
            }
        }
        let x = apply_precoder(&grid, &f).unwrap();
        for k in 0..n_sc {
            let s = grid.symbols[grid.idx(1, k, 0)];
            for t in 0..4 {
                let want = beam[t] / norm * s;
                assert!((x.values[x.idx(1, k, t)] - want).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn orthonormal_columns_preserve_energy() {
        // With orthonormal per-RE columns, transmit power equals the sum
        // of the layer symbol powers.
        let n = 2;
        let n_tx = 4;
        let n_sc = 2;
        let mut rng = RngStream::new(11, 0);
        let data = cgauss(n_sc * n, 1.0, &mut rng).unwrap();
        let grid = build_grid(&data, n, &[1], 2, n_sc).unwrap();
        // Columns e0, e1 are orthonormal.
        let mut f = PrecodingTensor::zeros(2, n_sc, n_tx, n);
        for l in 0..2 {
            for k in 0..n_sc {
                for v in 0..n {
                    let i = f.idx(l, k, v, v);
                    f.values[i] = C64::new(1.0, 0.0);
                }
            }
        }
        let x = apply_precoder(&grid, &f).unwrap();
        for l in 0..2 {
            for k in 0..n_sc {
                let tx_p: f64 = (0..n_tx).map(|t| x.values[x.idx(l, k, t)].norm_sqr()).sum();
                let sym_p: f64 =
                    (0..n).map(|v| grid.symbols[grid.idx(l, k, v)].norm_sqr()).sum();
                assert!((tx_p - sym_p).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn determinism_of_the_precoder_interface() {
        let csi = random_csi(2, 4, 2, 4, 21);
        let p = ZfPrecoder::default();
        let a = p.precode(&csi).unwrap();
        let b = p.precode(&csi).unwrap();
        assert_eq!(a.values, b.values);
    }
}
