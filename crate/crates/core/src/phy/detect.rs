//! Effective-channel estimation and LMMSE detection.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::{cinv, C64, CMat};
use crate::phy::grid::{pilot_sequence_index, pilot_symbol_value, ResourceGrid, RxGrid};

/// Estimated effective channel (channel times precoder), indexed
/// `[symbol, subcarrier, rx, layer]`.
#[derive(Debug, Clone)]
pub struct EffChannel {
    pub n_symb: usize,
    pub n_sc: usize,
    pub n_rx: usize,
    pub n_layers: usize,
    pub values: Vec<C64>,
}

impl EffChannel {
    #[inline]
    pub fn idx(&self, l: usize, k: usize, r: usize, v: usize) -> usize {
        ((l * self.n_sc + k) * self.n_rx + r) * self.n_layers + v
    }

    pub fn at(&self, l: usize, k: usize) -> CMat {
        let base = self.idx(l, k, 0, 0);
        CMat::from_rows(
            self.n_rx,
            self.n_layers,
            self.values[base..base + self.n_rx * self.n_layers].to_vec(),
        )
    }
}

/// Least-squares estimation of the effective channel from the Kronecker
/// pilots.
///
/// Within each coherence resource group (a run of `N_s` consecutive
/// subcarriers) the pilot of layer `v` sits alone on subcarrier
/// `k mod N_s == v`, so dividing the received value by the known pilot
/// yields column `v` of the effective channel. The group's matrix is
/// replicated across its subcarriers; data symbols copy the estimate of
/// the nearest pilot symbol in time, with ties resolved toward the
/// earlier one.
pub fn ls_estimate(y: &RxGrid, grid: &ResourceGrid) -> Result<EffChannel> {
    if grid.pilot_symbols.is_empty() {
        return Err(Error::InvalidArgument("grid carries no pilot symbols".into()));
    }
    if y.n_symb != grid.n_symb || y.n_sc != grid.n_sc {
        return Err(Error::ShapeMismatch("received grid does not match the layout".into()));
    }
    let n_sc = grid.n_sc;
    let n_rx = y.n_rx;
    let n_layers = grid.n_layers;
    let mut est = EffChannel {
        n_symb: y.n_symb,
        n_sc,
        n_rx,
        n_layers,
        values: alloc::vec![C64::new(0.0, 0.0); y.n_symb * n_sc * n_rx * n_layers],
    };

    let n_groups = n_sc / n_layers;
    for (pos, &lp) in grid.pilot_symbols.iter().enumerate() {
        for g in 0..n_groups {
            // One matrix per group, assembled column by column.
            let mut cols = alloc::vec![C64::new(0.0, 0.0); n_rx * n_layers];
            for v in 0..n_layers {
                let k = g * n_layers + v;
                let n = pilot_sequence_index(k, pos, n_sc);
                let p = pilot_symbol_value(n);
                // |p| = 1, so the LS estimate is y * conj(p).
                let scale = p.conj() / p.norm_sqr();
                for r in 0..n_rx {
                    cols[r * n_layers + v] = y.values[y.idx(lp, k, r)] * scale;
                }
            }
            // Replicate across the group's subcarriers; trailing
            // subcarriers (when N_s does not divide N_A) reuse the last
            // group's estimate.
            let k_end = if g + 1 == n_groups { n_sc } else { (g + 1) * n_layers };
            for k in g * n_layers..k_end {
                let base = est.idx(lp, k, 0, 0);
                est.values[base..base + n_rx * n_layers].copy_from_slice(&cols);
            }
        }
    }

    // Nearest pilot symbol in time for the data symbols.
    for l in 0..y.n_symb {
        if grid.is_pilot_symbol(l) {
            continue;
        }
        let mut best = grid.pilot_symbols[0];
        let mut best_d = best.abs_diff(l);
        for &lp in &grid.pilot_symbols[1..] {
            let d = lp.abs_diff(l);
            // Strict inequality keeps the earlier pilot on ties.
            if d < best_d {
                best = lp;
                best_d = d;
            }
        }
        let stride = n_sc * n_rx * n_layers;
        let (src, dst) = (best * stride, l * stride);
        let row = est.values[src..src + stride].to_vec();
        est.values[dst..dst + stride].copy_from_slice(&row);
    }
    Ok(est)
}

/// Equalized symbols and the per-layer effective noise variance feeding
/// the soft demapper, each indexed `[symbol, subcarrier, layer]`.
#[derive(Debug, Clone)]
pub struct Equalized {
    pub n_symb: usize,
    pub n_sc: usize,
    pub n_layers: usize,
    pub symbols: Vec<C64>,
    pub noise_var: Vec<f64>,
}

impl Equalized {
    #[inline]
    pub fn idx(&self, l: usize, k: usize, v: usize) -> usize {
        (l * self.n_sc + k) * self.n_layers + v
    }
}

/// LMMSE detection with diagonal normalization.
///
/// Per resource element, with estimate `Hh` and noise power `nv`:
/// `G = (Hh^H Hh + nv I)^-1 Hh^H`, rows rescaled so `W Hh` has a unit
/// diagonal; the reported per-layer variance collects the residual
/// inter-layer interference plus the filtered noise.
pub fn lmmse_detect(y: &RxGrid, heff: &EffChannel, noise_var: f64) -> Result<Equalized> {
    if y.n_symb != heff.n_symb || y.n_sc != heff.n_sc || y.n_rx != heff.n_rx {
        return Err(Error::ShapeMismatch("received grid vs channel estimate".into()));
    }
    if !(noise_var >= 0.0) {
        return Err(Error::InvalidArgument("noise variance must be >= 0".into()));
    }
    let n_layers = heff.n_layers;
    let mut out = Equalized {
        n_symb: y.n_symb,
        n_sc: y.n_sc,
        n_layers,
        symbols: alloc::vec![C64::new(0.0, 0.0); y.n_symb * y.n_sc * n_layers],
        noise_var: alloc::vec![0.0; y.n_symb * y.n_sc * n_layers],
    };
    for l in 0..y.n_symb {
        for k in 0..y.n_sc {
            let h = heff.at(l, k);
            let hh = h.hermitian();
            let gram = hh.matmul(&h);
            let inv = cinv(&gram, noise_var).map_err(|e| {
                Error::Singular(format!("LMMSE at symbol {l} subcarrier {k}: {e}"))
            })?;
            let g = inv.matmul(&hh);
            let gh = g.matmul(&h);
            let yv: Vec<C64> = (0..y.n_rx).map(|r| y.values[y.idx(l, k, r)]).collect();
            let gy = g.matvec(&yv);
            for v in 0..n_layers {
                let d = gh[(v, v)];
                if d.norm_sqr() < 1e-280 {
                    return Err(Error::Singular(format!(
                        "vanishing diagonal for layer {v} at symbol {l} subcarrier {k}"
                    )));
                }
                let i = out.idx(l, k, v);
                out.symbols[i] = gy[v] / d;
                // Residual interference of the unbiased estimate plus
                // filtered noise.
                let mut var = 0.0;
                for j in 0..n_layers {
                    if j != v {
                        var += (gh[(v, j)] / d).norm_sqr();
                    }
                }
                for r in 0..y.n_rx {
                    var += noise_var * (g[(v, r)] / d).norm_sqr();
                }
                out.noise_var[i] = var;
            }
        }
    }
    Ok(out)
}
