//! Informational floating-point operation estimates per layer, following
//! the usual dense-convolution cost expressions, plus the per-RE cost of
//! the zero-forcing baseline for comparison.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::neural::compensator::CompensatorConfig;
use crate::neural::precoder::PrecoderConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerFlops {
    pub name: String,
    pub flops: f64,
}

/// Grid extent the estimates are instantiated on.
#[derive(Debug, Clone, Copy)]
pub struct GridDims {
    pub n_symb: usize,
    pub n_sc: usize,
    pub n_rx: usize,
    pub n_tx: usize,
}

impl GridDims {
    fn spatial(&self) -> f64 {
        (self.n_symb * self.n_sc * self.n_rx * self.n_tx) as f64
    }
}

/// Per-layer estimates for the compensator: `f^2 k^2` per input position
/// for each 2D convolution.
pub fn compensator_flops(cfg: &CompensatorConfig, dims: GridDims) -> Vec<LayerFlops> {
    let s = dims.spatial();
    let sq = |f: usize, k: usize| (f * f * k * k) as f64 * s;
    let mut out = alloc::vec![LayerFlops {
        name: "input".into(),
        flops: sq(cfg.f_input, cfg.k_input),
    }];
    out.push(LayerFlops {
        name: format!("residual_blocks[{}]", cfg.n_res_blocks),
        flops: cfg.n_res_blocks as f64 * sq(cfg.f_block, cfg.k_block),
    });
    out.push(LayerFlops { name: "output".into(), flops: sq(2, cfg.k_output) });
    out
}

/// Per-layer estimates for the precoder: `f k^3` per voxel for each 3D
/// convolution plus the transform pair.
pub fn precoder_flops(cfg: &PrecoderConfig, dims: GridDims) -> Vec<LayerFlops> {
    let s = dims.spatial();
    let vol = |f: usize, k: usize| (f * k * k * k) as f64 * s;
    let fft = 2.0
        * (dims.n_sc * dims.n_tx) as f64
        * (dims.n_sc as f64).ln().max(1.0)
        * (dims.n_tx as f64).ln().max(1.0);
    alloc::vec![
        LayerFlops { name: "input".into(), flops: vol(cfg.f_input, cfg.k_input) },
        LayerFlops {
            name: format!("hidden[{}]", cfg.n_hidden),
            flops: cfg.n_hidden as f64 * vol(cfg.f_hidden, cfg.k_hidden),
        },
        LayerFlops { name: "output".into(), flops: vol(2, cfg.k_output) },
        LayerFlops { name: "fft_pair".into(), flops: fft },
    ]
}

/// Zero-forcing baseline: one Gram matrix and inverse per resource
/// element.
pub fn zf_baseline_flops(dims: GridDims) -> LayerFlops {
    LayerFlops {
        name: "zf_baseline".into(),
        flops: (dims.n_sc * dims.n_symb * dims.n_rx * dims.n_rx * dims.n_tx) as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DIMS: GridDims = GridDims { n_symb: 14, n_sc: 21, n_rx: 2, n_tx: 8 };

    #[test]
    fn residual_block_cost_is_linear_in_depth() {
        let mut cfg = CompensatorConfig::paper();
        let single = compensator_flops(&cfg, DIMS)[1].flops / cfg.n_res_blocks as f64;
        cfg.n_res_blocks = 10;
        let ten = compensator_flops(&cfg, DIMS)[1].flops;
        assert!((ten - 10.0 * single).abs() < 1e-6);
    }

    #[test]
    fn full_scale_block_cost_matches_the_quoted_expression() {
        let cfg = CompensatorConfig::paper();
        let got = compensator_flops(&cfg, DIMS)[1].flops;
        let want = 5.0 * 96.0 * 96.0 * 9.0 * 9.0 * DIMS.spatial();
        assert_eq!(got, want);
    }

    #[test]
    fn unit_layer_equals_tensor_numel() {
        let cfg = CompensatorConfig {
            n_res_blocks: 1,
            f_input: 1,
            k_input: 1,
            f_block: 1,
            k_block: 1,
            k_output: 1,
        };
        let got = compensator_flops(&cfg, DIMS)[0].flops;
        assert_eq!(got, DIMS.spatial());
    }

    #[test]
    fn precoder_layers_present() {
        let cfg = PrecoderConfig::paper();
        let layers = precoder_flops(&cfg, DIMS);
        assert_eq!(layers.len(), 4);
        assert!(layers.iter().all(|l| l.flops > 0.0));
        assert!(zf_baseline_flops(DIMS).flops > 0.0);
    }
}
