//! Transmit/receive chain: bit source to decoded bits.
//!
//! The chain operates per resource element in the frequency domain: LDPC
//! encoding, Gray QAM mapping, resource-grid mapping with Kronecker
//! pilots, propagation through the channel, LS estimation of the effective
//! channel, LMMSE detection, max-log soft demapping and flooding
//! sum-product decoding.

mod detect;
mod grid;
mod ldpc;
mod metrics;
mod qam;

pub use detect::{lmmse_detect, ls_estimate, EffChannel, Equalized};
pub use grid::{build_grid, pilot_symbol_value, propagate, ResourceGrid, RxGrid, TxGrid};
pub use ldpc::{ldpc_encode, spa_decode, LdpcCode};
pub use metrics::{bce, ber_bler, bmd_rate, LlrTensor, LLR_CLIP};
pub use qam::{bits_per_symbol, qam_map, soft_demap};
pub(crate) use qam::axis_amp_table;
