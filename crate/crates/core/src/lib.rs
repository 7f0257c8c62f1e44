//! Link-level wideband MIMO-OFDM simulation and neural precoding.
//!
//! The crate models a downlink between a multi-antenna base station and a
//! multi-antenna user terminal, with explicit CSI acquisition impairments
//! (aging and estimation/compression noise), the classical baseline chain
//! (regularized ZF precoding, Kronecker pilots, LS channel estimation,
//! LMMSE detection, LDPC sum-product decoding) and two trainable neural
//! models: a denoising CNN that compensates CSI impairments and a 3D-CNN
//! wideband precoder. A small reverse-mode autodiff engine backs the
//! training loops.
//!
//! The crate is `no_std` (with `alloc`); all file and terminal I/O lives in
//! the companion CLI crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod neural;
pub mod channel;
pub mod csi;
pub mod error;
pub mod numerics;
pub mod phy;
pub mod precoding;

pub use error::{Error, Result};
pub use numerics::{C64, CMat, RngStream};
