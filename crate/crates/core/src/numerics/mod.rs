//! Complex linear algebra, FFTs and reproducible random sampling.

mod cmat;
mod fft;
mod rng;

pub use cmat::{cinv, CMat};
pub use fft::{fft1, fft2_shift};
pub use rng::{cgauss, RngStream};

/// Double-precision complex scalar used throughout the simulator.
pub type C64 = num_complex::Complex<f64>;
