//! Minimal reverse-mode automatic differentiation.
//!
//! The tape records the exact operation set the neural compensator and
//! precoder need: 2D/3D same-padding convolutions with optional ReLU,
//! batch normalization, residual additions, and a differentiable complex
//! path (matrix products, inverses, FFTs, demapping, the bit-metric
//! decoding loss) so a loss taken at the end of the receive chain
//! backpropagates into the precoder parameters. Complex values ride as
//! trailing (re, im) channel pairs; gradients of real losses computed this
//! way match the complex-calculus ones.

mod conv;
mod params;
mod tape;
mod tensor;

pub use params::{adam_step, Optimizer, Param, ParamSet};
pub use tape::{Activation, BatchStats, DiffTensor, Tape};
pub use tensor::Tensor;

/// Momentum of the running batch-norm statistics:
/// `running = MOMENTUM * running + (1 - MOMENTUM) * batch`.
pub const BN_MOMENTUM: f64 = 0.99;
