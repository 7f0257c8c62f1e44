//! Weight initializers. Convolution weights use the layout
//! `(kernel dims..., cin, f)`, so fan-in/out fall out of the shape.

use crate::autodiff::Tensor;
use crate::numerics::RngStream;
#[allow(unused_imports)]
use num_traits::Float;

fn uniform_tensor(shape: &[usize], limit: f64, rng: &mut RngStream) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform_in(-limit, limit)).collect();
    Tensor::from_vec(shape, data).expect("init shape")
}

/// He-uniform: for layers feeding a ReLU.
pub fn he_uniform(shape: &[usize], rng: &mut RngStream) -> Tensor {
    let f = *shape.last().expect("weight shape");
    let fan_in = shape.iter().product::<usize>() / f;
    uniform_tensor(shape, (6.0 / fan_in as f64).sqrt(), rng)
}

/// Glorot-uniform: for linear layers.
pub fn glorot_uniform(shape: &[usize], rng: &mut RngStream) -> Tensor {
    let f = *shape.last().expect("weight shape");
    let cin = shape[shape.len() - 2];
    let numel: usize = shape.iter().product();
    let fan_in = numel / f;
    let fan_out = numel / cin;
    uniform_tensor(shape, (6.0 / (fan_in + fan_out) as f64).sqrt(), rng)
}

pub fn ones(shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, alloc::vec![1.0; n]).expect("init shape")
}
