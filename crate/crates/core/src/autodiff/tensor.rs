//! Dense real tensors backing the autodiff tape.
//!
//! Complex quantities are carried as a trailing channel pair `(re, im)`.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Row-major dense tensor of f64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: alloc::vec![0.0; n] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(alloc::format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { shape: alloc::vec![1], data: alloc::vec![v] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn reshaped(&self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::ShapeMismatch(alloc::format!(
                "cannot view {} values as {shape:?}",
                self.data.len()
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data: self.data.clone() })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Interpret a `(..., 2)` tensor as complex values.
    pub fn as_complex(&self) -> Result<Vec<crate::numerics::C64>> {
        if self.shape.last() != Some(&2) {
            return Err(Error::ShapeMismatch("complex tensors end in a channel pair".into()));
        }
        Ok(self
            .data
            .chunks_exact(2)
            .map(|p| crate::numerics::C64::new(p[0], p[1]))
            .collect())
    }

    /// Pack complex values into a `(..., 2)` tensor with the given leading
    /// shape.
    pub fn from_complex(leading: &[usize], values: &[crate::numerics::C64]) -> Result<Tensor> {
        let n: usize = leading.iter().product();
        if n != values.len() {
            return Err(Error::ShapeMismatch("complex payload does not fill the shape".into()));
        }
        let mut shape = leading.to_vec();
        shape.push(2);
        let mut data = Vec::with_capacity(values.len() * 2);
        for z in values {
            data.push(z.re);
            data.push(z.im);
        }
        Ok(Tensor { shape, data })
    }
}
