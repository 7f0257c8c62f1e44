//! Named parameter sets with Adam/SGD optimizer state.

use alloc::string::String;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    /// First/second moment estimates; allocated only for trainable params.
    m: Tensor,
    v: Tensor,
    pub trainable: bool,
}

/// Which optimizer `step` applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    Adam,
    Sgd,
}

/// Named parameters in insertion order, plus optimizer state. Names are
/// unique and shapes never change after registration.
#[derive(Debug, Clone)]
pub struct ParamSet {
    params: Vec<Param>,
    step_count: u64,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet { params: Vec::new(), step_count: 0 }
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> Result<()> {
        self.add_with(name, value, true)
    }

    /// Register a non-trainable buffer (running statistics and the like);
    /// saved with the model but never touched by the optimizer.
    pub fn add_buffer(&mut self, name: &str, value: Tensor) -> Result<()> {
        self.add_with(name, value, false)
    }

    fn add_with(&mut self, name: &str, value: Tensor, trainable: bool) -> Result<()> {
        if self.params.iter().any(|p| p.name == name) {
            return Err(Error::InvalidArgument(alloc::format!("duplicate parameter {name}")));
        }
        let shape = value.shape().to_vec();
        self.params.push(Param {
            name: name.into(),
            grad: Tensor::zeros(&shape),
            m: Tensor::zeros(if trainable { &shape } else { &[] }),
            v: Tensor::zeros(if trainable { &shape } else { &[] }),
            value,
            trainable,
        });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.params
            .iter()
            .find(|p| p.name == name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::InvalidArgument(alloc::format!("unknown parameter {name}")))
    }

    pub fn set_value(&mut self, name: &str, value: Tensor) -> Result<()> {
        let p = self
            .params
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::InvalidArgument(alloc::format!("unknown parameter {name}")))?;
        if p.value.shape() != value.shape() {
            return Err(Error::ShapeMismatch(alloc::format!(
                "parameter {name} has shape {:?}, got {:?}",
                p.value.shape(),
                value.shape()
            )));
        }
        p.value = value;
        Ok(())
    }

    pub fn accumulate_grad(&mut self, name: &str, grad: &Tensor) -> Result<()> {
        let p = self
            .params
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::InvalidArgument(alloc::format!("unknown parameter {name}")))?;
        if p.grad.shape() != grad.shape() {
            return Err(Error::ShapeMismatch(alloc::format!("gradient shape for {name}")));
        }
        for (g, &d) in p.grad.data_mut().iter_mut().zip(grad.data()) {
            *g += d;
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Round every value to f32 precision, matching what a checkpoint
    /// stores, so a saved-and-reloaded model reproduces this one exactly.
    pub fn quantize_to_f32(&mut self) {
        for p in &mut self.params {
            for v in p.value.data_mut() {
                *v = *v as f32 as f64;
            }
        }
    }

    /// One optimizer step over all trainable parameters; gradients are
    /// zeroed afterwards. A non-finite gradient aborts with the offending
    /// parameter named.
    pub fn step(&mut self, optimizer: Optimizer, lr: f64) -> Result<()> {
        for p in &self.params {
            if p.trainable && !p.grad.is_finite() {
                return Err(Error::NonFinite(alloc::format!(
                    "gradient of {} is not finite",
                    p.name
                )));
            }
        }
        self.step_count += 1;
        let t = self.step_count;
        for p in &mut self.params {
            if !p.trainable {
                continue;
            }
            match optimizer {
                Optimizer::Adam => {
                    let bc1 = 1.0 - BETA1.powi(t as i32);
                    let bc2 = 1.0 - BETA2.powi(t as i32);
                    for i in 0..p.value.numel() {
                        let g = p.grad.data()[i];
                        let m = BETA1 * p.m.data()[i] + (1.0 - BETA1) * g;
                        let v = BETA2 * p.v.data()[i] + (1.0 - BETA2) * g * g;
                        p.m.data_mut()[i] = m;
                        p.v.data_mut()[i] = v;
                        let update = lr * (m / bc1) / ((v / bc2).sqrt() + ADAM_EPS);
                        p.value.data_mut()[i] -= update;
                    }
                }
                Optimizer::Sgd => {
                    for i in 0..p.value.numel() {
                        let g = p.grad.data()[i];
                        p.value.data_mut()[i] -= lr * g;
                    }
                }
            }
        }
        self.zero_grads();
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            for g in p.grad.data_mut() {
                *g = 0.0;
            }
        }
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

/// Convenience wrapper matching the common call shape.
pub fn adam_step(params: &mut ParamSet, lr: f64) -> Result<()> {
    params.step(Optimizer::Adam, lr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut p = ParamSet::new();
        p.add("w", Tensor::zeros(&[2])).unwrap();
        assert!(p.add("w", Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut p = ParamSet::new();
        p.add("w", Tensor::from_vec(&[3], alloc::vec![1.0, -2.0, 0.5]).unwrap()).unwrap();
        let before = p.get("w").unwrap().clone();
        for _ in 0..5 {
            adam_step(&mut p, 0.01).unwrap();
        }
        assert_eq!(&before, p.get("w").unwrap());
    }

    #[test]
    fn quadratic_converges() {
        // Minimize (theta - 3)^2 by feeding the analytic gradient.
        let mut p = ParamSet::new();
        p.add("theta", Tensor::scalar(0.0)).unwrap();
        for _ in 0..2000 {
            let theta = p.get("theta").unwrap().data()[0];
            let grad = Tensor::scalar(2.0 * (theta - 3.0));
            p.accumulate_grad("theta", &grad).unwrap();
            adam_step(&mut p, 0.01).unwrap();
        }
        let theta = p.get("theta").unwrap().data()[0];
        assert!((theta - 3.0).abs() < 1e-3, "theta = {theta}");
    }

    #[test]
    fn identical_seeds_give_identical_trajectories() {
        let run = || {
            let mut p = ParamSet::new();
            p.add("w", Tensor::from_vec(&[2], alloc::vec![0.3, -0.7]).unwrap()).unwrap();
            let mut rng = crate::numerics::RngStream::new(5, 0);
            for _ in 0..100 {
                let g = Tensor::from_vec(
                    &[2],
                    alloc::vec![rng.normal_pair().0, rng.normal_pair().1],
                )
                .unwrap();
                p.accumulate_grad("w", &g).unwrap();
                adam_step(&mut p, 0.001).unwrap();
            }
            p.get("w").unwrap().data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn nan_gradient_aborts_with_name() {
        let mut p = ParamSet::new();
        p.add("w", Tensor::zeros(&[1])).unwrap();
        p.accumulate_grad("w", &Tensor::scalar(f64::NAN)).unwrap();
        let err = adam_step(&mut p, 0.1).unwrap_err();
        assert!(matches!(err, Error::NonFinite(ref m) if m.contains('w')));
    }

    #[test]
    fn buffers_are_not_optimized() {
        let mut p = ParamSet::new();
        p.add_buffer("stats", Tensor::from_vec(&[2], alloc::vec![1.0, 2.0]).unwrap()).unwrap();
        p.accumulate_grad("stats", &Tensor::from_vec(&[2], alloc::vec![9.0, 9.0]).unwrap())
            .unwrap();
        adam_step(&mut p, 0.1).unwrap();
        assert_eq!(p.get("stats").unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn sgd_applies_plain_updates() {
        let mut p = ParamSet::new();
        p.add("w", Tensor::scalar(1.0)).unwrap();
        p.accumulate_grad("w", &Tensor::scalar(0.5)).unwrap();
        p.step(Optimizer::Sgd, 0.1).unwrap();
        assert!((p.get("w").unwrap().data()[0] - 0.95).abs() < 1e-15);
    }
}
