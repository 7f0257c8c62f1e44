//! Reverse-mode tape covering exactly the operation set the two neural
//! models need, including a differentiable complex path (matmul, inverse,
//! FFT) for the end-to-end precoder loss.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::autodiff::conv;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::numerics::C64;
use crate::phy::LLR_CLIP;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiffTensor {
    id: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    None,
    Relu,
}

enum Op {
    Leaf,
    Conv2d { x: usize, w: usize, b: usize, relu: bool },
    Conv3d { x: usize, w: usize, b: usize, relu: bool },
    BatchNorm { x: usize, gamma: usize, beta: usize, mean: Vec<f64>, var: Vec<f64> },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Reshape { x: usize },
    CplxMatmul { a: usize, b: usize, batch: usize, n: usize, k: usize, m: usize },
    CplxHermitian { x: usize, batch: usize, n: usize, m: usize },
    CplxInverse { x: usize, batch: usize, n: usize },
    CplxDiag { x: usize, batch: usize, n: usize },
    CplxDivElem { a: usize, b: usize },
    CplxAbs2 { x: usize },
    CplxFft2Shift { x: usize, batch: usize, rows: usize, cols: usize, inner: usize, shift: usize, inverse: bool },
    NormalizeColumns { x: usize, batch: usize, t: usize, s: usize },
    MaxlogLlr { x: usize, vars: Vec<f64>, m: usize },
    BmdBce { llrs: usize, bits: Vec<u8> },
    Mse { a: usize, b: usize },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::Conv3d { .. } => "conv3d",
            Op::BatchNorm { .. } => "batchnorm",
            Op::Add { .. } => "add",
            Op::Sub { .. } => "sub",
            Op::Reshape { .. } => "reshape",
            Op::CplxMatmul { .. } => "cplx_matmul",
            Op::CplxHermitian { .. } => "cplx_hermitian",
            Op::CplxInverse { .. } => "cplx_inverse",
            Op::CplxDiag { .. } => "cplx_diag",
            Op::CplxDivElem { .. } => "cplx_div_elem",
            Op::CplxAbs2 { .. } => "cplx_abs2",
            Op::CplxFft2Shift { .. } => "cplx_fft2_shift",
            Op::NormalizeColumns { .. } => "normalize_columns",
            Op::MaxlogLlr { .. } => "maxlog_llr",
            Op::BmdBce { .. } => "bmd_bce",
            Op::Mse { .. } => "mse",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Batch statistics returned by a training-mode batch norm, for updating
/// running averages.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Single-owner computation tape; build the graph forward, then call
/// `backward` on a scalar loss.
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), grads: Vec::new() }
    }

    fn push(&mut self, value: Tensor, op: Op) -> DiffTensor {
        self.nodes.push(Node { value, op });
        self.grads.push(None);
        DiffTensor { id: self.nodes.len() - 1 }
    }

    pub fn leaf(&mut self, value: Tensor) -> DiffTensor {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, h: DiffTensor) -> &Tensor {
        &self.nodes[h.id].value
    }

    pub fn grad(&self, h: DiffTensor) -> Option<&Tensor> {
        self.grads[h.id].as_ref()
    }

    pub fn shape(&self, h: DiffTensor) -> &[usize] {
        self.nodes[h.id].value.shape()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// First node holding a non-finite value, with its op name; the
    /// training loops use this to say where a blow-up started.
    pub fn first_non_finite(&self) -> Option<(usize, &'static str)> {
        self.nodes
            .iter()
            .enumerate()
            .find(|(_, n)| !n.value.is_finite())
            .map(|(i, n)| (i, n.op.name()))
    }

    // ----- elementwise and shape ops -----

    pub fn add(&mut self, a: DiffTensor, b: DiffTensor) -> Result<DiffTensor> {
        self.same_shape(a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let t = Tensor::from_vec(self.shape(a), data)?;
        Ok(self.push(t, Op::Add { a: a.id, b: b.id }))
    }

    pub fn sub(&mut self, a: DiffTensor, b: DiffTensor) -> Result<DiffTensor> {
        self.same_shape(a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x - y)
            .collect();
        let t = Tensor::from_vec(self.shape(a), data)?;
        Ok(self.push(t, Op::Sub { a: a.id, b: b.id }))
    }

    pub fn reshape(&mut self, x: DiffTensor, shape: &[usize]) -> Result<DiffTensor> {
        let t = self.value(x).reshaped(shape)?;
        Ok(self.push(t, Op::Reshape { x: x.id }))
    }

    pub fn mse(&mut self, a: DiffTensor, b: DiffTensor) -> Result<DiffTensor> {
        self.same_shape(a, b)?;
        let n = self.value(a).numel() as f64;
        let sum: f64 = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        Ok(self.push(Tensor::scalar(sum / n), Op::Mse { a: a.id, b: b.id }))
    }

    fn same_shape(&self, a: DiffTensor, b: DiffTensor) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch(alloc::format!(
                "{:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    // ----- convolutions -----

    pub fn conv2d(
        &mut self,
        x: DiffTensor,
        w: DiffTensor,
        b: DiffTensor,
        act: Activation,
    ) -> Result<DiffTensor> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 4 || ws.len() != 4 {
            return Err(Error::ShapeMismatch("conv2d wants (N,H,W,C) and (kh,kw,C,F)".into()));
        }
        let (n, h, wd, cin) = (xs[0], xs[1], xs[2], xs[3]);
        let (kh, kw, wc, f) = (ws[0], ws[1], ws[2], ws[3]);
        if wc != cin || self.shape(b) != [f] {
            return Err(Error::ShapeMismatch("conv2d channel/filter mismatch".into()));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::InvalidArgument("same padding needs odd kernels".into()));
        }
        let relu = act == Activation::Relu;
        let out = conv::conv2d_forward(
            self.value(x).data(),
            n,
            h,
            wd,
            cin,
            self.value(w).data(),
            kh,
            kw,
            f,
            self.value(b).data(),
            relu,
        );
        let t = Tensor::from_vec(&[n, h, wd, f], out)?;
        Ok(self.push(t, Op::Conv2d { x: x.id, w: w.id, b: b.id, relu }))
    }

    pub fn conv3d(
        &mut self,
        x: DiffTensor,
        w: DiffTensor,
        b: DiffTensor,
        act: Activation,
    ) -> Result<DiffTensor> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 5 || ws.len() != 5 {
            return Err(Error::ShapeMismatch("conv3d wants (N,D,H,W,C) and (kd,kh,kw,C,F)".into()));
        }
        let (n, d, h, wd, cin) = (xs[0], xs[1], xs[2], xs[3], xs[4]);
        let (kd, kh, kw, wc, f) = (ws[0], ws[1], ws[2], ws[3], ws[4]);
        if wc != cin || self.shape(b) != [f] {
            return Err(Error::ShapeMismatch("conv3d channel/filter mismatch".into()));
        }
        if kd % 2 == 0 || kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::InvalidArgument("same padding needs odd kernels".into()));
        }
        let relu = act == Activation::Relu;
        let out = conv::conv3d_forward(
            self.value(x).data(),
            n,
            d,
            h,
            wd,
            cin,
            self.value(w).data(),
            kd,
            kh,
            kw,
            f,
            self.value(b).data(),
            relu,
        );
        let t = Tensor::from_vec(&[n, d, h, wd, f], out)?;
        Ok(self.push(t, Op::Conv3d { x: x.id, w: w.id, b: b.id, relu }))
    }

    // ----- batch normalization -----

    /// Training mode: normalize per channel (last axis) over everything
    /// else with eps 1e-5; returns the batch statistics for the caller's
    /// running averages.
    pub fn batchnorm_train(
        &mut self,
        x: DiffTensor,
        gamma: DiffTensor,
        beta: DiffTensor,
    ) -> Result<(DiffTensor, BatchStats)> {
        let (mean, var) = self.batch_stats(x, gamma, beta)?;
        let out = self.batchnorm_with(x, gamma, beta, &mean, &var)?;
        Ok((out, BatchStats { mean, var }))
    }

    /// Evaluation mode: normalize with frozen running statistics.
    pub fn batchnorm_eval(
        &mut self,
        x: DiffTensor,
        gamma: DiffTensor,
        beta: DiffTensor,
        running_mean: &[f64],
        running_var: &[f64],
    ) -> Result<DiffTensor> {
        let c = *self.shape(x).last().unwrap_or(&0);
        if running_mean.len() != c || running_var.len() != c {
            return Err(Error::ShapeMismatch("running stats must match channels".into()));
        }
        self.batchnorm_with(x, gamma, beta, running_mean, running_var)
    }

    fn batch_stats(
        &self,
        x: DiffTensor,
        gamma: DiffTensor,
        beta: DiffTensor,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let shape = self.shape(x);
        let c = *shape.last().ok_or_else(|| Error::ShapeMismatch("empty shape".into()))?;
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::ShapeMismatch("gamma/beta must be per channel".into()));
        }
        let numel = self.value(x).numel();
        if numel == 0 || numel == c && shape.len() == 1 {
            return Err(Error::InvalidArgument("batchnorm needs a batch".into()));
        }
        let rows = numel / c;
        let data = self.value(x).data();
        let mut mean = alloc::vec![0.0; c];
        for row in data.chunks_exact(c) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= rows as f64;
        }
        let mut var = alloc::vec![0.0; c];
        for row in data.chunks_exact(c) {
            for (j, &v) in row.iter().enumerate() {
                let d = v - mean[j];
                var[j] += d * d;
            }
        }
        for v in &mut var {
            *v /= rows as f64;
        }
        Ok((mean, var))
    }

    fn batchnorm_with(
        &mut self,
        x: DiffTensor,
        gamma: DiffTensor,
        beta: DiffTensor,
        mean: &[f64],
        var: &[f64],
    ) -> Result<DiffTensor> {
        let c = *self.shape(x).last().unwrap();
        let g = self.value(gamma).data().to_vec();
        let bta = self.value(beta).data().to_vec();
        let mut out = Vec::with_capacity(self.value(x).numel());
        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + BN_EPS).sqrt()).collect();
        for row in self.value(x).data().chunks_exact(c) {
            for (j, &v) in row.iter().enumerate() {
                out.push(g[j] * (v - mean[j]) * inv_std[j] + bta[j]);
            }
        }
        let t = Tensor::from_vec(self.shape(x), out)?;
        Ok(self.push(
            t,
            Op::BatchNorm {
                x: x.id,
                gamma: gamma.id,
                beta: beta.id,
                mean: mean.to_vec(),
                var: var.to_vec(),
            },
        ))
    }

    // ----- complex ops over (re, im) channel pairs -----

    /// Split a complex-pair shape into (leading batch, n, m).
    fn cplx_matrix_dims(&self, x: DiffTensor) -> Result<(usize, usize, usize)> {
        let s = self.shape(x);
        if s.len() < 3 || *s.last().unwrap() != 2 {
            return Err(Error::ShapeMismatch("expected (..., n, m, 2)".into()));
        }
        let m = s[s.len() - 2];
        let n = s[s.len() - 3];
        let batch = s[..s.len() - 3].iter().product::<usize>().max(1);
        Ok((batch, n, m))
    }

    /// Batched complex matrix product `(..., n, k, 2) x (..., k, m, 2)`.
    pub fn cplx_matmul(&mut self, a: DiffTensor, b: DiffTensor) -> Result<DiffTensor> {
        let (ba, n, ka) = self.cplx_matrix_dims(a)?;
        let (bb, kb, m) = self.cplx_matrix_dims(b)?;
        if ba != bb || ka != kb {
            return Err(Error::ShapeMismatch(alloc::format!(
                "matmul {:?} x {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = alloc::vec![0.0; ba * n * m * 2];
        for i in 0..ba {
            cplx_mm(
                &av[i * n * ka * 2..(i + 1) * n * ka * 2],
                &bv[i * ka * m * 2..(i + 1) * ka * m * 2],
                &mut out[i * n * m * 2..(i + 1) * n * m * 2],
                n,
                ka,
                m,
            );
        }
        let mut shape = self.shape(a)[..self.shape(a).len() - 3].to_vec();
        shape.extend([n, m, 2]);
        let t = Tensor::from_vec(&shape, out)?;
        Ok(self.push(t, Op::CplxMatmul { a: a.id, b: b.id, batch: ba, n, k: ka, m }))
    }

    /// Batched conjugate transpose on the trailing matrix axes.
    pub fn cplx_hermitian(&mut self, x: DiffTensor) -> Result<DiffTensor> {
        let (batch, n, m) = self.cplx_matrix_dims(x)?;
        let xv = self.value(x).data();
        let mut out = alloc::vec![0.0; xv.len()];
        hermitian_into(xv, &mut out, batch, n, m);
        let mut shape = self.shape(x)[..self.shape(x).len() - 3].to_vec();
        shape.extend([m, n, 2]);
        let t = Tensor::from_vec(&shape, out)?;
        Ok(self.push(t, Op::CplxHermitian { x: x.id, batch, n, m }))
    }

    /// Batched `(X + ridge I)^-1` on the trailing square matrix axes.
    pub fn cplx_inverse(&mut self, x: DiffTensor, ridge: f64) -> Result<DiffTensor> {
        let (batch, n, m) = self.cplx_matrix_dims(x)?;
        if n != m {
            return Err(Error::ShapeMismatch("inverse needs square matrices".into()));
        }
        let xv = self.value(x).data();
        let mut out = alloc::vec![0.0; xv.len()];
        for i in 0..batch {
            let src = &xv[i * n * n * 2..(i + 1) * n * n * 2];
            let mut mat = crate::numerics::CMat::zeros(n, n);
            for r in 0..n {
                for c in 0..n {
                    mat[(r, c)] = C64::new(src[(r * n + c) * 2], src[(r * n + c) * 2 + 1]);
                }
            }
            let inv = crate::numerics::cinv(&mat, ridge)?;
            let dst = &mut out[i * n * n * 2..(i + 1) * n * n * 2];
            for r in 0..n {
                for c in 0..n {
                    dst[(r * n + c) * 2] = inv[(r, c)].re;
                    dst[(r * n + c) * 2 + 1] = inv[(r, c)].im;
                }
            }
        }
        let t = Tensor::from_vec(self.shape(x), out)?;
        Ok(self.push(t, Op::CplxInverse { x: x.id, batch, n }))
    }

    /// Diagonal of the trailing square matrix axes: `(..., n, n, 2)` to
    /// `(..., n, 2)`.
    pub fn cplx_diag(&mut self, x: DiffTensor) -> Result<DiffTensor> {
        let (batch, n, m) = self.cplx_matrix_dims(x)?;
        if n != m {
            return Err(Error::ShapeMismatch("diag needs square matrices".into()));
        }
        let xv = self.value(x).data();
        let mut out = alloc::vec![0.0; batch * n * 2];
        for i in 0..batch {
            for d in 0..n {
                let s = (i * n * n + d * n + d) * 2;
                out[(i * n + d) * 2] = xv[s];
                out[(i * n + d) * 2 + 1] = xv[s + 1];
            }
        }
        let mut shape = self.shape(x)[..self.shape(x).len() - 3].to_vec();
        shape.extend([n, 2]);
        let t = Tensor::from_vec(&shape, out)?;
        Ok(self.push(t, Op::CplxDiag { x: x.id, batch, n }))
    }

    /// Elementwise complex division of same-shaped `(..., 2)` tensors.
    pub fn cplx_div_elem(&mut self, a: DiffTensor, b: DiffTensor) -> Result<DiffTensor> {
        self.same_shape(a, b)?;
        if self.shape(a).last() != Some(&2) {
            return Err(Error::ShapeMismatch("complex pair axis required".into()));
        }
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = alloc::vec![0.0; av.len()];
        for i in (0..av.len()).step_by(2) {
            let x = C64::new(av[i], av[i + 1]);
            let y = C64::new(bv[i], bv[i + 1]);
            let z = x / y;
            out[i] = z.re;
            out[i + 1] = z.im;
        }
        let t = Tensor::from_vec(self.shape(a), out)?;
        Ok(self.push(t, Op::CplxDivElem { a: a.id, b: b.id }))
    }

    /// Squared magnitude per complex entry: `(..., 2)` to `(...)`.
    pub fn cplx_abs2(&mut self, x: DiffTensor) -> Result<DiffTensor> {
        if self.shape(x).last() != Some(&2) {
            return Err(Error::ShapeMismatch("complex pair axis required".into()));
        }
        let xv = self.value(x).data();
        let out: Vec<f64> = xv.chunks_exact(2).map(|p| p[0] * p[0] + p[1] * p[1]).collect();
        let shape = self.shape(x)[..self.shape(x).len() - 1].to_vec();
        let t = Tensor::from_vec(&shape, out)?;
        Ok(self.push(t, Op::CplxAbs2 { x: x.id }))
    }

    /// 2D FFT (or inverse) plus frequency-axis shift over a
    /// `(batch, cols, rows, inner, 2)` tensor, transforming the (rows,
    /// cols) = (antenna, frequency) plane for every (batch, inner) pair.
    pub fn cplx_fft2_shift(
        &mut self,
        x: DiffTensor,
        shift: usize,
        inverse: bool,
    ) -> Result<DiffTensor> {
        let s = self.shape(x).to_vec();
        if s.len() != 5 || s[4] != 2 {
            return Err(Error::ShapeMismatch("expected (batch, cols, rows, inner, 2)".into()));
        }
        let (batch, cols, rows, inner) = (s[0], s[1], s[2], s[3]);
        let out = fft2_shift_apply(self.value(x).data(), batch, cols, rows, inner, shift, inverse);
        let t = Tensor::from_vec(&s, out)?;
        Ok(self.push(
            t,
            Op::CplxFft2Shift { x: x.id, batch, rows, cols, inner, shift, inverse },
        ))
    }

    /// Normalize each complex column over the `t` axis of a
    /// `(batch, t, s, 2)`-shaped tensor (leading axes folded into batch).
    /// Columns with vanishing norm fall back to the canonical unit vector
    /// `e_(s mod t)`; that branch is not differentiable and contributes
    /// zero gradient.
    pub fn normalize_columns(&mut self, x: DiffTensor) -> Result<DiffTensor> {
        let (batch, t, s) = self.cplx_matrix_dims(x)?;
        let xv = self.value(x).data();
        let mut out = alloc::vec![0.0; xv.len()];
        for i in 0..batch {
            for col in 0..s {
                let mut norm2 = 0.0;
                for row in 0..t {
                    let b = (i * t * s + row * s + col) * 2;
                    norm2 += xv[b] * xv[b] + xv[b + 1] * xv[b + 1];
                }
                let norm = norm2.sqrt();
                if norm < ZERO_COLUMN_EPS {
                    let b = (i * t * s + (col % t) * s + col) * 2;
                    out[b] = 1.0;
                } else {
                    for row in 0..t {
                        let b = (i * t * s + row * s + col) * 2;
                        out[b] = xv[b] / norm;
                        out[b + 1] = xv[b + 1] / norm;
                    }
                }
            }
        }
        let t_out = Tensor::from_vec(self.shape(x), out)?;
        Ok(self.push(t_out, Op::NormalizeColumns { x: x.id, batch, t, s }))
    }

    /// Per-axis max-log LLRs for Gray-labeled square QAM: input
    /// `(..., 2)` equalized symbols, one detached noise variance per
    /// symbol, output `(..., log2 M)`. Positive means bit 1; clipped
    /// entries stop gradient flow.
    pub fn maxlog_llr(&mut self, x: DiffTensor, vars: Vec<f64>, m: usize) -> Result<DiffTensor> {
        if self.shape(x).last() != Some(&2) {
            return Err(Error::ShapeMismatch("complex pair axis required".into()));
        }
        let n_sym = self.value(x).numel() / 2;
        if vars.len() != n_sym {
            return Err(Error::ShapeMismatch("one variance per symbol".into()));
        }
        let (half, amps) = crate::phy::axis_amp_table(m)?;
        let xv = self.value(x).data();
        let mut out = alloc::vec![0.0; n_sym * 2 * half];
        for i in 0..n_sym {
            let var = vars[i].max(1e-300);
            for axis in 0..2 {
                let v = xv[i * 2 + axis];
                for bit in 0..half {
                    let (d0, d1) = min_dists(v, &amps, half, bit);
                    let llr = ((d0 - d1) / var).clamp(-LLR_CLIP, LLR_CLIP);
                    out[(i * 2 + axis) * half + bit] = llr;
                }
            }
        }
        let mut shape = self.shape(x)[..self.shape(x).len() - 1].to_vec();
        shape.push(2 * half);
        let t = Tensor::from_vec(&shape, out)?;
        Ok(self.push(t, Op::MaxlogLlr { x: x.id, vars, m }))
    }

    /// Mean binary cross entropy of coded bits against LLRs, in bits
    /// (divided by ln 2). This equals `1 - Gamma` for the bit-metric
    /// decoding rate, so minimizing it maximizes the rate.
    pub fn bmd_bce(&mut self, llrs: DiffTensor, bits: Vec<u8>) -> Result<DiffTensor> {
        if self.value(llrs).numel() != bits.len() {
            return Err(Error::ShapeMismatch("one bit per LLR".into()));
        }
        let lv = self.value(llrs).data();
        let mut sum = 0.0;
        for (&l, &c) in lv.iter().zip(&bits) {
            sum += crate::phy::bce(c, l);
        }
        let mean_bits = sum / (bits.len() as f64 * core::f64::consts::LN_2);
        Ok(self.push(Tensor::scalar(mean_bits), Op::BmdBce { llrs: llrs.id, bits }))
    }

    // ----- backward -----

    /// Reverse accumulation from a scalar loss. Every reachable node's
    /// gradient is populated; each node is visited exactly once.
    pub fn backward(&mut self, loss: DiffTensor) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::InvalidArgument("backward needs a scalar loss".into()));
        }
        for g in &mut self.grads {
            *g = None;
        }
        self.grads[loss.id] = Some(Tensor::scalar(1.0));
        for i in (0..self.nodes.len()).rev() {
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            self.propagate(i, &g)?;
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn add_grad(&mut self, id: usize, contrib: Vec<f64>) {
        match &mut self.grads[id] {
            Some(g) => {
                for (a, b) in g.data_mut().iter_mut().zip(&contrib) {
                    *a += b;
                }
            }
            slot @ None => {
                let shape = self.nodes[id].value.shape().to_vec();
                *slot = Some(Tensor::from_vec(&shape, contrib).expect("gradient shape"));
            }
        }
    }

    fn propagate(&mut self, id: usize, g: &Tensor) -> Result<()> {
        // Ops only reference earlier nodes, so reverse iteration is a
        // valid topological order.
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Add { a, b } => {
                let (a, b) = (*a, *b);
                self.add_grad(a, g.data().to_vec());
                self.add_grad(b, g.data().to_vec());
            }
            Op::Sub { a, b } => {
                let (a, b) = (*a, *b);
                self.add_grad(a, g.data().to_vec());
                self.add_grad(b, g.data().iter().map(|v| -v).collect());
            }
            Op::Reshape { x } => {
                let x = *x;
                self.add_grad(x, g.data().to_vec());
            }
            Op::Mse { a, b } => {
                let (a, b) = (*a, *b);
                let scale = 2.0 * g.data()[0] / self.nodes[a].value.numel() as f64;
                let diff: Vec<f64> = self.nodes[a]
                    .value
                    .data()
                    .iter()
                    .zip(self.nodes[b].value.data())
                    .map(|(x, y)| scale * (x - y))
                    .collect();
                let neg: Vec<f64> = diff.iter().map(|v| -v).collect();
                self.add_grad(a, diff);
                self.add_grad(b, neg);
            }
            Op::Conv2d { x, w, b, relu } => {
                let (x, w, b, relu) = (*x, *w, *b, *relu);
                let xs = self.nodes[x].value.shape().to_vec();
                let ws = self.nodes[w].value.shape().to_vec();
                let gm = masked_grad(g.data(), self.nodes[id].value.data(), relu);
                let (dx, dw, db) = conv::conv2d_backward(
                    self.nodes[x].value.data(),
                    xs[0],
                    xs[1],
                    xs[2],
                    xs[3],
                    self.nodes[w].value.data(),
                    ws[0],
                    ws[1],
                    ws[3],
                    &gm,
                );
                self.add_grad(x, dx);
                self.add_grad(w, dw);
                self.add_grad(b, db);
            }
            Op::Conv3d { x, w, b, relu } => {
                let (x, w, b, relu) = (*x, *w, *b, *relu);
                let xs = self.nodes[x].value.shape().to_vec();
                let ws = self.nodes[w].value.shape().to_vec();
                let gm = masked_grad(g.data(), self.nodes[id].value.data(), relu);
                let (dx, dw, db) = conv::conv3d_backward(
                    self.nodes[x].value.data(),
                    xs[0],
                    xs[1],
                    xs[2],
                    xs[3],
                    xs[4],
                    self.nodes[w].value.data(),
                    ws[0],
                    ws[1],
                    ws[2],
                    ws[4],
                    &gm,
                );
                self.add_grad(x, dx);
                self.add_grad(w, dw);
                self.add_grad(b, db);
            }
            Op::BatchNorm { x, gamma, beta, mean, var } => {
                let (x, gamma, beta) = (*x, *gamma, *beta);
                let mean = mean.clone();
                let var = var.clone();
                let c = mean.len();
                let xv = self.nodes[x].value.data();
                let gv = self.nodes[gamma].value.data();
                let rows = xv.len() / c;
                let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + BN_EPS).sqrt()).collect();
                // Channel reductions.
                let mut dbeta = alloc::vec![0.0; c];
                let mut dgamma = alloc::vec![0.0; c];
                let mut sum_g = alloc::vec![0.0; c];
                let mut sum_gx = alloc::vec![0.0; c];
                for (row, grow) in xv.chunks_exact(c).zip(g.data().chunks_exact(c)) {
                    for j in 0..c {
                        let xh = (row[j] - mean[j]) * inv_std[j];
                        dbeta[j] += grow[j];
                        dgamma[j] += grow[j] * xh;
                        sum_g[j] += grow[j];
                        sum_gx[j] += grow[j] * xh;
                    }
                }
                let mut dx = Vec::with_capacity(xv.len());
                let rn = rows as f64;
                for (row, grow) in xv.chunks_exact(c).zip(g.data().chunks_exact(c)) {
                    for j in 0..c {
                        let xh = (row[j] - mean[j]) * inv_std[j];
                        let t = grow[j] - sum_g[j] / rn - xh * sum_gx[j] / rn;
                        dx.push(gv[j] * inv_std[j] * t);
                    }
                }
                self.add_grad(x, dx);
                self.add_grad(gamma, dgamma);
                self.add_grad(beta, dbeta);
            }
            Op::CplxMatmul { a, b, batch, n, k, m } => {
                let (a, b, batch, n, k, m) = (*a, *b, *batch, *n, *k, *m);
                let av = self.nodes[a].value.data();
                let bv = self.nodes[b].value.data();
                let mut da = alloc::vec![0.0; av.len()];
                let mut db = alloc::vec![0.0; bv.len()];
                for i in 0..batch {
                    let gs = &g.data()[i * n * m * 2..(i + 1) * n * m * 2];
                    // dA = G B^H, dB = A^H G.
                    cplx_mm_abh(
                        gs,
                        &bv[i * k * m * 2..(i + 1) * k * m * 2],
                        &mut da[i * n * k * 2..(i + 1) * n * k * 2],
                        n,
                        m,
                        k,
                    );
                    cplx_mm_ahb(
                        &av[i * n * k * 2..(i + 1) * n * k * 2],
                        gs,
                        &mut db[i * k * m * 2..(i + 1) * k * m * 2],
                        n,
                        k,
                        m,
                    );
                }
                self.add_grad(a, da);
                self.add_grad(b, db);
            }
            Op::CplxHermitian { x, batch, n, m } => {
                let (x, batch, n, m) = (*x, *batch, *n, *m);
                // The adjoint of a conjugate transpose is itself.
                let mut dx = alloc::vec![0.0; g.data().len()];
                hermitian_into(g.data(), &mut dx, batch, m, n);
                self.add_grad(x, dx);
            }
            Op::CplxInverse { x, batch, n } => {
                let (x, batch, n) = (*x, *batch, *n);
                let yv = self.nodes[id].value.data();
                let mut dx = alloc::vec![0.0; yv.len()];
                let mut yh = alloc::vec![0.0; n * n * 2];
                let mut tmp = alloc::vec![0.0; n * n * 2];
                for i in 0..batch {
                    let y = &yv[i * n * n * 2..(i + 1) * n * n * 2];
                    let gs = &g.data()[i * n * n * 2..(i + 1) * n * n * 2];
                    // dX = -Y^H G Y^H.
                    hermitian_into(y, &mut yh, 1, n, n);
                    tmp.iter_mut().for_each(|v| *v = 0.0);
                    cplx_mm(&yh, gs, &mut tmp, n, n, n);
                    let d = &mut dx[i * n * n * 2..(i + 1) * n * n * 2];
                    let mut prod = alloc::vec![0.0; n * n * 2];
                    cplx_mm(&tmp, &yh, &mut prod, n, n, n);
                    for (o, p) in d.iter_mut().zip(&prod) {
                        *o -= p;
                    }
                }
                self.add_grad(x, dx);
            }
            Op::CplxDiag { x, batch, n } => {
                let (x, batch, n) = (*x, *batch, *n);
                let mut dx = alloc::vec![0.0; self.nodes[x].value.numel()];
                for i in 0..batch {
                    for d in 0..n {
                        let dst = (i * n * n + d * n + d) * 2;
                        let src = (i * n + d) * 2;
                        dx[dst] = g.data()[src];
                        dx[dst + 1] = g.data()[src + 1];
                    }
                }
                self.add_grad(x, dx);
            }
            Op::CplxDivElem { a, b } => {
                let (a, b) = (*a, *b);
                let av = self.nodes[a].value.data();
                let bv = self.nodes[b].value.data();
                let mut da = alloc::vec![0.0; av.len()];
                let mut db = alloc::vec![0.0; bv.len()];
                for i in (0..av.len()).step_by(2) {
                    let x = C64::new(av[i], av[i + 1]);
                    let y = C64::new(bv[i], bv[i + 1]);
                    let gz = C64::new(g.data()[i], g.data()[i + 1]);
                    // c = x / y: holomorphic, so grads are conj(dc/d.) * g.
                    let inv_y = C64::new(1.0, 0.0) / y;
                    let ga = inv_y.conj() * gz;
                    let gb = (-(x * inv_y * inv_y)).conj() * gz;
                    da[i] = ga.re;
                    da[i + 1] = ga.im;
                    db[i] = gb.re;
                    db[i + 1] = gb.im;
                }
                self.add_grad(a, da);
                self.add_grad(b, db);
            }
            Op::CplxAbs2 { x } => {
                let x = *x;
                let xv = self.nodes[x].value.data();
                let mut dx = alloc::vec![0.0; xv.len()];
                for (i, gv) in g.data().iter().enumerate() {
                    dx[i * 2] = 2.0 * xv[i * 2] * gv;
                    dx[i * 2 + 1] = 2.0 * xv[i * 2 + 1] * gv;
                }
                self.add_grad(x, dx);
            }
            Op::CplxFft2Shift { x, batch, rows, cols, inner, shift, inverse } => {
                let (x, batch, rows, cols, inner, shift, inverse) =
                    (*x, *batch, *rows, *cols, *inner, *shift, *inverse);
                // Adjoint of the unnormalized forward transform is N times
                // the normalized inverse (and vice versa), with the shift
                // undone by the opposite rotation.
                let n_total = (rows * cols) as f64;
                let mut dx =
                    fft2_shift_apply(g.data(), batch, cols, rows, inner, shift, !inverse);
                let scale = if inverse { 1.0 / n_total } else { n_total };
                for v in &mut dx {
                    *v *= scale;
                }
                self.add_grad(x, dx);
            }
            Op::NormalizeColumns { x, batch, t, s } => {
                let (x, batch, t, s) = (*x, *batch, *t, *s);
                let xv = self.nodes[x].value.data();
                let mut dx = alloc::vec![0.0; xv.len()];
                for i in 0..batch {
                    for col in 0..s {
                        let mut norm2 = 0.0;
                        let mut dot = 0.0;
                        for row in 0..t {
                            let b = (i * t * s + row * s + col) * 2;
                            norm2 += xv[b] * xv[b] + xv[b + 1] * xv[b + 1];
                            dot += xv[b] * g.data()[b] + xv[b + 1] * g.data()[b + 1];
                        }
                        let norm = norm2.sqrt();
                        if norm < ZERO_COLUMN_EPS {
                            continue;
                        }
                        let inv = 1.0 / norm;
                        let inv3 = inv / norm2;
                        for row in 0..t {
                            let b = (i * t * s + row * s + col) * 2;
                            dx[b] += g.data()[b] * inv - xv[b] * dot * inv3;
                            dx[b + 1] += g.data()[b + 1] * inv - xv[b + 1] * dot * inv3;
                        }
                    }
                }
                self.add_grad(x, dx);
            }
            Op::MaxlogLlr { x, vars, m } => {
                let (x, m) = (*x, *m);
                let vars = vars.clone();
                let (half, amps) = crate::phy::axis_amp_table(m)?;
                let xv = self.nodes[x].value.data();
                let mut dx = alloc::vec![0.0; xv.len()];
                for i in 0..vars.len() {
                    let var = vars[i].max(1e-300);
                    for axis in 0..2 {
                        let v = xv[i * 2 + axis];
                        for bit in 0..half {
                            let gv = g.data()[(i * 2 + axis) * half + bit];
                            if gv == 0.0 {
                                continue;
                            }
                            let (d0, d1) = min_dists(v, &amps, half, bit);
                            let llr = (d0 - d1) / var;
                            if llr.abs() >= LLR_CLIP {
                                continue;
                            }
                            // d0 - d1 is piecewise quadratic in v; its
                            // derivative uses the two selected levels.
                            let (a0, a1) = argmin_levels(v, &amps, half, bit);
                            dx[i * 2 + axis] += gv * 2.0 * (a1 - a0) / var;
                        }
                    }
                }
                self.add_grad(x, dx);
            }
            Op::BmdBce { llrs, bits } => {
                let llrs = *llrs;
                let bits = bits.clone();
                let lv = self.nodes[llrs].value.data();
                let scale = g.data()[0] / (bits.len() as f64 * core::f64::consts::LN_2);
                let mut dl = Vec::with_capacity(lv.len());
                for (&l, &c) in lv.iter().zip(&bits) {
                    let sgn = 1.0 - 2.0 * c as f64;
                    // d/dl softplus(sgn * l) = sgn * sigmoid(sgn * l).
                    let sig = 1.0 / (1.0 + (-(sgn * l)).exp());
                    dl.push(scale * sgn * sig);
                }
                self.add_grad(llrs, dl);
            }
        }
        Ok(())
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

const BN_EPS: f64 = 1e-5;
const ZERO_COLUMN_EPS: f64 = 1e-12;

fn masked_grad(g: &[f64], out: &[f64], relu: bool) -> Vec<f64> {
    if !relu {
        return g.to_vec();
    }
    g.iter().zip(out).map(|(&gv, &ov)| if ov > 0.0 { gv } else { 0.0 }).collect()
}

/// Squared distances from `v` to the nearest level with bit `bit` equal to
/// 0 and 1 respectively.
fn min_dists(v: f64, amps: &[f64], half: usize, bit: usize) -> (f64, f64) {
    let mask = 1usize << (half - 1 - bit);
    let mut d0 = f64::INFINITY;
    let mut d1 = f64::INFINITY;
    for (gidx, &a) in amps.iter().enumerate() {
        let d = (v - a) * (v - a);
        if gidx & mask == 0 {
            d0 = d0.min(d);
        } else {
            d1 = d1.min(d);
        }
    }
    (d0, d1)
}

/// The levels selected by `min_dists`.
fn argmin_levels(v: f64, amps: &[f64], half: usize, bit: usize) -> (f64, f64) {
    let mask = 1usize << (half - 1 - bit);
    let (mut d0, mut d1) = (f64::INFINITY, f64::INFINITY);
    let (mut a0, mut a1) = (0.0, 0.0);
    for (gidx, &a) in amps.iter().enumerate() {
        let d = (v - a) * (v - a);
        if gidx & mask == 0 {
            if d < d0 {
                d0 = d;
                a0 = a;
            }
        } else if d < d1 {
            d1 = d;
            a1 = a;
        }
    }
    (a0, a1)
}

/// C = A B over interleaved (re, im) data, accumulating into zeroed `out`.
fn cplx_mm(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        for l in 0..k {
            let ar = a[(i * k + l) * 2];
            let ai = a[(i * k + l) * 2 + 1];
            if ar == 0.0 && ai == 0.0 {
                continue;
            }
            for j in 0..m {
                let br = b[(l * m + j) * 2];
                let bi = b[(l * m + j) * 2 + 1];
                out[(i * m + j) * 2] += ar * br - ai * bi;
                out[(i * m + j) * 2 + 1] += ar * bi + ai * br;
            }
        }
    }
}

/// C += A B^H with A `(n, m)`, B `(k, m)`, C `(n, k)`.
fn cplx_mm_abh(a: &[f64], b: &[f64], out: &mut [f64], n: usize, m: usize, k: usize) {
    for i in 0..n {
        for j in 0..k {
            let mut re = 0.0;
            let mut im = 0.0;
            for l in 0..m {
                let ar = a[(i * m + l) * 2];
                let ai = a[(i * m + l) * 2 + 1];
                let br = b[(j * m + l) * 2];
                let bi = -b[(j * m + l) * 2 + 1];
                re += ar * br - ai * bi;
                im += ar * bi + ai * br;
            }
            out[(i * k + j) * 2] += re;
            out[(i * k + j) * 2 + 1] += im;
        }
    }
}

/// C += A^H B with A `(n, k)`, B `(n, m)`, C `(k, m)`.
fn cplx_mm_ahb(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for l in 0..n {
        for i in 0..k {
            let ar = a[(l * k + i) * 2];
            let ai = -a[(l * k + i) * 2 + 1];
            if ar == 0.0 && ai == 0.0 {
                continue;
            }
            for j in 0..m {
                let br = b[(l * m + j) * 2];
                let bi = b[(l * m + j) * 2 + 1];
                out[(i * m + j) * 2] += ar * br - ai * bi;
                out[(i * m + j) * 2 + 1] += ar * bi + ai * br;
            }
        }
    }
}

fn hermitian_into(x: &[f64], out: &mut [f64], batch: usize, n: usize, m: usize) {
    for i in 0..batch {
        for r in 0..n {
            for c in 0..m {
                let src = (i * n * m + r * m + c) * 2;
                let dst = (i * n * m + c * n + r) * 2;
                out[dst] = x[src];
                out[dst + 1] = -x[src + 1];
            }
        }
    }
}

/// Apply the 2D transform-and-shift to every (batch, inner) plane of a
/// `(batch, cols, rows, inner, 2)` tensor.
fn fft2_shift_apply(
    x: &[f64],
    batch: usize,
    cols: usize,
    rows: usize,
    inner: usize,
    shift: usize,
    inverse: bool,
) -> Vec<f64> {
    let mut out = alloc::vec![0.0; x.len()];
    let mut plane = alloc::vec![C64::new(0.0, 0.0); rows * cols];
    for b in 0..batch {
        for i in 0..inner {
            for c in 0..cols {
                for r in 0..rows {
                    let src = (((b * cols + c) * rows + r) * inner + i) * 2;
                    plane[r * cols + c] = C64::new(x[src], x[src + 1]);
                }
            }
            let transformed = crate::numerics::fft2_shift(&plane, rows, cols, shift, inverse);
            for c in 0..cols {
                for r in 0..rows {
                    let dst = (((b * cols + c) * rows + r) * inner + i) * 2;
                    out[dst] = transformed[r * cols + c].re;
                    out[dst + 1] = transformed[r * cols + c].im;
                }
            }
        }
    }
    out
}
