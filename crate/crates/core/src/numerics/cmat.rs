//! Dense complex matrices and the regularized inverse used by the
//! precoders and the LMMSE detector.

use alloc::format;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::numerics::C64;

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "CMat dimensions must be >= 1");
        CMat { rows, cols, data: alloc::vec![C64::new(0.0, 0.0); rows * cols] }
    }

    pub fn eye(n: usize) -> Self {
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        assert!(rows >= 1 && cols >= 1, "CMat dimensions must be >= 1");
        CMat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> CMat {
        let mut out = CMat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(c, r)] = self[(r, c)].conj();
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &CMat) -> CMat {
        assert_eq!(self.cols, rhs.rows, "matmul inner dimensions");
        let mut out = CMat::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                for c in 0..rhs.cols {
                    out[(r, c)] += a * rhs[(k, c)];
                }
            }
        }
        out
    }

    /// Matrix-vector product.
    pub fn matvec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|r| {
                let mut acc = C64::new(0.0, 0.0);
                for c in 0..self.cols {
                    acc += self[(r, c)] * v[c];
                }
                acc
            })
            .collect()
    }

    /// Frobenius norm.
    pub fn fro_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl core::ops::Index<(usize, usize)> for CMat {
    type Output = C64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl core::ops::IndexMut<(usize, usize)> for CMat {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

/// `(A + ridge I)^-1` by partial-pivot Gaussian elimination in double
/// precision. `ridge = 0` is allowed for well-conditioned `A`; an exactly
/// (or numerically) singular system is reported as an error.
pub fn cinv(a: &CMat, ridge: f64) -> Result<CMat> {
    if a.rows() != a.cols() {
        return Err(Error::InvalidArgument(format!(
            "cinv needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !(ridge >= 0.0) {
        return Err(Error::InvalidArgument(format!("ridge must be >= 0, got {ridge}")));
    }
    let n = a.rows();
    // Augmented [A + ridge I | I], eliminated in place.
    let mut m = a.clone();
    for i in 0..n {
        m[(i, i)] += C64::new(ridge, 0.0);
    }
    let mut inv = CMat::eye(n);

    for col in 0..n {
        // Partial pivot on the largest remaining magnitude.
        let mut pivot = col;
        let mut best = m[(col, col)].norm_sqr();
        for r in col + 1..n {
            let mag = m[(r, col)].norm_sqr();
            if mag > best {
                best = mag;
                pivot = r;
            }
        }
        if best == 0.0 {
            return Err(Error::Singular(format!("pivot {col} is exactly zero")));
        }
        if pivot != col {
            for c in 0..n {
                let t = m[(col, c)];
                m[(col, c)] = m[(pivot, c)];
                m[(pivot, c)] = t;
                let t = inv[(col, c)];
                inv[(col, c)] = inv[(pivot, c)];
                inv[(pivot, c)] = t;
            }
        }
        let p = m[(col, col)];
        let pinv = C64::new(1.0, 0.0) / p;
        for c in 0..n {
            m[(col, c)] *= pinv;
            inv[(col, c)] *= pinv;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[(r, col)];
            if f.re == 0.0 && f.im == 0.0 {
                continue;
            }
            for c in 0..n {
                let mc = m[(col, c)];
                let ic = inv[(col, c)];
                m[(r, c)] -= f * mc;
                inv[(r, c)] -= f * ic;
            }
        }
    }
    if !inv.is_finite() {
        return Err(Error::Singular("non-finite entries after elimination".into()));
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{cgauss, RngStream};

    fn random_cmat(n: usize, rng: &mut RngStream) -> CMat {
        CMat::from_rows(n, n, cgauss(n * n, 1.0, rng).unwrap())
    }

    #[test]
    fn identity_inverts_to_identity() {
        let i2 = CMat::eye(2);
        let inv = cinv(&i2, 0.0).unwrap();
        assert_eq!(inv, i2);
    }

    #[test]
    fn zero_with_unit_ridge_is_identity() {
        let z = CMat::zeros(2, 2);
        let inv = cinv(&z, 1.0).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                let want = if r == c { 1.0 } else { 0.0 };
                assert!((inv[(r, c)].re - want).abs() < 1e-15);
                assert!(inv[(r, c)].im.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn singular_without_ridge_errors() {
        let z = CMat::zeros(2, 2);
        assert!(matches!(cinv(&z, 0.0), Err(Error::Singular(_))));
    }

    #[test]
    fn residual_of_random_4x4_below_1e10() {
        let mut rng = RngStream::new(5, 0);
        for trial in 0..50 {
            let a = random_cmat(4, &mut rng);
            let inv = cinv(&a, 0.0).unwrap();
            let mut resid = a.matmul(&inv);
            for i in 0..4 {
                resid[(i, i)] -= C64::new(1.0, 0.0);
            }
            assert!(resid.fro_norm() < 1e-10, "trial {trial}: residual {}", resid.fro_norm());
        }
    }

    #[test]
    fn hermitian_and_matmul_agree_with_hand_values() {
        let a = CMat::from_rows(
            2,
            2,
            alloc::vec![
                C64::new(1.0, 2.0),
                C64::new(0.0, -1.0),
                C64::new(3.0, 0.0),
                C64::new(-2.0, 1.0),
            ],
        );
        let ah = a.hermitian();
        assert_eq!(ah[(0, 1)], C64::new(3.0, 0.0));
        assert_eq!(ah[(1, 0)], C64::new(0.0, 1.0));
        let prod = a.matmul(&CMat::eye(2));
        assert_eq!(prod, a);
    }
}
