//! 1D/2D discrete Fourier transforms.
//!
//! Power-of-two lengths run through an iterative radix-2 kernel; everything
//! else falls back to a direct DFT, which is plenty at the grid sizes the
//! simulator uses (active-subcarrier counts like 21 are not powers of two).
//!
//! Convention: forward transforms are unnormalized, inverse transforms
//! carry the `1/N` factor, so `fft1(fft1(x), inverse=true) == x`.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::numerics::C64;

fn twiddle(k: usize, n: usize, inverse: bool) -> C64 {
    let sign = if inverse { 1.0 } else { -1.0 };
    let ang = sign * core::f64::consts::TAU * k as f64 / n as f64;
    let (s, c) = ang.sin_cos();
    C64::new(c, s)
}

fn dft_direct(x: &[C64], inverse: bool) -> Vec<C64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut acc = C64::new(0.0, 0.0);
        for (j, &v) in x.iter().enumerate() {
            acc += v * twiddle((k * j) % n, n, inverse);
        }
        out.push(acc);
    }
    out
}

fn fft_radix2(x: &mut [C64], inverse: bool) {
    let n = x.len();
    // Bit-reversal permutation.
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            x.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let step = twiddle(1, len, inverse);
        for chunk in x.chunks_mut(len) {
            let mut w = C64::new(1.0, 0.0);
            let half = len / 2;
            for i in 0..half {
                let u = chunk[i];
                let v = chunk[i + half] * w;
                chunk[i] = u + v;
                chunk[i + half] = u - v;
                w *= step;
            }
        }
        len <<= 1;
    }
}

/// 1D DFT. `inverse = true` applies the `1/N` scale.
pub fn fft1(x: &[C64], inverse: bool) -> Vec<C64> {
    let n = x.len();
    assert!(n >= 1, "fft1 needs a non-empty input");
    let mut out = if n.is_power_of_two() {
        let mut buf = x.to_vec();
        fft_radix2(&mut buf, inverse);
        buf
    } else {
        dft_direct(x, inverse)
    };
    if inverse {
        let scale = 1.0 / n as f64;
        for v in &mut out {
            *v *= scale;
        }
    }
    out
}

fn circular_shift_cols(x: &mut [C64], rows: usize, cols: usize, shift: usize) {
    if cols == 0 {
        return;
    }
    let s = shift % cols;
    if s == 0 {
        return;
    }
    let mut tmp = alloc::vec![C64::new(0.0, 0.0); cols];
    for r in 0..rows {
        let row = &mut x[r * cols..(r + 1) * cols];
        tmp.copy_from_slice(row);
        for c in 0..cols {
            row[(c + s) % cols] = tmp[c];
        }
    }
}

/// 2D DFT over a `rows x cols` matrix (row-major, frequency along the
/// column axis) combined with a circular shift of `shift` points on the
/// frequency axis.
///
/// Forward: transform both axes, then shift the frequency axis so the main
/// values sit around the middle instead of the edges. Inverse: undo the
/// shift first, then apply the (1/N-scaled) 2D inverse transform. The pair
/// round-trips to identity.
pub fn fft2_shift(x: &[C64], rows: usize, cols: usize, shift: usize, inverse: bool) -> Vec<C64> {
    assert_eq!(x.len(), rows * cols, "fft2_shift data length");
    let mut buf = x.to_vec();
    if inverse {
        // Undo the forward shift: rotate back.
        circular_shift_cols(&mut buf, rows, cols, cols - (shift % cols.max(1)) % cols.max(1));
        transform_2d(&mut buf, rows, cols, true);
    } else {
        transform_2d(&mut buf, rows, cols, false);
        circular_shift_cols(&mut buf, rows, cols, shift);
    }
    buf
}

fn transform_2d(buf: &mut [C64], rows: usize, cols: usize, inverse: bool) {
    // Along each row (frequency axis).
    let mut scratch: Vec<C64> = Vec::with_capacity(rows.max(cols));
    for r in 0..rows {
        let row = &buf[r * cols..(r + 1) * cols];
        let out = fft1(row, inverse);
        buf[r * cols..(r + 1) * cols].copy_from_slice(&out);
    }
    // Along each column (antenna axis).
    for c in 0..cols {
        scratch.clear();
        scratch.extend((0..rows).map(|r| buf[r * cols + c]));
        let out = fft1(&scratch, inverse);
        for (r, v) in out.into_iter().enumerate() {
            buf[r * cols + c] = v;
        }
    }
}
