//! Direct convolution kernels (forward and backward), channel-last
//! layout, stride 1, same padding for odd kernels.
//!
//! Layouts: 2D activations are `(N, H, W, C)` with weights
//! `(kh, kw, Cin, F)`; 3D activations are `(N, D, H, W, C)` with weights
//! `(kd, kh, kw, Cin, F)`. The innermost loops run over the filter axis,
//! which is contiguous in both the weights and the outputs.

use alloc::vec::Vec;

#[inline]
fn valid_range(out_len: usize, k_off: usize, pad: usize) -> (usize, usize) {
    // Output positions whose input index `pos + k_off - pad` stays in
    // bounds.
    let lo = pad.saturating_sub(k_off);
    let hi = (out_len + pad).saturating_sub(k_off).min(out_len);
    (lo, hi)
}

#[allow(clippy::too_many_arguments)]
pub fn conv2d_forward(
    x: &[f64],
    n: usize,
    h: usize,
    w: usize,
    cin: usize,
    wgt: &[f64],
    kh: usize,
    kw: usize,
    f: usize,
    bias: &[f64],
    relu: bool,
) -> Vec<f64> {
    let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
    let mut out = alloc::vec![0.0; n * h * w * f];
    let mut row_acc = alloc::vec![0.0; w * f];
    for b in 0..n {
        for y in 0..h {
            row_acc.iter_mut().for_each(|v| *v = 0.0);
            for ky in 0..kh {
                let yy = y + ky;
                if yy < ph || yy - ph >= h {
                    continue;
                }
                let yy = yy - ph;
                for kx in 0..kw {
                    let (x_lo, x_hi) = valid_range(w, kx, pw);
                    let wbase = (ky * kw + kx) * cin * f;
                    for xo in x_lo..x_hi {
                        let xx = xo + kx - pw;
                        let xbase = ((b * h + yy) * w + xx) * cin;
                        let acc = &mut row_acc[xo * f..(xo + 1) * f];
                        for c in 0..cin {
                            let xv = x[xbase + c];
                            if xv == 0.0 {
                                continue;
                            }
                            let wrow = &wgt[wbase + c * f..wbase + (c + 1) * f];
                            for (a, &wv) in acc.iter_mut().zip(wrow) {
                                *a += xv * wv;
                            }
                        }
                    }
                }
            }
            let obase = (b * h + y) * w * f;
            for xo in 0..w {
                for j in 0..f {
                    let mut v = row_acc[xo * f + j] + bias[j];
                    if relu && v < 0.0 {
                        v = 0.0;
                    }
                    out[obase + xo * f + j] = v;
                }
            }
        }
    }
    out
}

/// Backward pass; `gout` must already carry the ReLU mask when the layer
/// was activated. Returns `(dx, dw, db)`.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward(
    x: &[f64],
    n: usize,
    h: usize,
    w: usize,
    cin: usize,
    wgt: &[f64],
    kh: usize,
    kw: usize,
    f: usize,
    gout: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
    let mut dx = alloc::vec![0.0; x.len()];
    let mut dw = alloc::vec![0.0; wgt.len()];
    let mut db = alloc::vec![0.0; f];
    for b in 0..n {
        for y in 0..h {
            let gbase_row = (b * h + y) * w * f;
            for xo in 0..w {
                let g = &gout[gbase_row + xo * f..gbase_row + (xo + 1) * f];
                for (j, &gv) in g.iter().enumerate() {
                    db[j] += gv;
                }
            }
            for ky in 0..kh {
                let yy = y + ky;
                if yy < ph || yy - ph >= h {
                    continue;
                }
                let yy = yy - ph;
                for kx in 0..kw {
                    let (x_lo, x_hi) = valid_range(w, kx, pw);
                    let wbase = (ky * kw + kx) * cin * f;
                    for xo in x_lo..x_hi {
                        let xx = xo + kx - pw;
                        let xbase = ((b * h + yy) * w + xx) * cin;
                        let g = &gout[gbase_row + xo * f..gbase_row + (xo + 1) * f];
                        for c in 0..cin {
                            let xv = x[xbase + c];
                            let wrow = &wgt[wbase + c * f..wbase + (c + 1) * f];
                            let dwrow = &mut dw[wbase + c * f..wbase + (c + 1) * f];
                            let mut acc = 0.0;
                            for j in 0..f {
                                let gv = g[j];
                                acc += wrow[j] * gv;
                                dwrow[j] += xv * gv;
                            }
                            dx[xbase + c] += acc;
                        }
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

#[allow(clippy::too_many_arguments)]
pub fn conv3d_forward(
    x: &[f64],
    n: usize,
    d: usize,
    h: usize,
    w: usize,
    cin: usize,
    wgt: &[f64],
    kd: usize,
    kh: usize,
    kw: usize,
    f: usize,
    bias: &[f64],
    relu: bool,
) -> Vec<f64> {
    let (pd, ph, pw) = ((kd - 1) / 2, (kh - 1) / 2, (kw - 1) / 2);
    let mut out = alloc::vec![0.0; n * d * h * w * f];
    let mut row_acc = alloc::vec![0.0; w * f];
    for b in 0..n {
        for z in 0..d {
            for y in 0..h {
                row_acc.iter_mut().for_each(|v| *v = 0.0);
                for kz in 0..kd {
                    let zz = z + kz;
                    if zz < pd || zz - pd >= d {
                        continue;
                    }
                    let zz = zz - pd;
                    for ky in 0..kh {
                        let yy = y + ky;
                        if yy < ph || yy - ph >= h {
                            continue;
                        }
                        let yy = yy - ph;
                        for kx in 0..kw {
                            let (x_lo, x_hi) = valid_range(w, kx, pw);
                            let wbase = ((kz * kh + ky) * kw + kx) * cin * f;
                            for xo in x_lo..x_hi {
                                let xx = xo + kx - pw;
                                let xbase = (((b * d + zz) * h + yy) * w + xx) * cin;
                                let acc = &mut row_acc[xo * f..(xo + 1) * f];
                                for c in 0..cin {
                                    let xv = x[xbase + c];
                                    if xv == 0.0 {
                                        continue;
                                    }
                                    let wrow = &wgt[wbase + c * f..wbase + (c + 1) * f];
                                    for (a, &wv) in acc.iter_mut().zip(wrow) {
                                        *a += xv * wv;
                                    }
                                }
                            }
                        }
                    }
                }
                let obase = ((b * d + z) * h + y) * w * f;
                for xo in 0..w {
                    for j in 0..f {
                        let mut v = row_acc[xo * f + j] + bias[j];
                        if relu && v < 0.0 {
                            v = 0.0;
                        }
                        out[obase + xo * f + j] = v;
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub fn conv3d_backward(
    x: &[f64],
    n: usize,
    d: usize,
    h: usize,
    w: usize,
    cin: usize,
    wgt: &[f64],
    kd: usize,
    kh: usize,
    kw: usize,
    f: usize,
    gout: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (pd, ph, pw) = ((kd - 1) / 2, (kh - 1) / 2, (kw - 1) / 2);
    let mut dx = alloc::vec![0.0; x.len()];
    let mut dw = alloc::vec![0.0; wgt.len()];
    let mut db = alloc::vec![0.0; f];
    for b in 0..n {
        for z in 0..d {
            for y in 0..h {
                let gbase_row = ((b * d + z) * h + y) * w * f;
                for xo in 0..w {
                    let g = &gout[gbase_row + xo * f..gbase_row + (xo + 1) * f];
                    for (j, &gv) in g.iter().enumerate() {
                        db[j] += gv;
                    }
                }
                for kz in 0..kd {
                    let zz = z + kz;
                    if zz < pd || zz - pd >= d {
                        continue;
                    }
                    let zz = zz - pd;
                    for ky in 0..kh {
                        let yy = y + ky;
                        if yy < ph || yy - ph >= h {
                            continue;
                        }
                        let yy = yy - ph;
                        for kx in 0..kw {
                            let (x_lo, x_hi) = valid_range(w, kx, pw);
                            let wbase = ((kz * kh + ky) * kw + kx) * cin * f;
                            for xo in x_lo..x_hi {
                                let xx = xo + kx - pw;
                                let xbase = (((b * d + zz) * h + yy) * w + xx) * cin;
                                let g = &gout[gbase_row + xo * f..gbase_row + (xo + 1) * f];
                                for c in 0..cin {
                                    let xv = x[xbase + c];
                                    let wrow = &wgt[wbase + c * f..wbase + (c + 1) * f];
                                    let dwrow = &mut dw[wbase + c * f..wbase + (c + 1) * f];
                                    let mut acc = 0.0;
                                    for j in 0..f {
                                        let gv = g[j];
                                        acc += wrow[j] * gv;
                                        dwrow[j] += xv * gv;
                                    }
                                    dx[xbase + c] += acc;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (dx, dw, db)
}
