//! Slice-level forward/backward kernels. Backward kernels accumulate (`+=`)
//! into the provided gradient buffers.

use libm::{exp, sqrt};

pub const GN_EPS: f64 = 1e-5;

/// `y[b, o] = Σ_i w[o, i]·x[b, i] + bias[o]`.
pub fn dense_fwd(x: &[f64], rows: usize, fi: usize, w: &[f64], bias: Option<&[f64]>, fo: usize, y: &mut [f64]) {
    for r in 0..rows {
        let xr = &x[r * fi..(r + 1) * fi];
        for o in 0..fo {
            let wr = &w[o * fi..(o + 1) * fi];
            let mut s = bias.map_or(0.0, |b| b[o]);
            for (a, b) in wr.iter().zip(xr) {
                s += a * b;
            }
            y[r * fo + o] = s;
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn dense_bwd(
    x: &[f64],
    rows: usize,
    fi: usize,
    w: &[f64],
    fo: usize,
    dy: &[f64],
    dx: &mut [f64],
    dw: &mut [f64],
    mut dbias: Option<&mut [f64]>,
) {
    for r in 0..rows {
        let xr = &x[r * fi..(r + 1) * fi];
        let dxr = &mut dx[r * fi..(r + 1) * fi];
        for o in 0..fo {
            let g = dy[r * fo + o];
            if let Some(db) = dbias.as_deref_mut() {
                db[o] += g;
            }
            if g == 0.0 {
                continue;
            }
            let wr = &w[o * fi..(o + 1) * fi];
            let dwr = &mut dw[o * fi..(o + 1) * fi];
            for i in 0..fi {
                dxr[i] += g * wr[i];
                dwr[i] += g * xr[i];
            }
        }
    }
}

pub fn conv_out_len(len: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = len + 2 * pad;
    if padded < kernel || stride == 0 {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Valid output range `lo` for tap `k` so that `lo·s + k − p ∈ [0, len)`.
fn tap_range(k: usize, len: usize, lout: usize, stride: usize, pad: usize) -> (usize, usize) {
    // first lo with lo·s + k ≥ p
    let first = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    // last lo with lo·s + k − p ≤ len − 1
    let lim = len + pad;
    let last = if lim > k { ((lim - k - 1) / stride + 1).min(lout) } else { 0 };
    (first, last.max(first))
}

/// Cross-correlation `y[b, o, l] = Σ_{i,k} w[o, i, k]·x[b, i, l·s + k − p] + bias[o]`
/// with zero padding.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_fwd(
    x: &[f64],
    batch: usize,
    ci: usize,
    len: usize,
    w: &[f64],
    bias: Option<&[f64]>,
    co: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    lout: usize,
    y: &mut [f64],
) {
    for b in 0..batch {
        for o in 0..co {
            let yrow = &mut y[(b * co + o) * lout..(b * co + o + 1) * lout];
            let b0 = bias.map_or(0.0, |bb| bb[o]);
            yrow.iter_mut().for_each(|v| *v = b0);
            for i in 0..ci {
                let xrow = &x[(b * ci + i) * len..(b * ci + i + 1) * len];
                for k in 0..kernel {
                    let wv = w[(o * ci + i) * kernel + k];
                    let (lo0, lo1) = tap_range(k, len, lout, stride, pad);
                    if stride == 1 {
                        let off = k as isize - pad as isize;
                        let xs = &xrow[(lo0 as isize + off) as usize..(lo1 as isize + off) as usize];
                        for (yv, xv) in yrow[lo0..lo1].iter_mut().zip(xs) {
                            *yv += wv * xv;
                        }
                    } else {
                        for lo in lo0..lo1 {
                            yrow[lo] += wv * xrow[lo * stride + k - pad];
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn conv1d_bwd(
    x: &[f64],
    batch: usize,
    ci: usize,
    len: usize,
    w: &[f64],
    co: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    lout: usize,
    dy: &[f64],
    dx: &mut [f64],
    dw: &mut [f64],
    mut dbias: Option<&mut [f64]>,
) {
    for b in 0..batch {
        for o in 0..co {
            let dyrow = &dy[(b * co + o) * lout..(b * co + o + 1) * lout];
            if let Some(db) = dbias.as_deref_mut() {
                db[o] += dyrow.iter().sum::<f64>();
            }
            for i in 0..ci {
                let xrow = &x[(b * ci + i) * len..(b * ci + i + 1) * len];
                let dxrow = &mut dx[(b * ci + i) * len..(b * ci + i + 1) * len];
                for k in 0..kernel {
                    let wi = (o * ci + i) * kernel + k;
                    let wv = w[wi];
                    let (lo0, lo1) = tap_range(k, len, lout, stride, pad);
                    let mut acc = 0.0;
                    if stride == 1 {
                        let s = lo0 + k - pad;
                        let e = lo1 + k - pad;
                        let g = &dyrow[lo0..lo1];
                        for ((dxv, xv), gv) in dxrow[s..e].iter_mut().zip(&xrow[s..e]).zip(g) {
                            *dxv += wv * gv;
                            acc += gv * xv;
                        }
                    } else {
                        for lo in lo0..lo1 {
                            let li = lo * stride + k - pad;
                            dxrow[li] += wv * dyrow[lo];
                            acc += dyrow[lo] * xrow[li];
                        }
                    }
                    dw[wi] += acc;
                }
            }
        }
    }
}

/// Group normalization with per-channel affine. Writes `xhat` and the
/// per-(batch, group) inverse std for the backward pass.
#[allow(clippy::too_many_arguments)]
pub fn groupnorm_fwd(
    x: &[f64],
    batch: usize,
    c: usize,
    len: usize,
    groups: usize,
    gamma: &[f64],
    beta: &[f64],
    y: &mut [f64],
    xhat: &mut [f64],
    inv_std: &mut [f64],
) {
    let cpg = c / groups;
    let n = (cpg * len) as f64;
    for b in 0..batch {
        for g in 0..groups {
            let s = (b * c + g * cpg) * len;
            let e = s + cpg * len;
            let xs = &x[s..e];
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / sqrt(var + GN_EPS);
            inv_std[b * groups + g] = inv;
            for ch in 0..cpg {
                let cc = g * cpg + ch;
                let (gm, bt) = (gamma[cc], beta[cc]);
                let o = s + ch * len;
                for l in 0..len {
                    let h = (x[o + l] - mean) * inv;
                    xhat[o + l] = h;
                    y[o + l] = gm * h + bt;
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn groupnorm_bwd(
    xhat: &[f64],
    inv_std: &[f64],
    batch: usize,
    c: usize,
    len: usize,
    groups: usize,
    gamma: &[f64],
    dy: &[f64],
    dx: &mut [f64],
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) {
    let cpg = c / groups;
    let n = (cpg * len) as f64;
    for b in 0..batch {
        for g in 0..groups {
            let s = (b * c + g * cpg) * len;
            let inv = inv_std[b * groups + g];
            let mut sum_d = 0.0;
            let mut sum_dh = 0.0;
            for ch in 0..cpg {
                let cc = g * cpg + ch;
                let o = s + ch * len;
                for l in 0..len {
                    let gy = dy[o + l];
                    dbeta[cc] += gy;
                    dgamma[cc] += gy * xhat[o + l];
                    let d = gy * gamma[cc];
                    sum_d += d;
                    sum_dh += d * xhat[o + l];
                }
            }
            for ch in 0..cpg {
                let cc = g * cpg + ch;
                let o = s + ch * len;
                for l in 0..len {
                    let d = dy[o + l] * gamma[cc];
                    dx[o + l] += inv / n * (n * d - sum_d - xhat[o + l] * sum_dh);
                }
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

pub fn silu_fwd(x: &[f64], y: &mut [f64]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv = xv * sigmoid(xv);
    }
}

pub fn silu_bwd(x: &[f64], dy: &[f64], dx: &mut [f64]) {
    for ((d, &xv), &g) in dx.iter_mut().zip(x).zip(dy) {
        let s = sigmoid(xv);
        *d += g * s * (1.0 + xv * (1.0 - s));
    }
}

/// Average pooling by 2 along the last axis (`len` even).
pub fn down2_fwd(x: &[f64], rows: usize, len: usize, y: &mut [f64]) {
    let h = len / 2;
    for r in 0..rows {
        for l in 0..h {
            y[r * h + l] = 0.5 * (x[r * len + 2 * l] + x[r * len + 2 * l + 1]);
        }
    }
}

pub fn down2_bwd(rows: usize, len: usize, dy: &[f64], dx: &mut [f64]) {
    let h = len / 2;
    for r in 0..rows {
        for l in 0..h {
            let g = 0.5 * dy[r * h + l];
            dx[r * len + 2 * l] += g;
            dx[r * len + 2 * l + 1] += g;
        }
    }
}

/// Nearest-neighbour upsampling by 2 along the last axis.
pub fn up2_fwd(x: &[f64], rows: usize, len: usize, y: &mut [f64]) {
    for r in 0..rows {
        for l in 0..len {
            let v = x[r * len + l];
            y[r * 2 * len + 2 * l] = v;
            y[r * 2 * len + 2 * l + 1] = v;
        }
    }
}

pub fn up2_bwd(rows: usize, len: usize, dy: &[f64], dx: &mut [f64]) {
    for r in 0..rows {
        for l in 0..len {
            dx[r * len + l] += dy[r * 2 * len + 2 * l] + dy[r * 2 * len + 2 * l + 1];
        }
    }
}
