//! Forward and backward rules for every differentiable operation.
//!
//! Backward functions take whatever the forward pass needs to keep (inputs or
//! outputs) plus the upstream gradient, and return one gradient per input with
//! the input's shape.

use super::rng::Rng;
use super::tensor::Tensor;
use crate::error::{Error, Result};

fn check_finite(op: &'static str, x: &Tensor) -> Result<()> {
    if x.data().iter().any(|v| v.is_nan()) {
        return Err(Error::NumericInput { op });
    }
    Ok(())
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2("matmul")?;
    let (k2, n) = b.dims2("matmul")?;
    if k != k2 {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = ad[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

/// `dA = dC·Bᵀ`, `dB = Aᵀ·dC`.
pub fn matmul_backward(a: &Tensor, b: &Tensor, grad: &Tensor) -> (Tensor, Tensor) {
    let bt = transpose(b).expect("rank-2");
    let at = transpose(a).expect("rank-2");
    (
        matmul(grad, &bt).expect("shapes checked in forward"),
        matmul(&at, grad).expect("shapes checked in forward"),
    )
}

pub fn transpose(a: &Tensor) -> Result<Tensor> {
    let (m, n) = a.dims2("transpose")?;
    let d = a.data();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = d[i * n + j];
        }
    }
    Tensor::new(vec![n, m], out)
}

/// Splits `shape` around `axis` into (outer, extent, inner) strides.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Numerically stable softmax along `axis` (max subtracted per slice).
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= x.rank() {
        return Err(Error::Config(format!("softmax axis {axis} out of range for {:?}", x.shape())));
    }
    check_finite("softmax", x)?;
    let (outer, n, inner) = axis_split(x.shape(), axis);
    let mut y = x.clone();
    let d = y.data_mut();
    for o in 0..outer {
        for i in 0..inner {
            let idx = |j: usize| (o * n + j) * inner + i;
            let max = (0..n).map(|j| d[idx(j)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for j in 0..n {
                let e = (d[idx(j)] - max).exp();
                d[idx(j)] = e;
                total += e;
            }
            for j in 0..n {
                d[idx(j)] /= total;
            }
        }
    }
    Ok(y)
}

/// Given the softmax output `y`: `dx = y ⊙ (g − Σ g⊙y)` per slice.
pub fn softmax_backward(y: &Tensor, axis: usize, grad: &Tensor) -> Tensor {
    let (outer, n, inner) = axis_split(y.shape(), axis);
    let (yd, gd) = (y.data(), grad.data());
    let mut dx = Tensor::zeros(y.shape());
    let out = dx.data_mut();
    for o in 0..outer {
        for i in 0..inner {
            let idx = |j: usize| (o * n + j) * inner + i;
            let dot: f64 = (0..n).map(|j| yd[idx(j)] * gd[idx(j)]).sum();
            for j in 0..n {
                out[idx(j)] = yd[idx(j)] * (gd[idx(j)] - dot);
            }
        }
    }
    dx
}

/// Normalises each row of `x[T×d]` to zero mean and unit variance, then
/// applies `gain` and `bias`.
pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
    let (t, d) = x.dims2("layer_norm")?;
    if gain.shape() != [d] || bias.shape() != [d] {
        return Err(Error::shape("layer_norm", x.shape(), gain.shape()));
    }
    let mut out = vec![0.0; t * d];
    for r in 0..t {
        let row = x.row(r);
        let (mean, inv_std) = row_stats(row, eps);
        for j in 0..d {
            out[r * d + j] = (row[j] - mean) * inv_std * gain.data()[j] + bias.data()[j];
        }
    }
    Tensor::new(vec![t, d], out)
}

fn row_stats(row: &[f64], eps: f64) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + eps).sqrt())
}

/// Returns `(dx, dgain, dbias)`.
pub fn layer_norm_backward(x: &Tensor, gain: &Tensor, eps: f64, grad: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (t, d) = (x.shape()[0], x.shape()[1]);
    let mut dx = vec![0.0; t * d];
    let mut dgain = vec![0.0; d];
    let mut dbias = vec![0.0; d];
    let g = gain.data();
    let n = d as f64;
    for r in 0..t {
        let row = x.row(r);
        let up = grad.row(r);
        let (mean, inv_std) = row_stats(row, eps);
        let xhat: Vec<f64> = row.iter().map(|v| (v - mean) * inv_std).collect();
        let dxhat: Vec<f64> = (0..d).map(|j| up[j] * g[j]).collect();
        let sum_dxhat: f64 = dxhat.iter().sum();
        let sum_dxhat_xhat: f64 = dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum();
        for j in 0..d {
            dgain[j] += up[j] * xhat[j];
            dbias[j] += up[j];
            dx[r * d + j] = inv_std / n * (n * dxhat[j] - sum_dxhat - xhat[j] * sum_dxhat_xhat);
        }
    }
    (
        Tensor::new(vec![t, d], dx).expect("shape"),
        Tensor::vector(dgain),
        Tensor::vector(dbias),
    )
}

/// Adds `v[N]` to every row of `x[M×N]`.
pub fn add_row_broadcast(x: &Tensor, v: &Tensor) -> Result<Tensor> {
    let (_, n) = x.dims2("add_row_broadcast")?;
    if v.shape() != [n] {
        return Err(Error::shape("add_row_broadcast", x.shape(), v.shape()));
    }
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(n) {
        for (o, b) in row.iter_mut().zip(v.data()) {
            *o += b;
        }
    }
    Ok(out)
}

/// Column sums of the upstream gradient: the broadcast vector's gradient.
pub fn sum_rows(grad: &Tensor) -> Tensor {
    let n = grad.shape()[grad.rank() - 1];
    let mut out = vec![0.0; n];
    for row in grad.data().chunks(n) {
        for (o, g) in out.iter_mut().zip(row) {
            *o += g;
        }
    }
    Tensor::vector(out)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::shape("add", a.shape(), b.shape()));
    }
    Ok(a.zip_map(b, |x, y| x + y))
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::shape("mul", a.shape(), b.shape()));
    }
    Ok(a.zip_map(b, |x, y| x * y))
}

pub fn scale(x: &Tensor, factor: f64) -> Tensor {
    x.map(|v| v * factor)
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

pub fn relu_backward(x: &Tensor, grad: &Tensor) -> Tensor {
    x.zip_map(grad, |v, g| if v > 0.0 { g } else { 0.0 })
}

pub fn tanh(x: &Tensor) -> Tensor {
    x.map(f64::tanh)
}

/// Uses the forward output `y = tanh(x)`.
pub fn tanh_backward(y: &Tensor, grad: &Tensor) -> Tensor {
    y.zip_map(grad, |v, g| (1.0 - v * v) * g)
}

/// Per-time-step linear map `out[t] = x[t]·w + b` (kernel width 1 in time).
pub fn conv1d_pointwise(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    add_row_broadcast(&matmul(x, w)?, b)
}

/// Returns `(dx, dw, db)`.
pub fn conv1d_pointwise_backward(x: &Tensor, w: &Tensor, grad: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (dx, dw) = matmul_backward(x, w, grad);
    (dx, dw, sum_rows(grad))
}

fn conv2d_dims(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<[usize; 6]> {
    let (&[h, wd, cin], &[kh, kw, cin2, cout]) = (x.shape(), w.shape()) else {
        return Err(Error::shape("conv2d_same", x.shape(), w.shape()));
    };
    if cin != cin2 || b.shape() != [cout] {
        return Err(Error::shape("conv2d_same", x.shape(), w.shape()));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::Config(format!("conv2d kernel extents must be odd, got {kh}×{kw}")));
    }
    Ok([h, wd, cin, kh, kw, cout])
}

/// Stride-1 2-D convolution (cross-correlation) with symmetric zero padding
/// so that the spatial extents are preserved.
pub fn conv2d_same(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let [h, wd, cin, kh, kw, cout] = conv2d_dims(x, w, b)?;
    let (ph, pw) = (kh / 2, kw / 2);
    let (xd, wdat) = (x.data(), w.data());
    let mut out = vec![0.0; h * wd * cout];
    for i in 0..h {
        for j in 0..wd {
            let o = &mut out[(i * wd + j) * cout..(i * wd + j + 1) * cout];
            o.copy_from_slice(b.data());
            for di in 0..kh {
                let Some(si) = (i + di).checked_sub(ph).filter(|&s| s < h) else { continue };
                for dj in 0..kw {
                    let Some(sj) = (j + dj).checked_sub(pw).filter(|&s| s < wd) else { continue };
                    for c in 0..cin {
                        let xv = xd[(si * wd + sj) * cin + c];
                        let wrow = &wdat[((di * kw + dj) * cin + c) * cout..][..cout];
                        for (ov, wv) in o.iter_mut().zip(wrow) {
                            *ov += xv * wv;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![h, wd, cout], out)
}

/// Returns `(dx, dw, db)`.
pub fn conv2d_same_backward(x: &Tensor, w: &Tensor, grad: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (h, wd, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (kh, kw, cout) = (w.shape()[0], w.shape()[1], w.shape()[3]);
    let (ph, pw) = (kh / 2, kw / 2);
    let (xd, wdat, gd) = (x.data(), w.data(), grad.data());
    let mut dx = vec![0.0; xd.len()];
    let mut dw = vec![0.0; wdat.len()];
    let mut db = vec![0.0; cout];
    for i in 0..h {
        for j in 0..wd {
            let g = &gd[(i * wd + j) * cout..][..cout];
            for (d, gv) in db.iter_mut().zip(g) {
                *d += gv;
            }
            for di in 0..kh {
                let Some(si) = (i + di).checked_sub(ph).filter(|&s| s < h) else { continue };
                for dj in 0..kw {
                    let Some(sj) = (j + dj).checked_sub(pw).filter(|&s| s < wd) else { continue };
                    for c in 0..cin {
                        let xi = (si * wd + sj) * cin + c;
                        let wi = ((di * kw + dj) * cin + c) * cout;
                        let mut acc = 0.0;
                        for k in 0..cout {
                            acc += wdat[wi + k] * g[k];
                            dw[wi + k] += xd[xi] * g[k];
                        }
                        dx[xi] += acc;
                    }
                }
            }
        }
    }
    (
        Tensor::new(x.shape().to_vec(), dx).expect("shape"),
        Tensor::new(w.shape().to_vec(), dw).expect("shape"),
        Tensor::vector(db),
    )
}

/// Inverted dropout. Returns the output and the multiplicative mask
/// (`0` or `1/(1−rate)`), which is also the backward rule.
pub fn dropout(x: &Tensor, rate: f64, rng: &mut Rng, training: bool) -> Result<(Tensor, Option<Tensor>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    if !training || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask = Tensor::from_fn(x.shape(), |_| if rng.uniform() < rate { 0.0 } else { keep });
    Ok((mul(x, &mask)?, Some(mask)))
}

/// Concatenates rank-2 tensors with equal row counts along columns.
pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
    let rows = parts.first().ok_or_else(|| Error::Config("concat of nothing".into()))?.shape()[0];
    let mut widths = Vec::with_capacity(parts.len());
    for p in parts {
        let (r, c) = p.dims2("concat_cols")?;
        if r != rows {
            return Err(Error::shape("concat_cols", parts[0].shape(), p.shape()));
        }
        widths.push(c);
    }
    let total: usize = widths.iter().sum();
    let mut out = Vec::with_capacity(rows * total);
    for r in 0..rows {
        for p in parts {
            out.extend_from_slice(p.row(r));
        }
    }
    Tensor::new(vec![rows, total], out)
}

/// Splits the gradient of a column concatenation back into its parts.
pub fn split_cols(grad: &Tensor, widths: &[usize]) -> Vec<Tensor> {
    let rows = grad.shape()[0];
    let mut offset = 0;
    widths
        .iter()
        .map(|&w| {
            let mut data = Vec::with_capacity(rows * w);
            for r in 0..rows {
                data.extend_from_slice(&grad.row(r)[offset..offset + w]);
            }
            offset += w;
            Tensor::new(vec![rows, w], data).expect("shape")
        })
        .collect()
}
