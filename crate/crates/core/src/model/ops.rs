//! Dense row-major kernels used by both classifiers.

/// `out[r] += x[r] · w` for `x: rows × inner`, `w: inner × cols`.
pub(crate) fn matmul_acc(x: &[f64], rows: usize, inner: usize, w: &[f64], cols: usize, out: &mut [f64]) {
    debug_assert_eq!(x.len(), rows * inner);
    debug_assert_eq!(w.len(), inner * cols);
    debug_assert_eq!(out.len(), rows * cols);
    for r in 0..rows {
        let o = &mut out[r * cols..(r + 1) * cols];
        for (k, &xv) in x[r * inner..(r + 1) * inner].iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            for (ov, &wv) in o.iter_mut().zip(&w[k * cols..(k + 1) * cols]) {
                *ov += xv * wv;
            }
        }
    }
}

/// `x · w + b` broadcast over rows.
pub(crate) fn linear(x: &[f64], rows: usize, inner: usize, w: &[f64], b: &[f64], cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        out.extend_from_slice(b);
    }
    matmul_acc(x, rows, inner, w, cols, &mut out);
    out
}

/// Backward of [`linear`]: accumulates `dw`, `db` and returns `dx`.
pub(crate) fn linear_backward(
    x: &[f64],
    rows: usize,
    inner: usize,
    w: &[f64],
    cols: usize,
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let mut dx = vec![0.0; rows * inner];
    for r in 0..rows {
        let dyr = &dy[r * cols..(r + 1) * cols];
        for (bv, &g) in db.iter_mut().zip(dyr) {
            *bv += g;
        }
        let xr = &x[r * inner..(r + 1) * inner];
        let dxr = &mut dx[r * inner..(r + 1) * inner];
        for k in 0..inner {
            let wk = &w[k * cols..(k + 1) * cols];
            dxr[k] = dot(dyr, wk);
            let xv = xr[k];
            if xv != 0.0 {
                for (dwv, &g) in dw[k * cols..(k + 1) * cols].iter_mut().zip(dyr) {
                    *dwv += xv * g;
                }
            }
        }
    }
    dx
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) const LN_EPS: f64 = 1e-5;

pub(crate) struct LayerNormCache {
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
}

pub(crate) fn layer_norm(x: &[f64], rows: usize, dim: usize, gain: &[f64], bias: &[f64]) -> (Vec<f64>, LayerNormCache) {
    let mut y = vec![0.0; rows * dim];
    let mut xhat = vec![0.0; rows * dim];
    let mut inv_std = vec![0.0; rows];
    for r in 0..rows {
        let xr = &x[r * dim..(r + 1) * dim];
        let mean = xr.iter().sum::<f64>() / dim as f64;
        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / dim as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std[r] = is;
        for c in 0..dim {
            let h = (xr[c] - mean) * is;
            xhat[r * dim + c] = h;
            y[r * dim + c] = h * gain[c] + bias[c];
        }
    }
    (y, LayerNormCache { xhat, inv_std })
}

pub(crate) fn layer_norm_backward(
    cache: &LayerNormCache,
    rows: usize,
    dim: usize,
    gain: &[f64],
    dy: &[f64],
    dgain: &mut [f64],
    dbias: &mut [f64],
) -> Vec<f64> {
    let mut dx = vec![0.0; rows * dim];
    let n = dim as f64;
    for r in 0..rows {
        let xh = &cache.xhat[r * dim..(r + 1) * dim];
        let dyr = &dy[r * dim..(r + 1) * dim];
        let mut sum_g = 0.0;
        let mut sum_gx = 0.0;
        for c in 0..dim {
            dgain[c] += dyr[c] * xh[c];
            dbias[c] += dyr[c];
            let g = dyr[c] * gain[c];
            sum_g += g;
            sum_gx += g * xh[c];
        }
        let is = cache.inv_std[r];
        for c in 0..dim {
            let g = dyr[c] * gain[c];
            dx[r * dim + c] = is * (g - sum_g / n - xh[c] * sum_gx / n);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Tanh approximation of GELU.
pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Numerically stable two-class softmax.
pub(crate) fn softmax2(z: [f64; 2]) -> [f64; 2] {
    let m = z[0].max(z[1]);
    let e0 = (z[0] - m).exp();
    let e1 = (z[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in row.iter_mut() {
        *v /= s;
    }
}
