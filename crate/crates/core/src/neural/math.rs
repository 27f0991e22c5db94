//! Dense row-major matrix helpers for the model's forward and backward passes.

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `y = x W^T + b` with `W` stored as `out x in`.
pub fn linear(x: &Mat, weight: &[f64], bias: Option<&[f64]>, out: usize) -> Mat {
    debug_assert_eq!(weight.len(), out * x.cols);
    let mut y = Mat::zeros(x.rows, out);
    for i in 0..x.rows {
        let xi = x.row(i);
        let yi = y.row_mut(i);
        for (o, yo) in yi.iter_mut().enumerate() {
            *yo = dot(&weight[o * x.cols..(o + 1) * x.cols], xi);
        }
        if let Some(b) = bias {
            for (yo, bo) in yi.iter_mut().zip(b) {
                *yo += bo;
            }
        }
    }
    y
}

/// Backward of [`linear`]: accumulates `dW += dy^T x` and `db += sum(dy)`,
/// returns `dx = dy W`.
pub fn linear_backward(
    dy: &Mat,
    x: &Mat,
    weight: &[f64],
    dweight: &mut [f64],
    dbias: Option<&mut [f64]>,
) -> Mat {
    let (inp, out) = (x.cols, dy.cols);
    let mut dx = Mat::zeros(x.rows, inp);
    for i in 0..x.rows {
        let dyi = dy.row(i);
        let xi = x.row(i);
        let dxi = dx.row_mut(i);
        for (o, &g) in dyi.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            axpy(g, xi, &mut dweight[o * inp..(o + 1) * inp]);
            axpy(g, &weight[o * inp..(o + 1) * inp], dxi);
        }
    }
    if let Some(db) = dbias {
        for i in 0..dy.rows {
            for (b, g) in db.iter_mut().zip(dy.row(i)) {
                *b += g;
            }
        }
        debug_assert_eq!(db.len(), out);
    }
    dx
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

/// `-log softmax(row)[target]`, computed stably.
pub fn cross_entropy(row: &[f64], target: usize) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
    lse - row[target]
}

pub const LN_EPS: f64 = 1e-5;

/// Per-row statistics kept for the layer-norm backward pass.
#[derive(Debug, Clone)]
pub struct NormCache {
    pub xhat: Mat,
    pub inv_std: Vec<f64>,
}

pub fn layer_norm(x: &Mat, gain: &[f64], bias: &[f64]) -> (Mat, NormCache) {
    let d = x.cols as f64;
    let mut y = Mat::zeros(x.rows, x.cols);
    let mut xhat = Mat::zeros(x.rows, x.cols);
    let mut inv_std = Vec::with_capacity(x.rows);
    for i in 0..x.rows {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / d;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        inv_std.push(inv);
        let xh = xhat.row_mut(i);
        for (j, v) in row.iter().enumerate() {
            xh[j] = (v - mean) * inv;
        }
        let yi = y.row_mut(i);
        for j in 0..x.cols {
            yi[j] = gain[j] * xhat.data[i * x.cols + j] + bias[j];
        }
    }
    (y, NormCache { xhat, inv_std })
}

pub fn layer_norm_backward(
    dy: &Mat,
    cache: &NormCache,
    gain: &[f64],
    dgain: &mut [f64],
    dbias: &mut [f64],
) -> Mat {
    let cols = dy.cols;
    let d = cols as f64;
    let mut dx = Mat::zeros(dy.rows, cols);
    let mut dxhat = vec![0.0; cols];
    for i in 0..dy.rows {
        let dyi = dy.row(i);
        let xh = cache.xhat.row(i);
        for j in 0..cols {
            dgain[j] += dyi[j] * xh[j];
            dbias[j] += dyi[j];
            dxhat[j] = dyi[j] * gain[j];
        }
        let mean_dxhat = dxhat.iter().sum::<f64>() / d;
        let mean_dxhat_xhat = dot(&dxhat, xh) / d;
        let inv = cache.inv_std[i];
        let dxi = dx.row_mut(i);
        for j in 0..cols {
            dxi[j] = inv * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}
