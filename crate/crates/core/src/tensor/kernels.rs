//! Slice-level numeric kernels shared by the eager tensor functions and the graph.

pub const LAYER_NORM_EPS: f64 = 1e-5;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// `c = op(a) * op(b) + beta * c` for row-major operands, where `op(a)` is `m x k`
/// and `op(b)` is `k x n`. A transposed flag means the operand is stored as the
/// transpose of its logical shape.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    beta: f64,
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if a_trans { (1, m) } else { (k, 1) };
    let (rsb, csb) = if b_trans { (1, k) } else { (n, 1) };
    // SAFETY: the asserts above guarantee every strided access stays inside
    // `a`, `b` and `c`; `c` is uniquely borrowed and does not alias the inputs.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Softmax over the middle axis of an `(outer, len, inner)` view.
pub fn softmax_axis(x: &[f64], outer: usize, len: usize, inner: usize) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| o * len * inner + j * inner + i;
            let max = (0..len).map(|j| x[at(j)]).fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for j in 0..len {
                let e = (x[at(j)] - max).exp();
                y[at(j)] = e;
                sum += e;
            }
            for j in 0..len {
                y[at(j)] /= sum;
            }
        }
    }
    y
}

/// Row softmax restricted to entries where `allowed` is true; the rest get weight 0.
/// Returns `None` if some row has no allowed entry. Non-finite scores give
/// NaN rows rather than an error.
pub fn masked_softmax_rows(x: &[f64], cols: usize, allowed: &[bool]) -> Option<Vec<f64>> {
    let mut y = vec![0.0; x.len()];
    for (r, (xr, yr)) in x.chunks(cols).zip(y.chunks_mut(cols)).enumerate() {
        let ar = &allowed[r * cols..(r + 1) * cols];
        if !ar.iter().any(|&a| a) {
            return None;
        }
        let max = xr
            .iter()
            .zip(ar)
            .filter(|(_, &a)| a)
            .map(|(v, _)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for ((yv, xv), &a) in yr.iter_mut().zip(xr).zip(ar) {
            if a {
                *yv = (xv - max).exp();
                sum += *yv;
            }
        }
        yr.iter_mut().for_each(|v| *v /= sum);
    }
    Some(y)
}

/// Backward of a softmax slice: `dx = y * (dy - sum(dy * y))` along the axis.
pub fn softmax_backward(
    y: &[f64],
    dy: &[f64],
    dx: &mut [f64],
    outer: usize,
    len: usize,
    inner: usize,
) {
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| o * len * inner + j * inner + i;
            let dot: f64 = (0..len).map(|j| dy[at(j)] * y[at(j)]).sum();
            for j in 0..len {
                dx[at(j)] += y[at(j)] * (dy[at(j)] - dot);
            }
        }
    }
}

/// Normalizes each row of width `cols`; returns `(y, xhat, rstd)`.
pub fn layer_norm_rows(
    x: &[f64],
    cols: usize,
    gamma: &[f64],
    beta: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let rows = x.len() / cols;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut rstd = vec![0.0; rows];
    for r in 0..rows {
        let xr = &x[r * cols..(r + 1) * cols];
        let mean = xr.iter().sum::<f64>() / cols as f64;
        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
        let rs = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        rstd[r] = rs;
        for c in 0..cols {
            let h = (xr[c] - mean) * rs;
            xhat[r * cols + c] = h;
            y[r * cols + c] = h * gamma[c] + beta[c];
        }
    }
    (y, xhat, rstd)
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}
