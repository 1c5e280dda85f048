//! Batch kernels over feature-major activations.
//!
//! Activations for a batch of `b` samples are stored `width × b`, so every
//! weight touches two contiguous length-`b` rows. Masked weights are never
//! visited: the active positions of each layer are compiled into a CSR-style
//! index once per mask and reused for every step.
//!
//! All reductions run in a fixed order, so results are bit-reproducible for a
//! given build.

use ndarray::Array2;

/// Unmasked positions of one layer, indexed by output row (CSR) and by input
/// column (CSC). Positions are flat offsets into the row-major weight matrix.
#[derive(Debug, Clone)]
pub(crate) struct ActiveSet {
    fan_in: usize,
    row_start: Vec<usize>,
    cols: Vec<u32>,
    col_start: Vec<usize>,
    col_rows: Vec<u32>,
    col_pos: Vec<u32>,
    dense: bool,
}

/// Layers at or above this fraction of unmasked weights use the GEMM path.
pub(crate) const DENSE_THRESHOLD: f64 = 0.2;

impl ActiveSet {
    pub(crate) fn from_mask(mask: &Array2<bool>) -> Self {
        let (rows, fan_in) = mask.dim();
        let mut row_start = Vec::with_capacity(rows + 1);
        let mut cols = Vec::new();
        row_start.push(0);
        for row in mask.rows() {
            cols.extend(row.iter().enumerate().filter(|(_, &m)| m).map(|(j, _)| j as u32));
            row_start.push(cols.len());
        }
        let mut col_start = Vec::with_capacity(fan_in + 1);
        let mut col_rows = Vec::with_capacity(cols.len());
        let mut col_pos = Vec::with_capacity(cols.len());
        col_start.push(0);
        for (j, col) in mask.columns().into_iter().enumerate() {
            for (p, &m) in col.iter().enumerate() {
                if m {
                    col_rows.push(p as u32);
                    col_pos.push((p * fan_in + j) as u32);
                }
            }
            col_start.push(col_rows.len());
        }
        let total = rows * fan_in;
        let dense = total > 0 && cols.len() as f64 >= DENSE_THRESHOLD * total as f64;
        ActiveSet { fan_in, row_start, cols, col_start, col_rows, col_pos, dense }
    }

    #[inline]
    pub(crate) fn row(&self, p: usize) -> &[u32] {
        &self.cols[self.row_start[p]..self.row_start[p + 1]]
    }

    pub(crate) fn is_dense(&self) -> bool {
        self.dense
    }
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Dot product with eight interleaved partial sums (fixed combination order).
#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let xc = x.chunks_exact(8);
    let yc = y.chunks_exact(8);
    let (xt, yt) = (xc.remainder(), yc.remainder());
    for (a, b) in xc.zip(yc) {
        for k in 0..8 {
            acc[k] += a[k] * b[k];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (a, b) in xt.iter().zip(yt) {
        s += a * b;
    }
    s
}

#[inline]
fn sum(x: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let xc = x.chunks_exact(8);
    let xt = xc.remainder();
    for a in xc {
        for k in 0..8 {
            acc[k] += a[k];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for a in xt {
        s += a;
    }
    s
}

const LANES: usize = 32;

/// `out[s] = init + Σ_k coef(k) · src[index[k]·b + s]`, summed in list order.
///
/// The batch is walked in register-sized chunks so the running sums stay in
/// registers while the source rows stream past.
#[inline]
fn combine_rows(out: &mut [f64], init: f64, index: &[u32], coef: impl Fn(usize) -> f64, src: &[f64], b: usize) {
    let mut start = 0;
    while start + LANES <= b {
        let mut acc = [init; LANES];
        for (k, &r) in index.iter().enumerate() {
            let c = coef(k);
            let row = &src[r as usize * b + start..r as usize * b + start + LANES];
            for l in 0..LANES {
                acc[l] += c * row[l];
            }
        }
        out[start..start + LANES].copy_from_slice(&acc);
        start += LANES;
    }
    if start < b {
        let tail = &mut out[start..b];
        tail.fill(init);
        for (k, &r) in index.iter().enumerate() {
            let row = &src[r as usize * b + start..(r as usize + 1) * b];
            axpy(coef(k), row, tail);
        }
    }
}

#[allow(clippy::too_many_arguments)]
unsafe fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: *const f64,
    rsa: usize,
    csa: usize,
    b: *const f64,
    rsb: usize,
    csb: usize,
    c: *mut f64,
    rsc: usize,
) {
    matrixmultiply::dgemm(m, k, n, 1.0, a, rsa as isize, csa as isize, b, rsb as isize, csb as isize, 0.0, c, rsc as isize, 1);
}

/// `z = W·a_prev + bias`. Masked weights are stored as zero, so the GEMM
/// path and the sparse path compute the same function.
pub(crate) fn forward_layer(
    weights: &[f64],
    active: &ActiveSet,
    fan_in: usize,
    bias: &[f64],
    a_prev: &[f64],
    z: &mut [f64],
    b: usize,
) {
    let fan_out = bias.len();
    debug_assert_eq!(fan_in, active.fan_in);
    if active.is_dense() {
        // SAFETY: all three buffers hold exactly the strided extents passed.
        unsafe {
            gemm(fan_out, fan_in, b, weights.as_ptr(), fan_in, 1, a_prev.as_ptr(), b, 1, z.as_mut_ptr(), b);
        }
        for (zrow, &bp) in z.chunks_exact_mut(b).zip(bias) {
            for v in zrow {
                *v += bp;
            }
        }
    } else {
        for (p, zrow) in z.chunks_exact_mut(b).enumerate() {
            let base = p * fan_in;
            let cols = active.row(p);
            combine_rows(zrow, bias[p], cols, |k| weights[base + cols[k] as usize], a_prev, b);
        }
    }
}

pub(crate) fn relu_in_place(z: &mut [f64]) {
    for v in z {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Backward pass of one layer given `dz` (`fan_out × b`).
///
/// Writes the weight gradient (zero at every masked position), the bias
/// gradient, and optionally the gradient with respect to the layer input.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward_layer(
    weights: &[f64],
    mask: &[bool],
    active: &ActiveSet,
    fan_in: usize,
    dz: &[f64],
    a_prev: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    da_prev: Option<&mut [f64]>,
    b: usize,
) {
    let fan_out = grad_b.len();
    for (p, dzrow) in dz.chunks_exact(b).enumerate() {
        grad_b[p] = sum(dzrow);
    }
    if active.is_dense() {
        // SAFETY: extents match the strides; a_prev is read transposed.
        unsafe {
            gemm(fan_out, b, fan_in, dz.as_ptr(), b, 1, a_prev.as_ptr(), 1, b, grad_w.as_mut_ptr(), fan_in);
        }
        for (g, &m) in grad_w.iter_mut().zip(mask) {
            if !m {
                *g = 0.0;
            }
        }
        if let Some(da) = da_prev {
            // SAFETY: W is read transposed; da is fan_in × b.
            unsafe {
                gemm(fan_in, fan_out, b, weights.as_ptr(), 1, fan_in, dz.as_ptr(), b, 1, da.as_mut_ptr(), b);
            }
        }
    } else {
        for (p, dzrow) in dz.chunks_exact(b).enumerate() {
            let base = p * fan_in;
            for &j in active.row(p) {
                let j = j as usize;
                grad_w[base + j] = dot(dzrow, &a_prev[j * b..(j + 1) * b]);
            }
        }
        if let Some(da) = da_prev {
            for (j, darow) in da.chunks_exact_mut(b).enumerate() {
                let (lo, hi) = (active.col_start[j], active.col_start[j + 1]);
                let rows = &active.col_rows[lo..hi];
                let pos = &active.col_pos[lo..hi];
                combine_rows(darow, 0.0, rows, |k| weights[pos[k] as usize], dz, b);
            }
        }
    }
}

/// Mask the upstream gradient by the ReLU derivative; `a` is the post-activation.
pub(crate) fn relu_backward(da: &mut [f64], a: &[f64]) {
    for (g, &v) in da.iter_mut().zip(a) {
        if v <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Softmax cross-entropy over a `classes × b` logit block.
///
/// Returns `(summed loss, correct argmax count)` and writes the gradient of
/// the *mean* loss into `dlogits`. Argmax ties resolve to the lower class.
pub(crate) fn softmax_xent(logits: &[f64], labels: &[u8], classes: usize, dlogits: &mut [f64], b: usize) -> (f64, usize) {
    let mut loss = 0.0;
    let mut correct = 0;
    let inv_b = 1.0 / b as f64;
    for s in 0..b {
        let mut max = f64::NEG_INFINITY;
        let mut arg = 0;
        for c in 0..classes {
            let v = logits[c * b + s];
            if v > max {
                max = v;
                arg = c;
            }
        }
        let mut denom = 0.0;
        for c in 0..classes {
            denom += (logits[c * b + s] - max).exp();
        }
        let y = labels[s] as usize;
        loss += denom.ln() - (logits[y * b + s] - max);
        if arg == y {
            correct += 1;
        }
        for c in 0..classes {
            let prob = (logits[c * b + s] - max).exp() / denom;
            let target = if c == y { 1.0 } else { 0.0 };
            dlogits[c * b + s] = (prob - target) * inv_b;
        }
    }
    (loss, correct)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive_sum_on_integers() {
        let x: Vec<f64> = (0..21).map(f64::from).collect();
        let y: Vec<f64> = (0..21).map(|i| f64::from(i % 3)).collect();
        let naive: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        assert_eq!(dot(&x, &y), naive);
        assert_eq!(sum(&x), 210.0);
    }

    #[test]
    fn active_set_lists_unmasked_columns() {
        let mask = Array2::from_shape_vec((2, 3), vec![true, false, true, false, false, true]).unwrap();
        let act = ActiveSet::from_mask(&mask);
        assert_eq!(act.row(0), &[0, 2]);
        assert_eq!(act.row(1), &[2]);
        assert_eq!(act.col_rows, vec![0, 0, 1]);
        assert_eq!(act.col_pos, vec![0, 2, 5]);
        assert!(act.is_dense());
    }

    #[test]
    fn combine_rows_handles_partial_chunks() {
        let b = LANES + 3;
        let src: Vec<f64> = (0..3 * b).map(|i| i as f64).collect();
        let mut out = vec![0.0; b];
        combine_rows(&mut out, 1.0, &[2, 0], |k| [2.0, -1.0][k], &src, b);
        for s in 0..b {
            assert_eq!(out[s], 1.0 + 2.0 * (2 * b + s) as f64 - s as f64);
        }
    }
}
