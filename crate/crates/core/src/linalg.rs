//! Dense row-major matrices, sparse-dense products and the hand-written
//! forward/backward pairs used by the encoder and losses.
//!
//! All kernels accumulate in a fixed order, so identical inputs give
//! bitwise-identical outputs. Dense products go through `matrixmultiply`
//! unless the left operand is mostly zeros (bag-of-words features), in which
//! case a zero-skipping row kernel is used.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SparseMatrix;
use crate::math;

/// Rows with norm below this are divided by it instead.
pub const NORM_EPS: f64 = 1e-12;

/// Left operands with at most this fraction of nonzeros use the sparse row kernel.
const SPARSE_LEFT_DENSITY: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                op: "from_vec",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Panics on ragged input; meant for literals in tests and fixtures.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Rows gathered by index.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, other: &DenseMatrix, alpha: f64) -> Result<()> {
        self.check_same_shape(other, "add_scaled")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|x| *x *= alpha);
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn check_same_shape(&self, other: &DenseMatrix, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    fn nonzero_fraction(&self) -> f64 {
        if self.data.is_empty() {
            return 1.0;
        }
        self.data.iter().filter(|&&x| x != 0.0).count() as f64 / self.data.len() as f64
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    math::sqrt(dot(a, a))
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Operand layout for [`gemm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trans {
    No,
    Yes,
}

/// `c = alpha * op(a) * op(b) + beta * c`.
pub fn gemm(
    alpha: f64,
    a: &DenseMatrix,
    ta: Trans,
    b: &DenseMatrix,
    tb: Trans,
    beta: f64,
    c: &mut DenseMatrix,
) -> Result<()> {
    let (m, k) = match ta {
        Trans::No => (a.rows, a.cols),
        Trans::Yes => (a.cols, a.rows),
    };
    let (kb, n) = match tb {
        Trans::No => (b.rows, b.cols),
        Trans::Yes => (b.cols, b.rows),
    };
    if k != kb {
        return Err(Error::ShapeMismatch {
            op: "gemm",
            left: (m, k),
            right: (kb, n),
        });
    }
    if c.shape() != (m, n) {
        return Err(Error::ShapeMismatch {
            op: "gemm output",
            left: (m, n),
            right: c.shape(),
        });
    }
    if m == 0 || n == 0 {
        return Ok(());
    }
    if k == 0 {
        c.scale(beta);
        return Ok(());
    }
    if tb == Trans::No && a.nonzero_fraction() <= SPARSE_LEFT_DENSITY {
        sparse_left_gemm(alpha, a, ta, b, beta, c);
        return Ok(());
    }
    let (rsa, csa) = match ta {
        Trans::No => (a.cols as isize, 1),
        Trans::Yes => (1, a.cols as isize),
    };
    let (rsb, csb) = match tb {
        Trans::No => (b.cols as isize, 1),
        Trans::Yes => (1, b.cols as isize),
    };
    // SAFETY: shapes and strides were checked above against the owned buffers.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
    Ok(())
}

/// `c = alpha · a · b + beta · c` over raw row-major storage: `a` is `m × k`
/// with strides `sa`, `b` is `k × n` with strides `sb`, and `c` has row stride
/// `rsc` and unit column stride. Panics if a stride pattern leaves its slice.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_strided(
    (m, k, n): (usize, usize, usize),
    alpha: f64,
    a: &[f64],
    sa: (usize, usize),
    b: &[f64],
    sb: (usize, usize),
    beta: f64,
    c: &mut [f64],
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for i in 0..m {
            c[i * rsc..i * rsc + n].iter_mut().for_each(|x| *x *= beta);
        }
        return;
    }
    let last = |rows: usize, cols: usize, (rs, cs): (usize, usize)| (rows - 1) * rs + (cols - 1) * cs;
    assert!(last(m, k, sa) < a.len(), "gemm_strided: a out of bounds");
    assert!(last(k, n, sb) < b.len(), "gemm_strided: b out of bounds");
    assert!(last(m, n, (rsc, 1)) < c.len(), "gemm_strided: c out of bounds");
    // SAFETY: every addressed element was bounds-checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            sa.0 as isize,
            sa.1 as isize,
            b.as_ptr(),
            sb.0 as isize,
            sb.1 as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

/// Row-axpy product skipping zero entries of `a`.
fn sparse_left_gemm(
    alpha: f64,
    a: &DenseMatrix,
    ta: Trans,
    b: &DenseMatrix,
    beta: f64,
    c: &mut DenseMatrix,
) {
    if beta == 0.0 {
        c.fill(0.0);
    } else if beta != 1.0 {
        c.scale(beta);
    }
    let n = b.cols;
    match ta {
        Trans::No => {
            for i in 0..a.rows {
                let out = &mut c.data[i * n..(i + 1) * n];
                for (kk, &aik) in a.row(i).iter().enumerate() {
                    if aik != 0.0 {
                        axpy(alpha * aik, b.row(kk), out);
                    }
                }
            }
        }
        Trans::Yes => {
            // c[k, :] += a[i, k] * b[i, :]
            for i in 0..a.rows {
                let brow = b.row(i);
                for (kk, &aik) in a.row(i).iter().enumerate() {
                    if aik != 0.0 {
                        axpy(alpha * aik, brow, &mut c.data[kk * n..(kk + 1) * n]);
                    }
                }
            }
        }
    }
}

/// `a * b`.
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    let mut c = DenseMatrix::zeros(a.rows, b.cols);
    gemm(1.0, a, Trans::No, b, Trans::No, 0.0, &mut c)?;
    Ok(c)
}

/// `aᵀ * b`.
pub fn matmul_tn(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    let mut c = DenseMatrix::zeros(a.cols, b.cols);
    gemm(1.0, a, Trans::Yes, b, Trans::No, 0.0, &mut c)?;
    Ok(c)
}

/// `a * bᵀ`.
pub fn matmul_nt(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    let mut c = DenseMatrix::zeros(a.rows, b.rows);
    gemm(1.0, a, Trans::No, b, Trans::Yes, 0.0, &mut c)?;
    Ok(c)
}

/// CSR times dense; each output row sums in ascending column order.
pub fn spmm(a: &SparseMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    if a.num_cols() != x.rows {
        return Err(Error::ShapeMismatch {
            op: "spmm",
            left: (a.num_rows(), a.num_cols()),
            right: x.shape(),
        });
    }
    let mut out = DenseMatrix::zeros(a.num_rows(), x.cols);
    for r in 0..a.num_rows() {
        let dst = out.row_mut(r);
        for (c, v) in a.row(r) {
            axpy(v, x.row(c), dst);
        }
    }
    Ok(out)
}

/// Output and saved norms of a row normalization.
#[derive(Debug, Clone)]
pub struct NormalizedRows {
    pub output: DenseMatrix,
    /// Clamped norms, `max(‖x_i‖, NORM_EPS)`.
    pub norms: Vec<f64>,
}

impl NormalizedRows {
    /// `dx_i = (g_i - y_i (y_i·g_i)) / n_i`.
    pub fn backward(&self, upstream: &DenseMatrix) -> Result<DenseMatrix> {
        if upstream.shape() != self.output.shape() {
            return Err(Error::ShapeMismatch {
                op: "l2_normalize_rows backward",
                left: self.output.shape(),
                right: upstream.shape(),
            });
        }
        let mut dx = upstream.clone();
        for i in 0..dx.rows {
            let y = self.output.row(i);
            let proj = dot(y, upstream.row(i));
            let inv = 1.0 / self.norms[i];
            for (d, &yj) in dx.row_mut(i).iter_mut().zip(y) {
                *d = (*d - yj * proj) * inv;
            }
        }
        Ok(dx)
    }
}

/// Divides each row by `max(‖row‖₂, NORM_EPS)`.
pub fn l2_normalize_rows(x: &DenseMatrix) -> NormalizedRows {
    let mut output = x.clone();
    let mut norms = Vec::with_capacity(x.rows);
    for i in 0..x.rows {
        let n = norm(x.row(i)).max(NORM_EPS);
        norms.push(n);
        output.row_mut(i).iter_mut().for_each(|v| *v /= n);
    }
    NormalizedRows { output, norms }
}

/// A trainable tensor with its gradient buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTensor {
    pub value: DenseMatrix,
    pub grad: DenseMatrix,
}

impl ParamTensor {
    pub fn new(value: DenseMatrix) -> Self {
        let grad = DenseMatrix::zeros(value.rows, value.cols);
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }
}

/// `y = x·W + b`, with `b` a single row broadcast over `x`.
pub fn affine(x: &DenseMatrix, w: &ParamTensor, b: &ParamTensor) -> Result<DenseMatrix> {
    if b.value.rows != 1 || b.value.cols != w.value.cols {
        return Err(Error::ShapeMismatch {
            op: "affine bias",
            left: w.shape(),
            right: b.shape(),
        });
    }
    let mut y = DenseMatrix::zeros(x.rows, w.value.cols);
    for i in 0..y.rows {
        y.row_mut(i).copy_from_slice(b.value.row(0));
    }
    gemm(1.0, x, Trans::No, &w.value, Trans::No, 1.0, &mut y)?;
    Ok(y)
}

/// Accumulates `∂L/∂W = xᵀg` and `∂L/∂b = Σ_rows g`; returns `∂L/∂x = g·Wᵀ` when asked.
pub fn affine_backward(
    x: &DenseMatrix,
    w: &mut ParamTensor,
    b: &mut ParamTensor,
    upstream: &DenseMatrix,
    need_input_grad: bool,
) -> Result<Option<DenseMatrix>> {
    if upstream.rows != x.rows || upstream.cols != w.value.cols {
        return Err(Error::ShapeMismatch {
            op: "affine backward",
            left: (x.rows, w.value.cols),
            right: upstream.shape(),
        });
    }
    gemm(1.0, x, Trans::Yes, upstream, Trans::No, 1.0, &mut w.grad)?;
    let bias_grad = b.grad.row_mut(0);
    for i in 0..upstream.rows {
        axpy(1.0, upstream.row(i), bias_grad);
    }
    if need_input_grad {
        let mut dx = DenseMatrix::zeros(x.rows, x.cols);
        gemm(1.0, upstream, Trans::No, &w.value, Trans::Yes, 0.0, &mut dx)?;
        Ok(Some(dx))
    } else {
        Ok(None)
    }
}

/// ELU with unit scale.
pub fn elu(x: &DenseMatrix) -> DenseMatrix {
    let mut y = x.clone();
    y.data
        .iter_mut()
        .for_each(|v| *v = if *v > 0.0 { *v } else { math::expm1(*v) });
    y
}

/// Multiplies `upstream` by ELU'(pre) given the pre-activation.
pub fn elu_backward(pre: &DenseMatrix, upstream: &DenseMatrix) -> DenseMatrix {
    let mut d = upstream.clone();
    for (g, &z) in d.data.iter_mut().zip(&pre.data) {
        if z <= 0.0 {
            *g *= math::exp(z);
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, normalized_adjacency};
    use crate::rng::{rng_from_seed, standard_normal};
    use proptest::prelude::*;

    fn naive_matmul(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
        DenseMatrix::from_fn(a.rows(), b.cols(), |i, j| {
            (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum()
        })
    }

    fn random(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = rng_from_seed(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| standard_normal(&mut rng))
    }

    #[test]
    fn gemm_variants_match_naive() {
        let a = random(7, 5, 1);
        let b = random(5, 6, 2);
        let c = random(7, 6, 3);
        assert!(matmul(&a, &b).unwrap().max_abs_diff(&naive_matmul(&a, &b)) < 1e-12);
        assert!(
            matmul_tn(&a, &c)
                .unwrap()
                .max_abs_diff(&naive_matmul(&a.transpose(), &c))
                < 1e-12
        );
        assert!(
            matmul_nt(&a, &a)
                .unwrap()
                .max_abs_diff(&naive_matmul(&a, &a.transpose()))
                < 1e-12
        );
        assert!(matches!(
            matmul(&a, &a),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn sparse_left_kernel_matches_naive() {
        let mut a = DenseMatrix::zeros(9, 12);
        a.set(0, 3, 1.0);
        a.set(4, 11, -2.0);
        a.set(8, 0, 0.5);
        let b = random(12, 4, 5);
        assert!(a.nonzero_fraction() <= SPARSE_LEFT_DENSITY);
        assert!(matmul(&a, &b).unwrap().max_abs_diff(&naive_matmul(&a, &b)) < 1e-12);
        let g = random(9, 4, 6);
        assert!(
            matmul_tn(&a, &g)
                .unwrap()
                .max_abs_diff(&naive_matmul(&a.transpose(), &g))
                < 1e-12
        );
    }

    #[test]
    fn spmm_examples() {
        let x = random(4, 3, 9);
        assert_eq!(spmm(&SparseMatrix::identity(4), &x).unwrap(), x);

        let a = normalized_adjacency(&build_graph(&[(0, 1)], 2, None).unwrap());
        let x = DenseMatrix::from_rows(&[[3.0], [5.0]]);
        assert_eq!(
            spmm(&a, &x).unwrap(),
            DenseMatrix::from_rows(&[[5.0], [3.0]])
        );

        let a = normalized_adjacency(&build_graph(&[(0, 1)], 3, None).unwrap());
        let y = spmm(&a, &random(3, 2, 1)).unwrap();
        assert_eq!(y.row(2), &[0.0, 0.0]);

        assert!(spmm(&a, &random(2, 2, 1)).is_err());
    }

    #[test]
    fn normalize_examples() {
        let x = DenseMatrix::from_rows(&[[3.0, 4.0], [1.0, 0.0], [0.0, 0.0]]);
        let y = l2_normalize_rows(&x).output;
        assert!((y.get(0, 0) - 0.6).abs() < 1e-15 && (y.get(0, 1) - 0.8).abs() < 1e-15);
        assert_eq!(y.row(1), &[1.0, 0.0]);
        assert_eq!(y.row(2), &[0.0, 0.0]);
    }

    #[test]
    fn normalize_backward_matches_finite_difference() {
        let x = random(3, 4, 11);
        let w = random(3, 4, 12);
        // L = Σ w ⊙ normalize(x)
        let loss = |x: &DenseMatrix| -> f64 {
            let y = l2_normalize_rows(x).output;
            y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
        };
        let analytic = l2_normalize_rows(&x).backward(&w).unwrap();
        let h = 1e-6;
        for idx in 0..x.data().len() {
            let mut xp = x.clone();
            xp.data_mut()[idx] += h;
            let mut xm = x.clone();
            xm.data_mut()[idx] -= h;
            let numeric = (loss(&xp) - loss(&xm)) / (2.0 * h);
            assert!((numeric - analytic.data()[idx]).abs() < 1e-8);
        }
    }

    #[test]
    fn affine_examples() {
        let mut w = ParamTensor::new(DenseMatrix::identity(2));
        let mut b = ParamTensor::new(DenseMatrix::from_rows(&[[-1.0, 1.0]]));
        let x = DenseMatrix::from_rows(&[[1.0, 2.0]]);
        assert_eq!(
            affine(&x, &w, &b).unwrap(),
            DenseMatrix::from_rows(&[[0.0, 3.0]])
        );

        let b0 = ParamTensor::new(DenseMatrix::zeros(1, 2));
        let x2 = random(5, 2, 3);
        assert!(affine(&x2, &w, &b0).unwrap().max_abs_diff(&x2) < 1e-15);

        // all-ones upstream on a 2x2 case: ∂L/∂W = xᵀ·1
        let x = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let ones = DenseMatrix::filled(2, 2, 1.0);
        let dx = affine_backward(&x, &mut w, &mut b, &ones, true)
            .unwrap()
            .unwrap();
        assert_eq!(w.grad, DenseMatrix::from_rows(&[[4.0, 4.0], [6.0, 6.0]]));
        assert_eq!(b.grad, DenseMatrix::from_rows(&[[2.0, 2.0]]));
        assert_eq!(dx, ones);
    }

    #[test]
    fn elu_backward_matches_derivative() {
        let z = DenseMatrix::from_rows(&[[-1.0, 0.5]]);
        let g = DenseMatrix::from_rows(&[[2.0, 3.0]]);
        let d = elu_backward(&z, &g);
        assert!((d.get(0, 0) - 2.0 * (-1f64).exp()).abs() < 1e-15);
        assert_eq!(d.get(0, 1), 3.0);
        assert!((elu(&z).get(0, 0) - ((-1f64).exp() - 1.0)).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn spmm_agrees_with_dense_product(n in 1usize..24, cols in 1usize..6, seed in 0u64..1000) {
            let mut rng = rng_from_seed(seed);
            use rand::Rng;
            let edges: Vec<(usize, usize)> = (0..n * 2)
                .map(|_| (rng.gen_range(0..n), rng.gen_range(0..n)))
                .collect();
            let g = build_graph(&edges, n, None).unwrap();
            let a = normalized_adjacency(&g);
            let x = random(n, cols, seed + 1);
            let dense = DenseMatrix::from_vec(n, n, a.to_dense()).unwrap();
            let got = spmm(&a, &x).unwrap();
            prop_assert!(got.max_abs_diff(&naive_matmul(&dense, &x)) <= 1e-12);
        }

        #[test]
        fn normalized_rows_have_unit_norm(seed in 0u64..1000, scale in 1e-6f64..1e6) {
            let mut x = random(6, 5, seed);
            x.scale(scale);
            let y = l2_normalize_rows(&x).output;
            for i in 0..6 {
                if norm(x.row(i)) >= 1e-6 {
                    prop_assert!((norm(y.row(i)) - 1.0).abs() <= 1e-9);
                }
            }
        }

        #[test]
        fn kernels_are_bitwise_deterministic(seed in 0u64..200) {
            let a = random(17, 9, seed);
            let b = random(9, 13, seed + 7);
            prop_assert_eq!(matmul(&a, &b).unwrap(), matmul(&a, &b).unwrap());
            let y1 = l2_normalize_rows(&a).output;
            let y2 = l2_normalize_rows(&a).output;
            prop_assert_eq!(y1, y2);
        }
    }
}
