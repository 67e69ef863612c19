//! Dense row-major matrices and vectors, 64-bit floats throughout.
//!
//! This is the entire linear-algebra surface the crate uses: matrix-vector
//! products in both orientations, the Hadamard and outer products, and three
//! matrix-matrix kernels used by the batched training path. Everything is
//! pure and deterministic: a fixed summation order, no fused multiply-add,
//! so identical inputs give bitwise-identical outputs on every call.
//!
//! Shape mismatches are hard errors; there is no broadcasting.

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Zero-filled matrix. Both dimensions must be at least 1.
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be >= 1");
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Builds a matrix from row-major data; the length must equal rows*cols.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Matrix> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(format!(
                "matrix dimensions must be >= 1, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::shape(
                "from_vec",
                format!("{rows}x{cols} needs {} values, got {}", rows * cols, data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Matrix> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::InvalidInput("matrix needs at least one row and column".into()));
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::shape(
                    "from_rows",
                    format!("row 0 has {cols} entries but row {i} has {}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Matrix::from_vec(rows.len(), cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Explicit transpose; used by tests and small one-off reshapes.
    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Multiplies every entry in place.
    pub fn scale(&mut self, alpha: f64) {
        for v in &mut self.data {
            *v *= alpha;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

/// Dense vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn zeros(len: usize) -> Vector {
        Vector { data: vec![0.0; len] }
    }

    pub fn from_vec(data: Vec<f64>) -> Vector {
        Vector { data }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    #[inline]
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl std::ops::IndexMut<usize> for Vector {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

impl From<Vec<f64>> for Vector {
    fn from(data: Vec<f64>) -> Vector {
        Vector { data }
    }
}

/// Inner product with a fixed summation order: eight independent partial sums
/// over the unrolled body, reduced pairwise, then a sequential tail. Every
/// contraction in the crate funnels through this (or through `axpy`), which
/// is what makes per-sample and batched code paths agree bitwise.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// y += alpha * x, in index order.
#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

/// A·x for a row-major A.
pub fn matmul(a: &Matrix, x: &Vector) -> Result<Vector> {
    if a.cols != x.len() {
        return Err(Error::shape(
            "matmul",
            format!("{}x{} matrix times length-{} vector", a.rows, a.cols, x.len()),
        ));
    }
    let mut out = Vector::zeros(a.rows);
    for i in 0..a.rows {
        out.data[i] = dot(a.row(i), x.as_slice());
    }
    Ok(out)
}

/// Aᵀ·x without materializing the transpose: accumulates x[i] * row_i in row
/// order, which matches how the batched kernels accumulate.
pub fn matmul_transpose(a: &Matrix, x: &Vector) -> Result<Vector> {
    if a.rows != x.len() {
        return Err(Error::shape(
            "matmul_transpose",
            format!("{}x{} matrix (transposed) times length-{} vector", a.rows, a.cols, x.len()),
        ));
    }
    let mut out = Vector::zeros(a.cols);
    for i in 0..a.rows {
        axpy(x.data[i], a.row(i), out.as_mut_slice());
    }
    Ok(out)
}

/// Elementwise product.
pub fn hadamard(a: &Vector, b: &Vector) -> Result<Vector> {
    if a.len() != b.len() {
        return Err(Error::shape("hadamard", format!("lengths {} and {}", a.len(), b.len())));
    }
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect();
    Ok(Vector { data })
}

/// u·vᵀ as a u.len() × v.len() matrix.
pub fn outer(u: &Vector, v: &Vector) -> Matrix {
    assert!(!u.is_empty() && !v.is_empty(), "outer product needs non-empty inputs");
    let mut out = Matrix::zeros(u.len(), v.len());
    for i in 0..u.len() {
        let ui = u.data[i];
        for (o, vj) in out.row_mut(i).iter_mut().zip(&v.data) {
            *o = ui * vj;
        }
    }
    out
}

/// C = A·Bᵀ for A (m×k), B (n×k). Each output entry is a `dot` of two rows,
/// so C[i][j] carries the same bits as matmul(B, A.row_i)[j].
pub fn mul_nt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::shape(
            "mul_nt",
            format!("{}x{} times transposed {}x{}", a.rows, a.cols, b.rows, b.cols),
        ));
    }
    let mut out = Matrix::zeros(a.rows, b.rows);
    // b-row outer loop keeps one B row hot while streaming A.
    for j in 0..b.rows {
        let bj = b.row(j);
        for i in 0..a.rows {
            out.data[i * b.rows + j] = dot(a.row(i), bj);
        }
    }
    Ok(out)
}

/// C = A·B for A (m×k), B (k×n), accumulated over k in ascending order via
/// `axpy`, matching `matmul_transpose` row for row.
pub fn mul_nn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::shape(
            "mul_nn",
            format!("{}x{} times {}x{}", a.rows, a.cols, b.rows, b.cols),
        ));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    // k outer keeps the output resident while streaming B one row at a time.
    for l in 0..a.cols {
        let bl = b.row(l);
        for i in 0..a.rows {
            axpy(a.data[i * a.cols + l], bl, out.row_mut(i));
        }
    }
    Ok(out)
}

/// C = Aᵀ·B for A (m×k), B (m×n): C[i][j] = Σ_s A[s][i]·B[s][j].
/// Both operands are transposed into scratch first so the contraction runs
/// as contiguous `dot`s over the shared m dimension.
pub fn mul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(Error::shape(
            "mul_tn",
            format!("transposed {}x{} times {}x{}", a.rows, a.cols, b.rows, b.cols),
        ));
    }
    let at = a.transpose();
    let bt = b.transpose();
    let mut out = Matrix::zeros(a.cols, b.cols);
    for i in 0..at.rows {
        let ai = at.row(i);
        for j in 0..bt.rows {
            out.data[i * bt.rows + j] = dot(ai, bt.row(j));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    fn v(data: &[f64]) -> Vector {
        Vector::from_vec(data.to_vec())
    }

    #[test]
    fn matmul_identity() {
        let a = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(matmul(&a, &v(&[3.0, 4.0])).unwrap(), v(&[3.0, 4.0]));
    }

    #[test]
    fn matmul_hand_sum() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(matmul(&a, &v(&[1.0, 1.0])).unwrap(), v(&[3.0, 7.0]));
    }

    #[test]
    fn matmul_zero_matrix() {
        let a = Matrix::zeros(2, 2);
        assert_eq!(matmul(&a, &v(&[5.0, 6.0])).unwrap(), v(&[0.0, 0.0]));
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(
            matmul(&a, &v(&[1.0, 2.0])),
            Err(crate::error::Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn matmul_transpose_identity() {
        let a = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(matmul_transpose(&a, &v(&[3.0, 4.0])).unwrap(), v(&[3.0, 4.0]));
    }

    #[test]
    fn matmul_transpose_hand_sum() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(matmul_transpose(&a, &v(&[1.0, 1.0])).unwrap(), v(&[4.0, 6.0]));
    }

    #[test]
    fn matmul_transpose_rank1() {
        let a = m(&[&[1.0, 2.0, 3.0]]);
        assert_eq!(matmul_transpose(&a, &v(&[2.0])).unwrap(), v(&[2.0, 4.0, 6.0]));
    }

    #[test]
    fn matmul_transpose_shape_mismatch() {
        let a = Matrix::zeros(3, 2);
        assert!(matmul_transpose(&a, &v(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn hadamard_ones_identity() {
        assert_eq!(
            hadamard(&v(&[1.0, 1.0, 1.0]), &v(&[2.0, -3.0, 0.5])).unwrap(),
            v(&[2.0, -3.0, 0.5])
        );
    }

    #[test]
    fn hadamard_hand_product() {
        assert_eq!(hadamard(&v(&[2.0, 3.0]), &v(&[4.0, 5.0])).unwrap(), v(&[8.0, 15.0]));
    }

    #[test]
    fn hadamard_zero_annihilates() {
        assert_eq!(hadamard(&v(&[0.0, 0.0]), &v(&[7.0, 9.0])).unwrap(), v(&[0.0, 0.0]));
    }

    #[test]
    fn hadamard_shape_mismatch() {
        assert!(hadamard(&v(&[1.0]), &v(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn outer_scalar_row() {
        let got = outer(&v(&[1.0]), &v(&[1.0, 2.0, 3.0]));
        assert_eq!(got, m(&[&[1.0, 2.0, 3.0]]));
    }

    #[test]
    fn outer_hand_product() {
        let got = outer(&v(&[2.0, 3.0]), &v(&[1.0, 1.0]));
        assert_eq!(got, m(&[&[2.0, 2.0], &[3.0, 3.0]]));
    }

    #[test]
    fn outer_zero_annihilates() {
        let got = outer(&v(&[0.0, 0.0]), &v(&[5.0, 6.0]));
        assert_eq!(got, Matrix::zeros(2, 2));
    }

    #[test]
    fn outer_then_column_select_recovers_product() {
        let u = v(&[0.5, -2.0, 3.0]);
        let w = v(&[4.0, 0.25]);
        let o = outer(&u, &w);
        for j in 0..w.len() {
            let mut e = Vector::zeros(w.len());
            e[j] = 1.0;
            let col = matmul(&o, &e).unwrap();
            for i in 0..u.len() {
                assert_eq!(col[i], u[i] * w[j]);
            }
        }
    }

    fn arb_matrix(max_dim: usize) -> impl Strategy<Value = Matrix> {
        (1..=max_dim, 1..=max_dim).prop_flat_map(|(r, c)| {
            proptest::collection::vec(-10.0f64..10.0, r * c)
                .prop_map(move |data| Matrix::from_vec(r, c, data).unwrap())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn transpose_routes_agree_exactly(a in arb_matrix(7), xs in proptest::collection::vec(-10.0f64..10.0, 1..=7)) {
            prop_assume!(xs.len() == a.rows());
            let x = Vector::from_vec(xs);
            let fast = matmul_transpose(&a, &x).unwrap();
            let slow = matmul(&a.transpose(), &x).unwrap();
            // Identical set of multiply-adds in identical order: exact match.
            prop_assert_eq!(fast, slow);
        }

        #[test]
        fn operations_are_pure(a in arb_matrix(6), xs in proptest::collection::vec(-10.0f64..10.0, 1..=6)) {
            prop_assume!(xs.len() == a.cols());
            let x = Vector::from_vec(xs);
            let first = matmul(&a, &x).unwrap();
            let second = matmul(&a, &x).unwrap();
            prop_assert_eq!(first, second);
        }

        #[test]
        fn mul_nt_matches_per_row_matmul(a in arb_matrix(6), b in arb_matrix(6)) {
            prop_assume!(a.cols() == b.cols());
            let c = mul_nt(&a, &b).unwrap();
            for i in 0..a.rows() {
                let row = Vector::from_vec(a.row(i).to_vec());
                let per_sample = matmul(&b, &row).unwrap();
                for j in 0..b.rows() {
                    prop_assert_eq!(c[(i, j)].to_bits(), per_sample[j].to_bits());
                }
            }
        }

        #[test]
        fn mul_nn_matches_per_row_transpose_route(a in arb_matrix(6), b in arb_matrix(6)) {
            prop_assume!(a.cols() == b.rows());
            let c = mul_nn(&a, &b).unwrap();
            for i in 0..a.rows() {
                let row = Vector::from_vec(a.row(i).to_vec());
                let per_sample = matmul_transpose(&b, &row).unwrap();
                for j in 0..b.cols() {
                    prop_assert_eq!(c[(i, j)].to_bits(), per_sample[j].to_bits());
                }
            }
        }

        #[test]
        fn mul_tn_matches_naive(a in arb_matrix(6), b in arb_matrix(6)) {
            prop_assume!(a.rows() == b.rows());
            let c = mul_tn(&a, &b).unwrap();
            for i in 0..a.cols() {
                for j in 0..b.cols() {
                    let mut want = 0.0;
                    for s in 0..a.rows() {
                        want += a[(s, i)] * b[(s, j)];
                    }
                    let got = c[(i, j)];
                    prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
                }
            }
        }
    }
}
