//! Dense matrices, block partitions and spectral norm estimates.
//!
//! Everything here is sized for desk-scale experiments (a few hundred rows
//! and columns), so storage is plain row-major `Vec<f64>`.

use std::ops::Range;

use thiserror::Error;

/// Default relative tolerance for [`operator_norm`].
pub const DEFAULT_NORM_TOL: f64 = 1e-10;
/// Default iteration cap for [`operator_norm`].
pub const DEFAULT_NORM_MAX_ITER: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("power iteration did not converge after {iterations} iterations (last estimate {estimate})")]
    NotConverged { estimate: f64, iterations: usize },
    #[error("matrix is identically zero")]
    ZeroMatrix,
    #[error("block partition covers {partitioned} coordinates but the operand has {dim}")]
    PartitionMismatch { partitioned: usize, dim: usize },
    #[error("block partition contains an empty block at index {0}")]
    EmptyBlock(usize),
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("linear system is singular")]
    Singular,
}

/// Row-major dense matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, LinalgError> {
        if values.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch {
                expected: rows * cols,
                found: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite {
                row: pos / cols.max(1),
                col: pos % cols.max(1),
            });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![1.0; n])
    }

    pub fn diag(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in d.iter().enumerate() {
            m.values[i * n + i] = v;
        }
        m
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(LinalgError::DimensionMismatch {
                    expected: cols,
                    found: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, values)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    /// Sets an entry. Panics on a non-finite value.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(v.is_finite(), "matrix entries must be finite");
        self.values[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.values[j * self.rows + i] = self.values[i * self.cols + j];
            }
        }
        t
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    /// Sub-matrix made of the columns in `cols`.
    pub fn column_block(&self, cols: Range<usize>) -> Self {
        let width = cols.len();
        let mut values = Vec::with_capacity(self.rows * width);
        for i in 0..self.rows {
            values.extend_from_slice(&self.row(i)[cols.clone()]);
        }
        Self {
            rows: self.rows,
            cols: width,
            values,
        }
    }

    /// Squared Euclidean norms of the rows.
    pub fn row_norms_sq(&self) -> Vec<f64> {
        (0..self.rows).map(|i| norm_sq(self.row(i))).collect()
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
        check_len(self.cols, v.len())?;
        let mut out = vec![0.0; self.rows];
        self.matvec_into(v, &mut out);
        Ok(out)
    }

    /// `out = A v` without allocation. Panics on size mismatch.
    pub fn matvec_into(&self, v: &[f64], out: &mut [f64]) {
        assert_eq!(v.len(), self.cols);
        assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.values.chunks_exact(self.cols.max(1))) {
            *o = dot(row, v);
        }
    }

    pub fn matvec_transpose(&self, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
        check_len(self.rows, v.len())?;
        let mut out = vec![0.0; self.cols];
        self.matvec_transpose_into(v, &mut out);
        Ok(out)
    }

    /// `out = Aᵀ v` without allocation. Panics on size mismatch.
    pub fn matvec_transpose_into(&self, v: &[f64], out: &mut [f64]) {
        assert_eq!(v.len(), self.rows);
        assert_eq!(out.len(), self.cols);
        out.iter_mut().for_each(|o| *o = 0.0);
        if self.cols == 0 {
            return;
        }
        for (row, &vi) in self.values.chunks_exact(self.cols).zip(v) {
            if vi != 0.0 {
                axpy(vi, row, out);
            }
        }
    }
}

/// Partition of a vector space into contiguous blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    offsets: Vec<usize>,
}

impl BlockPartition {
    pub fn new(block_sizes: &[usize]) -> Result<Self, LinalgError> {
        let mut offsets = Vec::with_capacity(block_sizes.len() + 1);
        offsets.push(0);
        for (i, &s) in block_sizes.iter().enumerate() {
            if s == 0 {
                return Err(LinalgError::EmptyBlock(i));
            }
            offsets.push(offsets[i] + s);
        }
        Ok(Self { offsets })
    }

    /// `n` blocks of size one.
    pub fn singletons(n: usize) -> Self {
        Self {
            offsets: (0..=n).collect(),
        }
    }

    /// Number of blocks.
    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Total partitioned dimension.
    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    #[inline]
    pub fn range(&self, block: usize) -> Range<usize> {
        self.offsets[block]..self.offsets[block + 1]
    }

    pub fn block_size(&self, block: usize) -> usize {
        self.offsets[block + 1] - self.offsets[block]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        self.offsets.windows(2).map(|w| w[0]..w[1])
    }

    pub fn check_dim(&self, dim: usize) -> Result<(), LinalgError> {
        if self.dim() != dim {
            return Err(LinalgError::PartitionMismatch {
                partitioned: self.dim(),
                dim,
            });
        }
        Ok(())
    }
}

/// Largest singular value of `a` by power iteration on `AᵀA`.
///
/// The iteration starts from the normalized all-ones vector. If that start is
/// annihilated by `AᵀA` it is replaced by a fixed alternating ramp, so the
/// result never depends on a random seed.
pub fn operator_norm(a: &DenseMatrix, tol: f64, max_iter: usize) -> Result<f64, LinalgError> {
    if !(tol > 0.0) {
        return Err(LinalgError::BadTolerance(tol));
    }
    if a.is_zero() || a.rows == 0 || a.cols == 0 {
        return Err(LinalgError::ZeroMatrix);
    }
    let n = a.cols;
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut av = vec![0.0; a.rows];
    let mut w = vec![0.0; n];

    a.matvec_into(&v, &mut av);
    if norm_sq(&av) == 0.0 {
        // all-ones lies in the null space; switch to a start with mixed signs
        for (j, vj) in v.iter_mut().enumerate() {
            let s = if j % 2 == 0 { 1.0 } else { -1.0 };
            *vj = s * (1.0 + j as f64 / n as f64);
        }
        normalize(&mut v);
        a.matvec_into(&v, &mut av);
        if norm_sq(&av) == 0.0 {
            for (j, vj) in v.iter_mut().enumerate() {
                *vj = ((j as f64 + 1.0) * 0.618_033_988_749_895).fract() - 0.5;
            }
            normalize(&mut v);
            a.matvec_into(&v, &mut av);
        }
    }

    let mut estimate = norm_sq(&av).sqrt();
    for _ in 0..max_iter {
        a.matvec_transpose_into(&av, &mut w);
        let wn = norm_sq(&w).sqrt();
        if wn == 0.0 {
            return Ok(estimate);
        }
        for (vj, wj) in v.iter_mut().zip(&w) {
            *vj = wj / wn;
        }
        a.matvec_into(&v, &mut av);
        let next = norm_sq(&av).sqrt();
        if (next - estimate).abs() <= tol * next {
            return Ok(next);
        }
        estimate = next;
    }
    Err(LinalgError::NotConverged {
        estimate,
        iterations: max_iter,
    })
}

/// Operator norm of each column block `A_ℓ` of `a`.
pub fn block_operator_norms(a: &DenseMatrix, p: &BlockPartition) -> Result<Vec<f64>, LinalgError> {
    p.check_dim(a.cols)?;
    p.ranges()
        .map(|r| {
            let sub = a.column_block(r);
            if sub.is_zero() {
                Ok(0.0)
            } else if sub.cols == 1 {
                Ok(norm_sq(&sub.values).sqrt())
            } else {
                operator_norm(&sub, DEFAULT_NORM_TOL, DEFAULT_NORM_MAX_ITER)
            }
        })
        .collect()
}

/// `‖AᵀA‖`, i.e. the squared operator norm.
pub fn gram_norm(a: &DenseMatrix) -> Result<f64, LinalgError> {
    operator_norm(a, DEFAULT_NORM_TOL, DEFAULT_NORM_MAX_ITER).map(|s| s * s)
}

/// Solves the square system `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = a.rows;
    check_len(n, a.cols)?;
    check_len(n, b.len())?;
    let mut m = a.values.clone();
    let mut x = b.to_vec();
    for k in 0..n {
        let pivot = (k..n)
            .max_by(|&i, &j| m[i * n + k].abs().total_cmp(&m[j * n + k].abs()))
            .unwrap();
        if m[pivot * n + k].abs() < 1e-300 {
            return Err(LinalgError::Singular);
        }
        if pivot != k {
            for j in 0..n {
                m.swap(k * n + j, pivot * n + j);
            }
            x.swap(k, pivot);
        }
        for i in k + 1..n {
            let factor = m[i * n + k] / m[k * n + k];
            if factor == 0.0 {
                continue;
            }
            for j in k..n {
                m[i * n + j] -= factor * m[k * n + j];
            }
            x[i] -= factor * x[k];
        }
    }
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| m[k * n + j] * x[j]).sum();
        x[k] = (x[k] - s) / m[k * n + k];
    }
    Ok(x)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn normalize(v: &mut [f64]) {
    let n = norm_sq(v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

fn check_len(expected: usize, found: usize) -> Result<(), LinalgError> {
    if expected != found {
        Err(LinalgError::DimensionMismatch { expected, found })
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::XorShift64Star;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = XorShift64Star::new(seed);
        let values = (0..rows * cols).map(|_| rng.uniform(-1.0, 1.0)).collect();
        DenseMatrix::new(rows, cols, values).unwrap()
    }

    fn naive_matvec_colwise(a: &DenseMatrix, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; a.rows()];
        for j in 0..a.cols() {
            for i in 0..a.rows() {
                out[i] += a.get(i, j) * v[j];
            }
        }
        out
    }

    /// Cyclic Jacobi eigenvalue sweep for a symmetric matrix.
    fn jacobi_eigenvalues(mut s: Vec<Vec<f64>>) -> Vec<f64> {
        let n = s.len();
        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| s[i][j] * s[i][j])
                .sum();
            if off < 1e-26 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if s[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (s[q][q] - s[p][p]) / (2.0 * s[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let sn = t * c;
                    for k in 0..n {
                        let skp = s[k][p];
                        let skq = s[k][q];
                        s[k][p] = c * skp - sn * skq;
                        s[k][q] = sn * skp + c * skq;
                    }
                    for k in 0..n {
                        let spk = s[p][k];
                        let sqk = s[q][k];
                        s[p][k] = c * spk - sn * sqk;
                        s[q][k] = sn * spk + c * sqk;
                    }
                }
            }
        }
        (0..n).map(|i| s[i][i]).collect()
    }

    fn gram(a: &DenseMatrix) -> Vec<Vec<f64>> {
        let n = a.cols();
        let mut g = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                g[i][j] = (0..a.rows()).map(|k| a.get(k, i) * a.get(k, j)).sum();
            }
        }
        g
    }

    #[test]
    fn matvec_small_cases() {
        assert_eq!(DenseMatrix::identity(2).matvec(&[3.0, -1.0]).unwrap(), vec![3.0, -1.0]);
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(a.matvec(&[1.0, 1.0]).unwrap(), vec![3.0, 7.0]);
        assert_eq!(a.matvec_transpose(&[1.0, 1.0]).unwrap(), vec![4.0, 6.0]);
        assert_eq!(
            DenseMatrix::identity(3).matvec_transpose(&[1.0, 2.0, 3.0]).unwrap(),
            vec![1.0, 2.0, 3.0]
        );
    }

    #[test]
    fn matvec_matches_column_order_loop() {
        let a = random_matrix(5, 4, 7);
        let v = [0.3, -1.2, 0.7, 2.0];
        let fast = a.matvec(&v).unwrap();
        let slow = naive_matvec_colwise(&a, &v);
        for (f, s) in fast.iter().zip(&slow) {
            assert!((f - s).abs() <= 1e-12);
        }
    }

    #[test]
    fn dimension_errors() {
        let a = DenseMatrix::identity(3);
        assert!(matches!(a.matvec(&[1.0]), Err(LinalgError::DimensionMismatch { .. })));
        assert!(matches!(
            a.matvec_transpose(&[1.0; 4]),
            Err(LinalgError::DimensionMismatch { .. })
        ));
        assert!(DenseMatrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(matches!(
            DenseMatrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(LinalgError::NonFinite { row: 0, col: 1 })
        ));
        let p = BlockPartition::singletons(2);
        assert!(matches!(
            block_operator_norms(&a, &p),
            Err(LinalgError::PartitionMismatch { .. })
        ));
        assert!(BlockPartition::new(&[1, 0]).is_err());
    }

    #[test]
    fn operator_norm_simple() {
        let n = operator_norm(&DenseMatrix::identity(4), 1e-12, 100).unwrap();
        assert!((n - 1.0).abs() < 1e-12);
        let n = operator_norm(&DenseMatrix::diag(&[3.0, 1.0]), 1e-12, 1000).unwrap();
        assert!((n - 3.0).abs() < 1e-10);
        assert!(matches!(
            operator_norm(&DenseMatrix::zeros(2, 2), 1e-10, 10),
            Err(LinalgError::ZeroMatrix)
        ));
    }

    #[test]
    fn operator_norm_start_in_null_space() {
        // all-ones is in the kernel of this matrix
        let a = DenseMatrix::from_rows(&[vec![1.0, -1.0], vec![2.0, -2.0]]).unwrap();
        let n = operator_norm(&a, 1e-12, 1000).unwrap();
        assert!((n - 10f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn operator_norm_not_converged_carries_estimate() {
        let a = random_matrix(30, 30, 3);
        match operator_norm(&a, 1e-15, 2) {
            Err(LinalgError::NotConverged { estimate, iterations }) => {
                assert_eq!(iterations, 2);
                assert!(estimate > 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn operator_norm_matches_jacobi_oracle() {
        let a = random_matrix(6, 5, 11);
        let eig = jacobi_eigenvalues(gram(&a));
        let lmax = eig.iter().cloned().fold(f64::MIN, f64::max);
        let n = operator_norm(&a, 1e-12, 100_000).unwrap();
        assert!((n - lmax.sqrt()).abs() <= 1e-8, "{n} vs {}", lmax.sqrt());
    }

    #[test]
    fn block_norms() {
        let p = BlockPartition::singletons(3);
        assert_eq!(block_operator_norms(&DenseMatrix::identity(3), &p).unwrap(), vec![1.0; 3]);
        let a = DenseMatrix::diag(&[1.0, 2.0]);
        assert_eq!(
            block_operator_norms(&a, &BlockPartition::singletons(2)).unwrap(),
            vec![1.0, 2.0]
        );
    }

    #[test]
    fn block_norms_match_submatrix_oracle() {
        let a = random_matrix(7, 6, 5);
        let p = BlockPartition::new(&[2, 2, 2]).unwrap();
        let norms = block_operator_norms(&a, &p).unwrap();
        let full = operator_norm(&a, DEFAULT_NORM_TOL, DEFAULT_NORM_MAX_ITER).unwrap();
        for (b, nb) in norms.iter().enumerate() {
            // extract by hand, independent of column_block
            let rows: Vec<Vec<f64>> = (0..7)
                .map(|i| vec![a.get(i, 2 * b), a.get(i, 2 * b + 1)])
                .collect();
            let sub = DenseMatrix::from_rows(&rows).unwrap();
            let oracle = jacobi_eigenvalues(gram(&sub))
                .into_iter()
                .fold(f64::MIN, f64::max)
                .sqrt();
            assert!((nb - oracle).abs() <= 1e-10 * oracle.max(1.0));
            assert!(*nb <= full * (1.0 + DEFAULT_NORM_TOL));
        }
    }

    #[test]
    fn gram_norm_identity() {
        assert!((gram_norm(&DenseMatrix::identity(2)).unwrap() - 1.0).abs() < 1e-12);
        assert!((gram_norm(&DenseMatrix::diag(&[3.0, 1.0])).unwrap() - 9.0).abs() < 1e-9);
        let a = random_matrix(5, 4, 9);
        let s = operator_norm(&a, DEFAULT_NORM_TOL, DEFAULT_NORM_MAX_ITER).unwrap();
        let g = gram_norm(&a).unwrap();
        assert!((g - s * s).abs() <= 2.0 * DEFAULT_NORM_TOL * g.max(1.0) + 1e-8);
    }

    #[test]
    fn solve_small_system() {
        let a = DenseMatrix::from_rows(&[vec![0.0, 2.0], vec![1.0, 1.0]]).unwrap();
        let x = solve(&a, &[4.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
        let s = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(solve(&s, &[1.0, 2.0]), Err(LinalgError::Singular));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn adjoint_identity(seed in any::<u64>(), rows in 1usize..8, cols in 1usize..8) {
                let a = random_matrix(rows, cols, seed);
                let mut rng = XorShift64Star::new(seed ^ 0xdead_beef);
                let mut v: Vec<f64> = (0..cols).map(|_| rng.normal()).collect();
                let mut w: Vec<f64> = (0..rows).map(|_| rng.normal()).collect();
                normalize(&mut v);
                normalize(&mut w);
                let lhs = dot(&a.matvec(&v).unwrap(), &w);
                let rhs = dot(&v, &a.matvec_transpose(&w).unwrap());
                prop_assert!((lhs - rhs).abs() <= 1e-12);
            }

            #[test]
            fn norm_bounds_products(seed in any::<u64>()) {
                let a = random_matrix(6, 4, seed);
                let s = operator_norm(&a, DEFAULT_NORM_TOL, DEFAULT_NORM_MAX_ITER).unwrap();
                let mut rng = XorShift64Star::new(seed.wrapping_add(1));
                for _ in 0..1000 {
                    let v: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
                    let av = norm_sq(&a.matvec(&v).unwrap()).sqrt();
                    prop_assert!(av <= s * (1.0 + DEFAULT_NORM_TOL) * norm_sq(&v).sqrt() + 1e-12);
                }
            }
        }
    }
}
