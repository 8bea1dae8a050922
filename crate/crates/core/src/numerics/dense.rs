use super::NumericsError;
use nalgebra::{DMatrix, DVector};
use std::ops::{Index, IndexMut};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut a = Self::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = 1.0;
        }
        a
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        if data.len() != rows * cols {
            return Err(NumericsError::DimensionMismatch { expected: rows * cols, got: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| super::dot(self.row(i), x)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out[(i, j)] = m[(i, j)];
            }
        }
        out
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

fn rank_tol(sigma_max: f64) -> f64 {
    1e-12 * sigma_max
}

/// Solves `A x = b`, returning the minimum-norm least-squares solution when
/// `A` is singular or rectangular. Singular values below `1e-12 * |A|_2` are
/// treated as zero.
pub fn solve_dense(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>, NumericsError> {
    if b.len() != a.rows {
        return Err(NumericsError::DimensionMismatch { expected: a.rows, got: b.len() });
    }
    if a.rows == 0 || a.cols == 0 {
        return Ok(vec![0.0; a.cols]);
    }
    let svd = a.to_nalgebra().svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return Ok(vec![0.0; a.cols]);
    }
    let x = svd
        .solve(&DVector::from_column_slice(b), rank_tol(smax))
        .map_err(|e| NumericsError::Factorization(e.to_string()))?;
    Ok(x.iter().copied().collect())
}

/// Moore-Penrose pseudo-inverse with the same rank tolerance as [`solve_dense`].
pub fn pseudo_inverse(a: &DenseMatrix) -> DenseMatrix {
    if a.rows == 0 || a.cols == 0 {
        return DenseMatrix::zeros(a.cols, a.rows);
    }
    let svd = a.to_nalgebra().svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return DenseMatrix::zeros(a.cols, a.rows);
    }
    let p = svd.pseudo_inverse(rank_tol(smax)).expect("svd computed with u and v");
    DenseMatrix::from_nalgebra(&p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_solve() {
        let x = solve_dense(&DenseMatrix::identity(3), &[1.0, 2.0, 3.0]).unwrap();
        for (a, b) in x.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_matrix_gives_zero() {
        let x = solve_dense(&DenseMatrix::zeros(2, 2), &[0.0, 0.0]).unwrap();
        assert_eq!(x, vec![0.0, 0.0]);
    }

    #[test]
    fn rank_one_minimum_norm() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        let x = solve_dense(&a, &[2.0, 2.0]).unwrap();
        // A = 2 v v^T with v = (1,1)/sqrt2, so A^+ b = v v^T b / 2
        let expected = 0.5 * (2.0 + 2.0) / 2.0;
        assert!((x[0] - expected).abs() < 1e-12 && (x[1] - expected).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(solve_dense(&DenseMatrix::identity(2), &[1.0]).is_err());
    }

    #[test]
    fn pinv_of_wide_matrix() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.0, 1.0]]);
        let p = pseudo_inverse(&a);
        assert_eq!((p.rows(), p.cols()), (3, 1));
        assert!((p[(0, 0)] - 0.5).abs() < 1e-14 && p[(1, 0)].abs() < 1e-14);
    }
}
