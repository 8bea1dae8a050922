use super::{DenseMatrix, NumericsError};

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub value: f64,
    pub point: Vec<f64>,
}

const PIVOT_TOL: f64 = 1e-11;

struct Tableau {
    // rows 0..m are constraints, row m is the objective; last column is the rhs
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    ncols: usize,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[row][col];
        self.t[row].iter_mut().for_each(|v| *v /= p);
        let pivot_row = self.t[row].clone();
        for (i, r) in self.t.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f != 0.0 {
                r.iter_mut().zip(&pivot_row).for_each(|(a, b)| *a -= f * b);
            }
        }
        self.basis[row] = col;
    }

    /// Bland's rule over the columns `allowed`; returns false if unbounded.
    fn optimize(&mut self, allowed: usize) -> bool {
        let m = self.basis.len();
        let rhs = self.ncols;
        loop {
            let obj = &self.t[m];
            let Some(enter) = (0..allowed).find(|&j| obj[j] < -PIVOT_TOL) else {
                return true;
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = self.t[i][enter];
                if a > PIVOT_TOL {
                    let ratio = self.t[i][rhs] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-14 || (ratio <= lr + 1e-14 && self.basis[i] < self.basis[li]) {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    }
                }
            }
            match leave {
                None => return false,
                Some((row, _)) => self.pivot(row, enter),
            }
        }
    }
}

/// Minimizes `cᵀx` subject to `E x = r`, with `x ≥ 0` when `nonneg` holds and
/// `x` free otherwise. Dense two-phase simplex with Bland's rule.
pub fn solve_lp(
    costs: &[f64],
    eq_matrix: &DenseMatrix,
    eq_rhs: &[f64],
    nonneg: bool,
) -> Result<LpSolution, NumericsError> {
    let n = costs.len();
    if eq_matrix.cols() != n {
        return Err(NumericsError::DimensionMismatch { expected: n, got: eq_matrix.cols() });
    }
    if eq_rhs.len() != eq_matrix.rows() {
        return Err(NumericsError::DimensionMismatch { expected: eq_matrix.rows(), got: eq_rhs.len() });
    }
    if !nonneg {
        // x = x⁺ − x⁻
        let mut split = DenseMatrix::zeros(eq_matrix.rows(), 2 * n);
        for i in 0..eq_matrix.rows() {
            for j in 0..n {
                split[(i, j)] = eq_matrix[(i, j)];
                split[(i, n + j)] = -eq_matrix[(i, j)];
            }
        }
        let c2: Vec<f64> = costs.iter().copied().chain(costs.iter().map(|c| -c)).collect();
        let sol = solve_lp(&c2, &split, eq_rhs, true)?;
        let point = (0..n).map(|j| sol.point[j] - sol.point[n + j]).collect();
        return Ok(LpSolution { value: sol.value, point });
    }

    let m = eq_matrix.rows();
    let ncols = n + m;
    let mut t = vec![vec![0.0; ncols + 1]; m + 1];
    for i in 0..m {
        let sign = if eq_rhs[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = sign * eq_matrix[(i, j)];
        }
        t[i][n + i] = 1.0;
        t[i][ncols] = sign * eq_rhs[i];
    }
    // phase one objective: sum of artificials, expressed in nonbasic terms
    for i in 0..m {
        for j in 0..n {
            t[m][j] -= t[i][j];
        }
        t[m][ncols] -= t[i][ncols];
    }
    let mut tab = Tableau { t, basis: (n..n + m).collect(), ncols };
    tab.optimize(n);
    let scale = 1.0 + eq_rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if -tab.t[m][ncols] > 1e-9 * scale {
        return Err(NumericsError::Infeasible);
    }
    // drive artificials out of the basis, dropping redundant rows
    let mut row = 0;
    while row < tab.basis.len() {
        if tab.basis[row] >= n {
            if let Some(col) = (0..n).find(|&j| tab.t[row][j].abs() > 1e-9) {
                tab.pivot(row, col);
            } else {
                tab.t.remove(row);
                tab.basis.remove(row);
                continue;
            }
        }
        row += 1;
    }
    let m2 = tab.basis.len();
    let mut obj = vec![0.0; ncols + 1];
    obj[..n].copy_from_slice(costs);
    for i in 0..m2 {
        let cb = costs[tab.basis[i]];
        if cb != 0.0 {
            for j in 0..=ncols {
                obj[j] -= cb * tab.t[i][j];
            }
        }
    }
    tab.t[m2] = obj;
    if !tab.optimize(n) {
        return Err(NumericsError::Unbounded);
    }
    let mut point = vec![0.0; n];
    for i in 0..m2 {
        point[tab.basis[i]] = tab.t[i][ncols].max(0.0);
    }
    let value = costs.iter().zip(&point).map(|(c, x)| c * x).sum();
    Ok(LpSolution { value, point })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_sum() {
        let e = DenseMatrix::from_rows(&[vec![1.0, 1.0]]);
        let s = solve_lp(&[1.0, 1.0], &e, &[1.0], true).unwrap();
        assert!((s.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn convexified_quadratic_value() {
        // points (0,0),(1,0),(0,1) with costs ½|v|²; u = (½,0)
        let e = DenseMatrix::from_rows(&[vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 1.0, 1.0]]);
        let s = solve_lp(&[0.0, 0.5, 0.5], &e, &[0.5, 0.0, 1.0], true).unwrap();
        assert!((s.value - 0.25).abs() < 1e-12);
    }

    #[test]
    fn infeasible_detected() {
        let e = DenseMatrix::from_rows(&[vec![1.0]]);
        assert_eq!(solve_lp(&[1.0], &e, &[-1.0], true), Err(NumericsError::Infeasible));
    }

    #[test]
    fn unbounded_detected() {
        let e = DenseMatrix::from_rows(&[vec![1.0, -1.0]]);
        assert_eq!(solve_lp(&[-1.0, 0.0], &e, &[0.0], true), Err(NumericsError::Unbounded));
    }

    #[test]
    fn free_variables() {
        let e = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, -1.0]]);
        let s = solve_lp(&[0.0, 0.0], &e, &[0.0, -2.0], false).unwrap();
        assert!((s.point[0] + 1.0).abs() < 1e-12 && (s.point[1] - 1.0).abs() < 1e-12);
    }
}
