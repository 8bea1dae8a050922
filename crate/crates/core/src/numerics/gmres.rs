use super::{dot, norm2, NumericsError};

/// A linear map given only through its action on vectors.
pub trait LinearOperator {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn apply_transpose(&self, _x: &[f64], _y: &mut [f64]) -> Result<(), NumericsError> {
        Err(NumericsError::Unsupported)
    }
}

impl LinearOperator for super::DenseMatrix {
    fn dim_in(&self) -> usize {
        self.cols()
    }
    fn dim_out(&self) -> usize {
        self.rows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = dot(self.row(i), x);
        }
    }
    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) -> Result<(), NumericsError> {
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.rows() {
            for (j, a) in self.row(i).iter().enumerate() {
                y[j] += a * x[i];
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GmresResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Residual norm estimates, starting with `|b|`.
    pub residuals: Vec<f64>,
}

/// Non-restarted GMRES from a zero initial guess, modified Gram-Schmidt with
/// one reorthogonalization pass.
pub fn gmres(op: &dyn LinearOperator, b: &[f64], tol_rel: f64, max_iter: usize) -> GmresResult {
    let n = b.len();
    assert_eq!(op.dim_in(), n, "operator must be square");
    assert_eq!(op.dim_out(), n, "operator must be square");
    let beta = norm2(b);
    if beta == 0.0 {
        return GmresResult { x: vec![0.0; n], iterations: 0, converged: true, residuals: vec![0.0] };
    }
    let target = tol_rel * beta;
    let max_iter = max_iter.min(n).max(1);

    let mut basis: Vec<Vec<f64>> = vec![b.iter().map(|v| v / beta).collect()];
    // Hessenberg columns after Givens rotation, stored as upper triangle.
    let mut r: Vec<Vec<f64>> = Vec::new();
    let mut cs: Vec<f64> = Vec::new();
    let mut sn: Vec<f64> = Vec::new();
    let mut g = vec![beta];
    let mut residuals = vec![beta];
    let mut converged = false;
    let mut w = vec![0.0; n];

    for k in 0..max_iter {
        op.apply(&basis[k], &mut w);
        let mut h = vec![0.0; k + 2];
        for _pass in 0..2 {
            for (j, v) in basis.iter().enumerate() {
                let c = dot(&w, v);
                h[j] += c;
                w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= c * vi);
            }
        }
        let hnext = norm2(&w);
        h[k + 1] = hnext;

        for j in 0..k {
            let t = cs[j] * h[j] + sn[j] * h[j + 1];
            h[j + 1] = -sn[j] * h[j] + cs[j] * h[j + 1];
            h[j] = t;
        }
        let denom = h[k].hypot(h[k + 1]);
        let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (h[k] / denom, h[k + 1] / denom) };
        cs.push(c);
        sn.push(s);
        h[k] = c * h[k] + s * h[k + 1];
        h.truncate(k + 1);
        r.push(h);
        let gk = g[k];
        g[k] = c * gk;
        g.push(-s * gk);
        let res = g[k + 1].abs();
        residuals.push(res);

        let breakdown = hnext <= 1e-14 * beta;
        if res <= target || breakdown {
            converged = true;
            break;
        }
        if k + 1 < max_iter {
            basis.push(w.iter().map(|v| v / hnext).collect());
        }
    }

    let k = r.len();
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = g[i];
        for j in i + 1..k {
            s -= r[j][i] * y[j];
        }
        y[i] = if r[i][i] != 0.0 { s / r[i][i] } else { 0.0 };
    }
    let mut x = vec![0.0; n];
    for (yj, v) in y.iter().zip(&basis) {
        x.iter_mut().zip(v).for_each(|(xi, vi)| *xi += yj * vi);
    }
    GmresResult { x, iterations: k, converged, residuals }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::DenseMatrix;

    #[test]
    fn identity_one_step() {
        let b = vec![0.3, -1.0, 2.0];
        let out = gmres(&DenseMatrix::identity(3), &b, 1e-12, 10);
        assert_eq!(out.iterations, 1);
        assert!(out.converged);
        for (a, c) in out.x.iter().zip(&b) {
            assert!((a - c).abs() < 1e-14);
        }
    }

    #[test]
    fn diagonal_three_distinct() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 3.0]]);
        let out = gmres(&a, &[1.0, 2.0, 3.0], 1e-12, 50);
        assert!(out.iterations <= 3 && out.converged);
        for v in &out.x {
            assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_rhs() {
        let out = gmres(&DenseMatrix::identity(4), &[0.0; 4], 1e-10, 10);
        assert_eq!(out.iterations, 0);
        assert_eq!(out.x, vec![0.0; 4]);
    }
}
