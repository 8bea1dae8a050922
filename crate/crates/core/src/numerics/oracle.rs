use super::{dot, DenseMatrix};

/// Reference proximal point of `γ·max_i(⟨u_i, ·⟩ − offset_i)` at `q`.
///
/// Solves the dual simplex-constrained QP
/// `min_μ (γ/2)|Σμ_i u_i|² − Σμ_i(⟨u_i,q⟩ − offset_i)` by trying every support
/// of at most `m+1` affinely independent points and keeping the KKT point
/// with the smallest complementarity violation; then `w = q − γ Σμ_i u_i`.
pub fn prox_oracle_qp(points: &[Vec<f64>], offsets: &[f64], q: &[f64], gamma: f64) -> Vec<f64> {
    assert!(!points.is_empty(), "need at least one point");
    assert_eq!(points.len(), offsets.len());
    let m = q.len();
    let n = points.len();
    let scores: Vec<f64> = points.iter().zip(offsets).map(|(u, o)| dot(u, q) - o).collect();
    let gram: Vec<Vec<f64>> = points.iter().map(|a| points.iter().map(|b| dot(a, b)).collect()).collect();

    let mut best: Option<(f64, Vec<f64>)> = None;
    let max_k = (m + 1).min(n);
    let mut subset = Vec::with_capacity(max_k);
    let mut visit = |s: &[usize]| {
        let k = s.len();
        let mut kkt = DenseMatrix::zeros(k + 1, k + 1);
        let mut rhs = vec![0.0; k + 1];
        for (a, &i) in s.iter().enumerate() {
            for (b, &j) in s.iter().enumerate() {
                kkt[(a, b)] = gamma * gram[i][j];
            }
            kkt[(a, k)] = 1.0;
            kkt[(k, a)] = 1.0;
            rhs[a] = scores[i];
        }
        rhs[k] = 1.0;
        let Some(sol) = solve_small(&kkt, &rhs) else { return };
        let (mu, t) = (&sol[..k], sol[k]);
        if mu.iter().any(|&v| v < -1e-12) {
            return;
        }
        let mut v = vec![0.0; m];
        for (&i, &c) in s.iter().zip(mu) {
            v.iter_mut().zip(&points[i]).for_each(|(a, b)| *a += c * b);
        }
        let viol = (0..n).map(|i| scores[i] - gamma * dot(&points[i], &v) - t).fold(f64::NEG_INFINITY, f64::max);
        let viol = viol.max(0.0);
        if best.as_ref().map_or(true, |(bv, _)| viol < *bv) {
            best = Some((viol, v));
        }
    };
    enumerate_subsets(n, max_k, 0, &mut subset, &mut visit);
    let (_, v) = best.expect("a single point is always a valid support");
    q.iter().zip(&v).map(|(qi, vi)| qi - gamma * vi).collect()
}

fn enumerate_subsets(n: usize, max_k: usize, start: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    for i in start..n {
        cur.push(i);
        f(cur);
        if cur.len() < max_k {
            enumerate_subsets(n, max_k, i + 1, cur, f);
        }
        cur.pop();
    }
}

/// Gaussian elimination with partial pivoting; `None` if numerically singular.
fn solve_small(a: &DenseMatrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    let mut x = b.to_vec();
    let scale = a.max_abs().max(1e-300);
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
        if m[p][c].abs() <= 1e-11 * scale {
            return None;
        }
        m.swap(c, p);
        x.swap(c, p);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            if f != 0.0 {
                for k in c..n {
                    m[r][k] -= f * m[c][k];
                }
                x[r] -= f * x[c];
            }
        }
    }
    for c in (0..n).rev() {
        let s: f64 = (c + 1..n).map(|k| m[c][k] * x[k]).sum();
        x[c] = (x[c] - s) / m[c][c];
    }
    Some(x)
}
