//! Reference computations shared by the integration tests. These avoid the
//! library's own solvers and use `nalgebra` directly.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// All index subsets of `0..n` with `1..=k` elements.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if !cur.is_empty() {
            out.push(cur.clone());
        }
        if cur.len() == k {
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

fn affinely_independent(points: &[Vec<f64>], s: &[usize]) -> bool {
    if s.len() == 1 {
        return true;
    }
    let m = points[0].len();
    let d = DMatrix::from_fn(m, s.len() - 1, |r, c| points[s[c + 1]][r] - points[s[0]][r]);
    d.svd(false, false).singular_values.iter().all(|v| *v > 1e-10)
}

/// Precomputed affinely independent supports of a point set.
pub struct Supports {
    points: Vec<Vec<f64>>,
    costs: Vec<f64>,
    sets: Vec<Vec<usize>>,
}

impl Supports {
    pub fn new(points: &[Vec<f64>], costs: &[f64]) -> Self {
        let m = points[0].len();
        let sets = subsets(points.len(), m + 1).into_iter().filter(|s| affinely_independent(points, s)).collect();
        Self { points: points.to_vec(), costs: costs.to_vec(), sets }
    }

    /// `h_γ(q) = argmin_v g(v) + (γ/2)|v − q/γ|²` written over convex weights
    /// `λ` of the points: for each support, the equality-constrained QP is
    /// solved through its KKT system, and the feasible solution with the
    /// smallest violation of the remaining optimality conditions is kept.
    pub fn yosida(&self, q: &[f64], gamma: f64) -> Vec<f64> {
        let m = q.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for s in &self.sets {
            let k = s.len();
            let mut kkt = DMatrix::zeros(k + 1, k + 1);
            let mut rhs = DVector::zeros(k + 1);
            for a in 0..k {
                for b in 0..k {
                    kkt[(a, b)] = gamma * dot(&self.points[s[a]], &self.points[s[b]]);
                }
                kkt[(a, k)] = 1.0;
                kkt[(k, a)] = 1.0;
                rhs[a] = dot(&self.points[s[a]], q) - self.costs[s[a]];
            }
            rhs[k] = 1.0;
            let Some(sol) = kkt.lu().solve(&rhs) else { continue };
            let lambda: Vec<f64> = (0..k).map(|a| sol[a]).collect();
            if lambda.iter().any(|l| *l < -1e-12) {
                continue;
            }
            let mu = sol[k];
            let mut v = vec![0.0; m];
            for (a, l) in lambda.iter().enumerate() {
                for c in 0..m {
                    v[c] += l * self.points[s[a]][c];
                }
            }
            // reduced costs of the points outside the support must be ≥ 0
            let mut violation: f64 = 0.0;
            for (i, p) in self.points.iter().enumerate() {
                if s.contains(&i) {
                    continue;
                }
                let r = self.costs[i] - dot(p, q) + gamma * dot(p, &v) + mu;
                violation = violation.max(-r);
            }
            let better = match &best {
                None => true,
                Some((bv, _)) => violation < *bv,
            };
            if better {
                best = Some((violation, v));
            }
        }
        best.expect("some support is feasible").1
    }
}

/// Distance from `x` to the convex hull of `points`.
pub fn hull_distance(points: &[Vec<f64>], x: &[f64]) -> f64 {
    let m = x.len();
    let mut best = f64::INFINITY;
    for s in subsets(points.len(), m + 1) {
        if !affinely_independent(points, &s) {
            continue;
        }
        // project onto the affine hull, keep it if the weights are nonnegative
        let k = s.len();
        let base = &points[s[0]];
        let d = DMatrix::from_fn(m, k - 1, |r, c| points[s[c + 1]][r] - base[r]);
        let rhs = DVector::from_fn(m, |r, _| x[r] - base[r]);
        let t = if k == 1 {
            DVector::zeros(0)
        } else {
            (d.transpose() * &d).lu().solve(&(d.transpose() * &rhs)).expect("independent")
        };
        if t.iter().any(|v| *v < -1e-12) || t.iter().sum::<f64>() > 1.0 + 1e-12 {
            continue;
        }
        let proj = DVector::from_fn(m, |r, _| base[r]) + &d * &t;
        let dist = (DVector::from_fn(m, |r, _| x[r]) - proj).norm();
        best = best.min(dist);
    }
    best
}

/// Random point set containing the origin, with distinct points.
pub fn random_points(rng: &mut ChaCha8Rng, m: usize, size: usize) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; m]];
    while pts.len() < size {
        let p: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
        if pts.iter().all(|o| max_abs_diff(o, &p) > 0.0) {
            pts.push(p);
        }
    }
    pts
}

/// `F(u) = ½ Σ wᵢ|uᵢ − zᵢ|² + ½ κ Σ |uᵢ₊₁ − uᵢ|²` over a chain of nodes.
/// With `κ = 0` this is the identity control-to-state map.
pub struct QuadraticModel {
    pub dim: usize,
    pub weights: Vec<f64>,
    pub target: Vec<f64>,
    pub coupling: f64,
}

impl QuadraticModel {
    /// Weighted gradient `F′(u)`.
    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let mut g: Vec<f64> = u.iter().zip(&self.target).map(|(a, b)| a - b).collect();
        let mut lap = vec![0.0; u.len()];
        self.laplacian(u, &mut lap);
        for (i, w) in self.weights.iter().enumerate() {
            for c in 0..self.dim {
                g[i * self.dim + c] += self.coupling * lap[i * self.dim + c] / w;
            }
        }
        g
    }

    fn laplacian(&self, u: &[f64], out: &mut [f64]) {
        let m = self.dim;
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.weights.len().saturating_sub(1) {
            for c in 0..m {
                let d = u[(i + 1) * m + c] - u[i * m + c];
                out[i * m + c] -= d;
                out[(i + 1) * m + c] += d;
            }
        }
    }

    pub fn objective(&self, u: &[f64]) -> f64 {
        let m = self.dim;
        let mut f = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            f += 0.5 * w * (0..m).map(|c| (u[i * m + c] - self.target[i * m + c]).powi(2)).sum::<f64>();
        }
        for i in 0..self.weights.len().saturating_sub(1) {
            f += 0.5 * self.coupling * (0..m).map(|c| (u[(i + 1) * m + c] - u[i * m + c]).powi(2)).sum::<f64>();
        }
        f
    }
}

struct QuadraticLinearization<'a> {
    model: &'a QuadraticModel,
    dual: Vec<f64>,
    objective: f64,
}

impl multibang::ssn::Linearization for QuadraticLinearization<'_> {
    fn dual(&self) -> &[f64] {
        &self.dual
    }

    fn objective(&self) -> f64 {
        self.objective
    }

    fn apply_hessian(&self, phi: &[f64], out: &mut [f64]) {
        let m = self.model.dim;
        self.model.laplacian(phi, out);
        for (i, w) in self.model.weights.iter().enumerate() {
            for c in 0..m {
                out[i * m + c] = phi[i * m + c] + self.model.coupling * out[i * m + c] / w;
            }
        }
    }
}

impl multibang::ssn::ReducedModel for QuadraticModel {
    fn node_dim(&self) -> usize {
        self.dim
    }

    fn node_count(&self) -> usize {
        self.weights.len()
    }

    fn node_weight(&self, node: usize) -> f64 {
        self.weights[node]
    }

    fn linearize(&self, u: &[f64]) -> Box<dyn multibang::ssn::Linearization + '_> {
        let dual = self.gradient(u).into_iter().map(|v| -v).collect();
        Box::new(QuadraticLinearization { model: self, dual, objective: self.objective(u) })
    }
}
