//! P1 finite elements for linearized elasticity on `[0,1]×[0,2]`, clamped at
//! the bottom edge, and the semismooth Newton method on the `(y, p)` system.

use crate::numerics::{NumericsError, SparseLu, SparseMatrix};
use crate::penalty::{Penalty, YosidaMap};
use crate::ssn::{fixed_continuation, ContinuationResult, IterationStats, SolverConfig, SsnError, SsnOutcome};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ElasticityProblem {
    pub young: f64,
    pub poisson: f64,
    /// vertices in the horizontal direction
    pub nx: usize,
    /// vertices in the vertical direction
    pub ny: usize,
    pub width: f64,
    pub height: f64,
}

impl ElasticityProblem {
    /// `resolution` vertices in each direction, `E = 20`, `ν = 0.3`.
    pub fn new(resolution: usize) -> Self {
        Self { young: 20.0, poisson: 0.3, nx: resolution, ny: resolution, width: 1.0, height: 2.0 }
    }

    /// `(μ, λ)`
    pub fn lame(&self) -> (f64, f64) {
        let (e, nu) = (self.young, self.poisson);
        (e / (2.0 * (1.0 + nu)), e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)))
    }
}

#[derive(Debug, Clone)]
pub struct FemDiscretization {
    pub nx: usize,
    pub ny: usize,
    pub coords: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// full vector mass matrix, dofs interleaved per node
    pub mass: SparseMatrix,
    pub strain: SparseMatrix,
    pub divergence: SparseMatrix,
    /// `2μL + λK` with identity rows and columns on clamped dofs
    pub stiffness: SparseMatrix,
    pub clamped: Vec<bool>,
    /// free dof index per dof, `usize::MAX` if clamped
    free_index: Vec<usize>,
    free_dofs: Vec<usize>,
}

fn triangle_gradients(p: [[f64; 2]; 3]) -> (f64, [[f64; 2]; 3]) {
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    assert!(det.abs() > 0.0, "degenerate triangle");
    let area = 0.5 * det.abs();
    let mut g = [[0.0; 2]; 3];
    for a in 0..3 {
        let b = (a + 1) % 3;
        let c = (a + 2) % 3;
        g[a] = [(p[b][1] - p[c][1]) / det, (p[c][0] - p[b][0]) / det];
    }
    (area, g)
}

pub fn assemble(problem: &ElasticityProblem) -> FemDiscretization {
    let (nx, ny) = (problem.nx, problem.ny);
    assert!(nx >= 2 && ny >= 2, "need at least two vertices per direction");
    let (mu, lambda) = problem.lame();
    let mut coords = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            coords.push([
                problem.width * ix as f64 / (nx - 1) as f64,
                problem.height * iy as f64 / (ny - 1) as f64,
            ]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for iy in 0..ny - 1 {
        for ix in 0..nx - 1 {
            let a = iy * nx + ix;
            let b = a + 1;
            let c = a + nx + 1;
            let d = a + nx;
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    let ndof = 2 * nx * ny;
    let mut mt = Vec::with_capacity(triangles.len() * 18);
    let mut lt = Vec::with_capacity(triangles.len() * 36);
    let mut kt = Vec::with_capacity(triangles.len() * 36);
    for t in &triangles {
        let (area, g) = triangle_gradients([coords[t[0]], coords[t[1]], coords[t[2]]]);
        for a in 0..3 {
            for b in 0..3 {
                let m = area / 12.0 * if a == b { 2.0 } else { 1.0 };
                let gg = g[a][0] * g[b][0] + g[a][1] * g[b][1];
                for c in 0..2 {
                    mt.push((2 * t[a] + c, 2 * t[b] + c, m));
                    for d in 0..2 {
                        let eps = 0.5 * (if c == d { gg } else { 0.0 } + g[a][d] * g[b][c]);
                        lt.push((2 * t[a] + c, 2 * t[b] + d, area * eps));
                        kt.push((2 * t[a] + c, 2 * t[b] + d, area * g[a][c] * g[b][d]));
                    }
                }
            }
        }
    }
    let mass = SparseMatrix::from_triplets(ndof, ndof, &mt);
    let strain = SparseMatrix::from_triplets(ndof, ndof, &lt);
    let divergence = SparseMatrix::from_triplets(ndof, ndof, &kt);
    let clamped: Vec<bool> = (0..ndof).map(|dof| coords[dof / 2][1] == 0.0).collect();
    let mut at = Vec::new();
    for (i, j, v) in strain.triplets() {
        if !clamped[i] && !clamped[j] {
            at.push((i, j, 2.0 * mu * v));
        }
    }
    for (i, j, v) in divergence.triplets() {
        if !clamped[i] && !clamped[j] {
            at.push((i, j, lambda * v));
        }
    }
    for (i, c) in clamped.iter().enumerate() {
        if *c {
            at.push((i, i, 1.0));
        }
    }
    let stiffness = SparseMatrix::from_triplets(ndof, ndof, &at);
    let mut free_index = vec![usize::MAX; ndof];
    let mut free_dofs = Vec::new();
    for i in 0..ndof {
        if !clamped[i] {
            free_index[i] = free_dofs.len();
            free_dofs.push(i);
        }
    }
    FemDiscretization { nx, ny, coords, triangles, mass, strain, divergence, stiffness, clamped, free_index, free_dofs }
}

impl FemDiscretization {
    pub fn node_count(&self) -> usize {
        self.coords.len()
    }

    pub fn dof_count(&self) -> usize {
        2 * self.coords.len()
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free_dofs
    }

    /// Nodes on the clamped edge.
    pub fn bottom_nodes(&self) -> Vec<usize> {
        (0..self.node_count()).filter(|&n| self.clamped[2 * n]).collect()
    }

    /// `Z_h = M_h z` for a nodal field `z` (exact for piecewise linear `z`).
    pub fn load(&self, z: &[f64]) -> Vec<f64> {
        self.mass.matvec(z)
    }

    fn restrict(&self, a: &SparseMatrix) -> SparseMatrix {
        let n = self.free_dofs.len();
        let t: Vec<_> = a
            .triplets()
            .into_iter()
            .filter(|&(i, j, _)| !self.clamped[i] && !self.clamped[j])
            .map(|(i, j, v)| (self.free_index[i], self.free_index[j], v))
            .collect();
        SparseMatrix::from_triplets(n, n, &t)
    }

    pub fn stiffness_free(&self) -> SparseMatrix {
        self.restrict(&self.stiffness)
    }

    pub fn mass_free(&self) -> SparseMatrix {
        self.restrict(&self.mass)
    }

    /// Solves `A y = f` with `y = 0` on the clamped edge.
    pub fn solve_state(&self, f: &[f64]) -> Result<Vec<f64>, NumericsError> {
        let mut rhs = f.to_vec();
        for (i, c) in self.clamped.iter().enumerate() {
            if *c {
                rhs[i] = 0.0;
            }
        }
        crate::numerics::sparse_direct_solve(&self.stiffness, &rhs)
    }

    /// Control-to-state map `u ↦ A⁻¹ M u`.
    pub fn control_to_state(&self, u: &[f64]) -> Result<Vec<f64>, NumericsError> {
        self.solve_state(&self.mass.matvec(u))
    }

    /// Discrete residual `(Aᵀp + My − Z, Ay − M h_γ(p))` on the free dofs,
    /// concatenated, together with the nodal controls and regions.
    pub fn residual(
        &self,
        map: &dyn YosidaMap,
        load: &[f64],
        y: &[f64],
        p: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<usize>) {
        let nn = self.node_count();
        let mut u = vec![0.0; 2 * nn];
        let mut d = vec![0.0; 4 * nn];
        let mut regions = vec![0; nn];
        for i in 0..nn {
            let (h, dd) = (&mut u[2 * i..2 * i + 2], &mut d[4 * i..4 * i + 4]);
            regions[i] = map.eval(&p[2 * i..2 * i + 2], h, dd);
        }
        let ap = self.stiffness.matvec(p);
        let my = self.mass.matvec(y);
        let ay = self.stiffness.matvec(y);
        let mu = self.mass.matvec(&u);
        let nf = self.free_dofs.len();
        let mut r = vec![0.0; 2 * nf];
        for (k, &i) in self.free_dofs.iter().enumerate() {
            r[k] = ap[i] + my[i] - load[i];
            r[nf + k] = ay[i] - mu[i];
        }
        (r, u, d, regions)
    }

    /// The Newton matrix `[[M, Aᵀ], [A, −M·D]]` on free dofs for the nodal
    /// `2×2` derivative blocks `d`.
    pub fn newton_matrix(&self, d: &[f64]) -> SparseMatrix {
        let nf = self.free_dofs.len();
        let mut t = Vec::new();
        for (i, j, v) in self.mass.triplets() {
            if self.clamped[i] || self.clamped[j] {
                continue;
            }
            let (fi, fj) = (self.free_index[i], self.free_index[j]);
            t.push((fi, fj, v));
            // (M·D)_{(a,c),(b,e)} = m_ab D_b[c][e]
            let (node, c) = (j / 2, j % 2);
            for e in 0..2 {
                let col = 2 * node + e;
                if !self.clamped[col] {
                    let dv = d[4 * node + 2 * c + e];
                    if dv != 0.0 {
                        t.push((nf + fi, nf + self.free_index[col], -v * dv));
                    }
                }
            }
        }
        for (i, j, v) in self.stiffness.triplets() {
            if self.clamped[i] || self.clamped[j] {
                continue;
            }
            let (fi, fj) = (self.free_index[i], self.free_index[j]);
            t.push((fi, nf + fj, v));
            t.push((nf + fi, fj, v));
        }
        SparseMatrix::from_triplets(2 * nf, 2 * nf, &t)
    }

    /// Solves the Newton system for the free-dof right-hand side `rhs`.
    pub fn newton_block_solve(&self, d: &[f64], rhs: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NumericsError> {
        let nf = self.free_dofs.len();
        let lu = SparseLu::new(&self.newton_matrix(d))?;
        let x = lu.solve(rhs)?;
        let mut dy = vec![0.0; self.dof_count()];
        let mut dp = vec![0.0; self.dof_count()];
        for (k, &i) in self.free_dofs.iter().enumerate() {
            dy[i] = x[k];
            dp[i] = x[nf + k];
        }
        Ok((dy, dp))
    }
}

/// `z(x) = R(x − (½,1)) − x` at every node, `R` the rotation by `angle`.
pub fn make_rotation_target(disc: &FemDiscretization, angle: f64) -> Vec<f64> {
    let (c, s) = (angle.cos(), angle.sin());
    let mut z = Vec::with_capacity(disc.dof_count());
    for x in &disc.coords {
        let (a, b) = (x[0] - 0.5, x[1] - 1.0);
        z.push(c * a - s * b - x[0]);
        z.push(s * a + c * b - x[1]);
    }
    z
}

/// Displacement under a leftward traction of the given magnitude on the top
/// edge, plus seeded uniform noise of amplitude `noise`.
pub fn make_deadload_target(
    disc: &FemDiscretization,
    magnitude: f64,
    noise: f64,
    seed: u64,
) -> Result<Vec<f64>, NumericsError> {
    let mut f = vec![0.0; disc.dof_count()];
    let top = disc.coords.iter().map(|x| x[1]).fold(f64::NEG_INFINITY, f64::max);
    let hx = 1.0 / (disc.nx - 1) as f64;
    for (n, x) in disc.coords.iter().enumerate() {
        if x[1] == top {
            let ix = n % disc.nx;
            let share = if ix == 0 || ix == disc.nx - 1 { 0.5 * hx } else { hx };
            f[2 * n] = -magnitude * share;
        }
    }
    let mut y = disc.solve_state(&f)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in y.iter_mut() {
        *v += noise * rng.random_range(-1.0..1.0);
    }
    Ok(y)
}

/// State `(y, p)` after a solve, with the control `u = h_γ(p)`.
#[derive(Debug, Clone)]
pub struct ElasticitySolution {
    pub y: Vec<f64>,
    pub p: Vec<f64>,
    pub u: Vec<f64>,
}

pub struct ElasticitySolver<'a> {
    pub disc: &'a FemDiscretization,
    pub penalty: &'a dyn Penalty,
    load: Vec<f64>,
    pub max_iterations: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl<'a> ElasticitySolver<'a> {
    pub fn new(disc: &'a FemDiscretization, penalty: &'a dyn Penalty, target: &[f64]) -> Self {
        Self { disc, penalty, load: disc.load(target), max_iterations: 50 }
    }

    pub fn load(&self) -> &[f64] {
        &self.load
    }

    /// Newton iteration at fixed `γ` from the stacked state `[y; p]`, stopped
    /// when the nodal regions repeat after a full step.
    pub fn solve(&self, gamma: f64, yp: &[f64], config: &SolverConfig) -> SsnOutcome {
        let n = self.disc.dof_count();
        let map = self.penalty.regularize(gamma);
        let (mut y, mut p) = (yp[..n].to_vec(), yp[n..].to_vec());
        let (mut r, mut u, mut d, mut regions) = self.disc.residual(map.as_ref(), &self.load, &y, &p);
        let mut rn = norm(&r);
        let mut residuals = vec![rn];
        let mut step_sizes = Vec::new();
        let mut line_searches = 0;
        let mut iterations = 0;
        let mut converged = rn == 0.0;
        while !converged && iterations < self.max_iterations {
            let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
            let Ok((dy, dp)) = self.disc.newton_block_solve(&d, &rhs) else { break };
            let mut tau = 1.0;
            let accepted = loop {
                let yt: Vec<f64> = y.iter().zip(&dy).map(|(a, b)| a + tau * b).collect();
                let pt: Vec<f64> = p.iter().zip(&dp).map(|(a, b)| a + tau * b).collect();
                let next = self.disc.residual(map.as_ref(), &self.load, &yt, &pt);
                let nn = norm(&next.0);
                if nn < rn || nn == 0.0 {
                    break Some((yt, pt, next, nn));
                }
                tau *= config.backtrack;
                if tau < config.tau_min {
                    break None;
                }
            };
            iterations += 1;
            let Some((yt, pt, next, nn)) = accepted else { break };
            if tau < 1.0 {
                line_searches += 1;
            }
            let same = next.3 == regions;
            y = yt;
            p = pt;
            (r, u, d, regions) = next;
            rn = nn;
            residuals.push(rn);
            step_sizes.push(tau);
            converged = same && tau == 1.0;
        }
        let _ = d;
        let stats = IterationStats {
            gamma,
            ssn_iterations: iterations,
            avg_gmres: 0.0,
            line_searches,
            non_multibang: crate::ssn::count_non_multibang(self.penalty, &u, config.mb_tol),
            converged,
            residuals,
            step_sizes,
        };
        let mut out = y;
        out.extend_from_slice(&p);
        SsnOutcome { u: out, converged, stats }
    }

    /// Fixed-factor continuation from `y = p = 0`.
    pub fn run(&self, config: &SolverConfig) -> Result<(ElasticitySolution, ContinuationResult), SsnError> {
        let n = self.disc.dof_count();
        let res = fixed_continuation(config, &vec![0.0; 2 * n], |gamma, yp| self.solve(gamma, yp, config))?;
        let y = res.u[..n].to_vec();
        let p = res.u[n..].to_vec();
        let map = self.penalty.regularize(res.final_gamma);
        let mut u = vec![0.0; n];
        for i in 0..n / 2 {
            let h = map.yosida(&p[2 * i..2 * i + 2]);
            u[2 * i..2 * i + 2].copy_from_slice(&h);
        }
        Ok((ElasticitySolution { y, p, u }, res))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mass_total_is_area() {
        let disc = assemble(&ElasticityProblem::new(5));
        let ones: Vec<f64> = (0..disc.dof_count()).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let total: f64 = disc.mass.matvec(&ones).iter().zip(&ones).map(|(a, b)| a * b).sum();
        assert!((total - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_load_zero_state() {
        let disc = assemble(&ElasticityProblem::new(4));
        let y = disc.solve_state(&vec![0.0; disc.dof_count()]).unwrap();
        assert!(y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rotation_target_identity_angle() {
        let disc = assemble(&ElasticityProblem::new(3));
        let z = make_rotation_target(&disc, 0.0);
        for n in 0..disc.node_count() {
            assert!((z[2 * n] + 0.5).abs() < 1e-15 && (z[2 * n + 1] + 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn stiffness_symmetric() {
        let disc = assemble(&ElasticityProblem::new(6));
        assert!(disc.stiffness.asymmetry() < 1e-12);
        assert!(disc.mass.asymmetry() < 1e-15);
    }
}
