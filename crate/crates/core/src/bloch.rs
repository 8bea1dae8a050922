//! Crank-Nicolson discretization of the Bloch equation in the rotating frame
//! and its exact discrete adjoint, tangent and Hessian action.

use crate::ssn::{Linearization, ReducedModel};

/// Gyromagnetic ratio used for the control scaling and offset frequencies.
pub const GYROMAGNETIC_RATIO: f64 = 267.51;
/// Field strength multiplying the unscaled control.
pub const FIELD_STRENGTH: f64 = 1e-2;

pub type Vec3 = [f64; 3];

#[derive(Debug, Clone)]
pub struct BlochProblem {
    pub horizon: f64,
    pub intervals: usize,
    pub offsets: Vec<f64>,
    pub targets: Vec<Vec3>,
    pub initial: Vec3,
    /// factor turning the unscaled control into a field component
    pub scale: f64,
}

/// Node values `M_0..M_N` per offset and the interval-wise adjoint.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<Vec<Vec3>>,
    pub adjoints: Vec<Vec<Vec3>>,
}

// derivative of the field matrix with respect to the two control components
const DB: [[[f64; 3]; 3]; 2] = [
    [[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0]],
    [[0.0, 0.0, -1.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
];

fn field(omega: f64, b1: f64, b2: f64) -> [[f64; 3]; 3] {
    [[0.0, omega, -b2], [-omega, 0.0, b1], [b2, -b1, 0.0]]
}

fn mat_vec(a: &[[f64; 3]; 3], x: Vec3) -> Vec3 {
    [
        a[0][0] * x[0] + a[0][1] * x[1] + a[0][2] * x[2],
        a[1][0] * x[0] + a[1][1] * x[1] + a[1][2] * x[2],
        a[2][0] * x[0] + a[2][1] * x[1] + a[2][2] * x[2],
    ]
}

fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scale(c: f64, a: Vec3) -> Vec3 {
    [c * a[0], c * a[1], c * a[2]]
}

fn dot3(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// `(I + c·B) x` for the skew matrix `B`.
fn shift_apply(b: &[[f64; 3]; 3], c: f64, x: Vec3) -> Vec3 {
    add(x, scale(c, mat_vec(b, x)))
}

/// Solves `(I + c·B) y = r` by Cramer's rule; always invertible for skew `B`.
fn shift_solve(b: &[[f64; 3]; 3], c: f64, r: Vec3) -> Vec3 {
    let mut a = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            a[i][j] = c * b[i][j] + if i == j { 1.0 } else { 0.0 };
        }
    }
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&a);
    let mut y = [0.0; 3];
    for (k, yk) in y.iter_mut().enumerate() {
        let mut ak = a;
        for i in 0..3 {
            ak[i][k] = r[i];
        }
        *yk = det(&ak) / d;
    }
    y
}

impl BlochProblem {
    /// Single or multiple isochromats with the standard scaling and `M(0) = e₃`.
    pub fn new(horizon: f64, intervals: usize, offsets: Vec<f64>, targets: Vec<Vec3>) -> Self {
        assert!(intervals >= 1, "need at least one interval");
        assert_eq!(offsets.len(), targets.len(), "one target per offset");
        Self { horizon, intervals, offsets, targets, initial: [0.0, 0.0, 1.0], scale: GYROMAGNETIC_RATIO * FIELD_STRENGTH }
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.intervals as f64
    }

    fn matrix(&self, j: usize, u: &[f64], m: usize) -> [[f64; 3]; 3] {
        field(self.offsets[j], self.scale * u[2 * m], self.scale * u[2 * m + 1])
    }

    fn check(&self, u: &[f64]) {
        assert_eq!(u.len(), 2 * self.intervals, "control must have two components per interval");
    }

    /// Node states `M_0..M_N` per offset.
    pub fn solve_state(&self, u: &[f64]) -> Vec<Vec<Vec3>> {
        self.check(u);
        let c = 0.5 * self.step();
        (0..self.offsets.len())
            .map(|j| {
                let mut traj = Vec::with_capacity(self.intervals + 1);
                traj.push(self.initial);
                for m in 0..self.intervals {
                    let b = self.matrix(j, u, m);
                    let rhs = shift_apply(&b, c, traj[m]);
                    traj.push(shift_solve(&b, -c, rhs));
                }
                traj
            })
            .collect()
    }

    pub fn objective(&self, u: &[f64]) -> f64 {
        let states = self.solve_state(u);
        self.misfit(&states)
    }

    fn misfit(&self, states: &[Vec<Vec3>]) -> f64 {
        states
            .iter()
            .zip(&self.targets)
            .map(|(s, t)| {
                let r = sub(s[self.intervals], *t);
                0.5 * dot3(r, r)
            })
            .sum()
    }

    /// Discrete adjoint multipliers `μ_1..μ_N` of the forward recursion.
    pub fn solve_adjoint(&self, u: &[f64], states: &[Vec<Vec3>]) -> Vec<Vec<Vec3>> {
        let c = 0.5 * self.step();
        (0..self.offsets.len())
            .map(|j| {
                let mut mu = vec![[0.0; 3]; self.intervals];
                let mut lam = sub(states[j][self.intervals], self.targets[j]);
                for m in (0..self.intervals).rev() {
                    let b = self.matrix(j, u, m);
                    mu[m] = shift_solve(&b, c, lam);
                    lam = shift_apply(&b, -c, mu[m]);
                }
                mu
            })
            .collect()
    }

    pub fn trajectory(&self, u: &[f64]) -> Trajectory {
        let states = self.solve_state(u);
        let adjoints = self.solve_adjoint(u, &states);
        Trajectory { states, adjoints }
    }

    /// Per-interval `(hs/2)·μ_mᵀ E_k (a_m + a_{m−1})`, divided by `h`.
    fn assemble(&self, mus: &[Vec<Vec3>], nodes: &[Vec<Vec3>], out: &mut [f64]) {
        let f = 0.5 * self.scale;
        for (mu, x) in mus.iter().zip(nodes) {
            for m in 0..self.intervals {
                let s = add(x[m + 1], x[m]);
                for k in 0..2 {
                    out[2 * m + k] += f * dot3(mu[m], mat_vec(&DB[k], s));
                }
            }
        }
    }

    /// `p = −F′(u)` as an element of the piecewise constant control space.
    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let tr = self.trajectory(u);
        self.gradient_from(&tr)
    }

    fn gradient_from(&self, tr: &Trajectory) -> Vec<f64> {
        let mut g = vec![0.0; 2 * self.intervals];
        self.assemble(&tr.adjoints, &tr.states, &mut g);
        g.iter_mut().for_each(|v| *v = -*v);
        g
    }

    fn linearized_nodes(&self, u: &[f64], states: &[Vec<Vec3>], phi: &[f64]) -> Vec<Vec<Vec3>> {
        let c = 0.5 * self.step();
        (0..self.offsets.len())
            .map(|j| {
                let mut d = Vec::with_capacity(self.intervals + 1);
                d.push([0.0; 3]);
                for m in 0..self.intervals {
                    let b = self.matrix(j, u, m);
                    let db = field(0.0, self.scale * phi[2 * m], self.scale * phi[2 * m + 1]);
                    let src = scale(c, mat_vec(&db, add(states[j][m + 1], states[j][m])));
                    let rhs = add(shift_apply(&b, c, d[m]), src);
                    d.push(shift_solve(&b, -c, rhs));
                }
                d
            })
            .collect()
    }

    /// Terminal tangent `δM(T)` per offset in direction `φ`.
    pub fn solve_linearized_state(&self, u: &[f64], phi: &[f64]) -> Vec<Vec3> {
        self.check(phi);
        let states = self.solve_state(u);
        self.linearized_nodes(u, &states, phi).into_iter().map(|d| d[self.intervals]).collect()
    }

    fn hessian_from(&self, u: &[f64], tr: &Trajectory, phi: &[f64], out: &mut [f64]) {
        let c = 0.5 * self.step();
        let dm = self.linearized_nodes(u, &tr.states, phi);
        let dmu: Vec<Vec<Vec3>> = (0..self.offsets.len())
            .map(|j| {
                let mut dmu = vec![[0.0; 3]; self.intervals];
                let mut dlam = dm[j][self.intervals];
                for m in (0..self.intervals).rev() {
                    let b = self.matrix(j, u, m);
                    let db = field(0.0, self.scale * phi[2 * m], self.scale * phi[2 * m + 1]);
                    let dbmu = scale(c, mat_vec(&db, tr.adjoints[j][m]));
                    dmu[m] = shift_solve(&b, c, sub(dlam, dbmu));
                    dlam = sub(shift_apply(&b, -c, dmu[m]), dbmu);
                }
                dmu
            })
            .collect();
        out.iter_mut().for_each(|v| *v = 0.0);
        self.assemble(&dmu, &tr.states, out);
        self.assemble(&tr.adjoints, &dm, out);
    }

    /// `F″(u)φ` in the piecewise constant control space.
    pub fn hessian_action(&self, u: &[f64], phi: &[f64]) -> Vec<f64> {
        self.check(phi);
        let tr = self.trajectory(u);
        let mut out = vec![0.0; 2 * self.intervals];
        self.hessian_from(u, &tr, phi, &mut out);
        out
    }

    /// `L²` pairing of piecewise constant controls.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.step() * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
    }

    pub fn terminal_states(&self, u: &[f64]) -> Vec<Vec3> {
        self.solve_state(u).into_iter().map(|s| s[self.intervals]).collect()
    }
}

pub struct BlochLinearization<'a> {
    problem: &'a BlochProblem,
    u: Vec<f64>,
    trajectory: Trajectory,
    dual: Vec<f64>,
}

impl Linearization for BlochLinearization<'_> {
    fn dual(&self) -> &[f64] {
        &self.dual
    }

    fn objective(&self) -> f64 {
        self.problem.misfit(&self.trajectory.states)
    }

    fn apply_hessian(&self, phi: &[f64], out: &mut [f64]) {
        self.problem.hessian_from(&self.u, &self.trajectory, phi, out);
    }
}

impl ReducedModel for BlochProblem {
    fn node_dim(&self) -> usize {
        2
    }

    fn node_count(&self) -> usize {
        self.intervals
    }

    fn node_weight(&self, _node: usize) -> f64 {
        self.step()
    }

    fn linearize(&self, u: &[f64]) -> Box<dyn Linearization + '_> {
        let trajectory = self.trajectory(u);
        let dual = self.gradient_from(&trajectory);
        Box::new(BlochLinearization { problem: self, u: u.to_vec(), trajectory, dual })
    }
}
