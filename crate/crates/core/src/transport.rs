//! Multimaterial flows on a directed graph with edge-length weighted fluxes.

use crate::penalty::{AdmissibleSet, PenaltyEngine, PenaltyError, PenaltyValue};
use crate::ssn::{Linearization, ReducedModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TransportError {
    #[error("graph is disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("edge {0} has nonpositive length")]
    DegenerateEdge(usize),
    #[error("vertex index {0} out of range")]
    VertexOutOfRange(usize),
    #[error("material {0} out of range")]
    MaterialOutOfRange(usize),
    #[error("sources and sinks of material {0} do not balance")]
    Unbalanced(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportNetwork {
    pub coords: Vec<[f64; 2]>,
    /// `(tail, head)`
    pub edges: Vec<(usize, usize)>,
    pub lengths: Vec<f64>,
    pub materials: usize,
}

/// One unit of transport: `amount` of `material` from `source` to `sink`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub material: usize,
    pub source: usize,
    pub sink: usize,
    pub amount: f64,
}

impl TransportNetwork {
    /// Edge lengths are the Euclidean distances of the endpoints.
    pub fn new(coords: Vec<[f64; 2]>, edges: Vec<(usize, usize)>, materials: usize) -> Result<Self, TransportError> {
        if materials == 0 {
            return Err(TransportError::InvalidParameter("at least one material".into()));
        }
        let mut lengths = Vec::with_capacity(edges.len());
        for (k, &(a, b)) in edges.iter().enumerate() {
            for v in [a, b] {
                if v >= coords.len() {
                    return Err(TransportError::VertexOutOfRange(v));
                }
            }
            let l = ((coords[a][0] - coords[b][0]).powi(2) + (coords[a][1] - coords[b][1]).powi(2)).sqrt();
            if !(l > 0.0) {
                return Err(TransportError::DegenerateEdge(k));
            }
            lengths.push(l);
        }
        let net = Self { coords, edges, lengths, materials };
        let components = net.components();
        if components != 1 {
            return Err(TransportError::Disconnected { components });
        }
        Ok(net)
    }

    pub fn vertex_count(&self) -> usize {
        self.coords.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    fn components(&self) -> usize {
        let n = self.coords.len();
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; n];
        let mut count = 0;
        for s in 0..n {
            if seen[s] {
                continue;
            }
            count += 1;
            seen[s] = true;
            let mut queue = VecDeque::from([s]);
            while let Some(v) = queue.pop_front() {
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
        }
        count
    }

    /// Influx minus outflux per vertex and material; `u` is edge-major.
    pub fn divergence(&self, u: &[f64]) -> Vec<f64> {
        let m = self.materials;
        assert_eq!(u.len(), m * self.edges.len(), "flux length");
        let mut out = vec![0.0; m * self.coords.len()];
        for (k, &(tail, head)) in self.edges.iter().enumerate() {
            for c in 0..m {
                out[head * m + c] += u[k * m + c];
                out[tail * m + c] -= u[k * m + c];
            }
        }
        out
    }

    /// Adjoint of [`divergence`](Self::divergence) for unit vertex weights
    /// and length-weighted edges.
    pub fn divergence_adjoint(&self, z: &[f64]) -> Vec<f64> {
        let m = self.materials;
        assert_eq!(z.len(), m * self.coords.len(), "vertex field length");
        let mut out = vec![0.0; m * self.edges.len()];
        for (k, &(tail, head)) in self.edges.iter().enumerate() {
            for c in 0..m {
                out[k * m + c] = (z[head * m + c] - z[tail * m + c]) / self.lengths[k];
            }
        }
        out
    }

    /// `(u, v) = Σ ℓ(e) u(e)·v(e)`
    pub fn edge_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        let m = self.materials;
        self.lengths
            .iter()
            .enumerate()
            .map(|(k, l)| l * (0..m).map(|c| u[k * m + c] * v[k * m + c]).sum::<f64>())
            .sum()
    }

    /// Vertex closest to `(fx, fy)` given as fractions of the bounding box.
    pub fn nearest_vertex(&self, fx: f64, fy: f64) -> usize {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &self.coords {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let target = [lo[0] + fx * (hi[0] - lo[0]), lo[1] + fy * (hi[1] - lo[1])];
        let dist = |p: &[f64; 2]| (p[0] - target[0]).powi(2) + (p[1] - target[1]).powi(2);
        (0..self.coords.len())
            .min_by(|&a, &b| dist(&self.coords[a]).total_cmp(&dist(&self.coords[b])))
            .expect("nonempty network")
    }

    /// Vertex field with `+amount` at sources and `−amount` at sinks.
    pub fn target(&self, scenarios: &[Scenario]) -> Result<Vec<f64>, TransportError> {
        let m = self.materials;
        let mut z = vec![0.0; m * self.coords.len()];
        for s in scenarios {
            if s.material >= m {
                return Err(TransportError::MaterialOutOfRange(s.material));
            }
            for v in [s.source, s.sink] {
                if v >= self.coords.len() {
                    return Err(TransportError::VertexOutOfRange(v));
                }
            }
            z[s.source * m + s.material] += s.amount;
            z[s.sink * m + s.material] -= s.amount;
        }
        for c in 0..m {
            let total: f64 = z.iter().skip(c).step_by(m).sum();
            if total.abs() > 1e-12 {
                return Err(TransportError::Unbalanced(c));
            }
        }
        Ok(z)
    }
}

/// `{0, m_1}×…×{0, m_m} ∪ {0, −m_1}×…×{0, −m_m}`, zero listed once.
pub fn build_admissible_set(amounts: &[f64]) -> Result<AdmissibleSet, PenaltyError> {
    let m = amounts.len();
    let mut points = Vec::with_capacity((1 << (m + 1)) - 1);
    for sign in [1.0, -1.0] {
        for mask in 0..(1usize << m) {
            if sign < 0.0 && mask == 0 {
                continue;
            }
            points.push((0..m).map(|i| if mask >> i & 1 == 1 { sign * amounts[i] } else { 0.0 }).collect());
        }
    }
    AdmissibleSet::new(points)
}

/// `Σ ℓ(e) g(u(e))`.
pub fn total_cost(net: &TransportNetwork, engine: &PenaltyEngine, u: &[f64]) -> Result<PenaltyValue, PenaltyError> {
    let m = net.materials;
    let mut total = 0.0;
    for (k, l) in net.lengths.iter().enumerate() {
        match engine.penalty_value(&u[k * m..(k + 1) * m])? {
            PenaltyValue::Finite(v) => total += l * v,
            PenaltyValue::Infinite => return Ok(PenaltyValue::Infinite),
        }
    }
    Ok(PenaltyValue::Finite(total))
}

fn circumcircle(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> ([f64; 2], f64) {
    let d = 2.0 * (p[0] * (q[1] - r[1]) + q[0] * (r[1] - p[1]) + r[0] * (p[1] - q[1]));
    let n = |a: [f64; 2]| a[0] * a[0] + a[1] * a[1];
    let ux = (n(p) * (q[1] - r[1]) + n(q) * (r[1] - p[1]) + n(r) * (p[1] - q[1])) / d;
    let uy = (n(p) * (r[0] - q[0]) + n(q) * (p[0] - r[0]) + n(r) * (q[0] - p[0])) / d;
    let c = [ux, uy];
    (c, (c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2))
}

/// Bowyer–Watson triangulation. Points on a circumcircle (within a relative
/// tolerance) do not invalidate the triangle, so cocircular input keeps the
/// triangle inserted first.
pub fn delaunay(points: &[[f64; 2]]) -> Vec<[usize; 3]> {
    let n = points.len();
    if n < 3 {
        return Vec::new();
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
    let mid = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let mut pts = points.to_vec();
    pts.push([mid[0] - 20.0 * span, mid[1] - span]);
    pts.push([mid[0], mid[1] + 20.0 * span]);
    pts.push([mid[0] + 20.0 * span, mid[1] - span]);
    let mut tris: Vec<([usize; 3], [f64; 2], f64)> = Vec::new();
    let (a, b, c) = (n, n + 1, n + 2);
    let (cc, r2) = circumcircle(pts[a], pts[b], pts[c]);
    tris.push(([a, b, c], cc, r2));
    let tol = 1e-10 * span * span;
    for i in 0..n {
        let p = pts[i];
        let (bad, good): (Vec<_>, Vec<_>) = tris
            .into_iter()
            .partition(|(_, c, r2)| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) < r2 - tol);
        tris = good;
        let mut boundary: Vec<(usize, usize)> = Vec::new();
        for (t, _, _) in &bad {
            for e in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                if let Some(pos) = boundary.iter().position(|&(x, y)| (x, y) == (e.1, e.0) || (x, y) == e) {
                    boundary.swap_remove(pos);
                } else {
                    boundary.push(e);
                }
            }
        }
        for (x, y) in boundary {
            let (cc, r2) = circumcircle(pts[x], pts[y], p);
            tris.push(([x, y, i], cc, r2));
        }
    }
    tris.into_iter().filter(|(t, _, _)| t.iter().all(|&v| v < n)).map(|(t, _, _)| t).collect()
}

/// Network generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkSpec {
    /// vertices per side of the square grid
    pub grid_n: usize,
    /// distance of neighboring grid points
    pub spacing: f64,
    /// jitter amplitude as a fraction of the grid spacing
    pub jitter: f64,
    pub seed: u64,
    /// edges longer than this multiple of the median length are removed
    pub prune_factor: f64,
    pub materials: usize,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self { grid_n: 10, spacing: 1.0, jitter: 0.3, seed: 0, prune_factor: 2.0, materials: 3 }
    }
}

/// Jittered square grid, Delaunay edges, long edges pruned.
pub fn generate_network(spec: &NetworkSpec) -> Result<TransportNetwork, TransportError> {
    if spec.grid_n < 2 {
        return Err(TransportError::InvalidParameter("grid_n must be at least 2".into()));
    }
    if !(spec.jitter >= 0.0 && spec.jitter < 0.5) {
        return Err(TransportError::InvalidParameter("jitter must lie in [0, 0.5)".into()));
    }
    if !(spec.spacing > 0.0) {
        return Err(TransportError::InvalidParameter("spacing must be positive".into()));
    }
    let n = spec.grid_n;
    let h = spec.spacing;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut coords = Vec::with_capacity(n * n);
    for iy in 0..n {
        for ix in 0..n {
            let mut p = [ix as f64 * h, iy as f64 * h];
            if spec.jitter > 0.0 {
                p[0] += spec.jitter * h * rng.random_range(-1.0..1.0);
                p[1] += spec.jitter * h * rng.random_range(-1.0..1.0);
            }
            coords.push(p);
        }
    }
    let mut edges = BTreeSet::new();
    for t in delaunay(&coords) {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    let length = |&(a, b): &(usize, usize)| {
        let (p, q): ([f64; 2], [f64; 2]) = (coords[a], coords[b]);
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
    };
    let mut lens: Vec<f64> = edges.iter().map(length).collect();
    lens.sort_by(f64::total_cmp);
    let median = if lens.is_empty() { 0.0 } else { lens[lens.len() / 2] };
    let cutoff = spec.prune_factor * median;
    let edges: Vec<(usize, usize)> = edges.into_iter().filter(|e| length(e) <= cutoff).collect();
    TransportNetwork::new(coords, edges, spec.materials)
}

/// Source and sink locations of the first material layout, as fractions of
/// the network extent: three sources at the bottom, sinks reversed at the top.
pub const BASE_SOURCES: [(f64, f64); 3] = [(0.0, 0.2), (0.4, 0.0), (0.75, 0.1)];
pub const BASE_SINKS: [(f64, f64); 3] = [(0.65, 0.9), (0.42, 0.98), (0.0, 0.85)];

/// Layouts of the four example configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// all three materials from bottom to top
    Joint,
    /// third material reversed
    ReversedThird,
    /// sinks of the first and third material swapped
    SwappedSinks,
    /// an additional fourth material
    FourMaterials,
}

impl Layout {
    pub fn materials(self) -> usize {
        if self == Layout::FourMaterials {
            4
        } else {
            3
        }
    }

    /// `(source, sink)` fractional positions per material.
    pub fn positions(self) -> Vec<((f64, f64), (f64, f64))> {
        let s = BASE_SOURCES;
        let t = BASE_SINKS;
        match self {
            Layout::Joint => vec![(s[0], t[0]), (s[1], t[1]), (s[2], t[2])],
            Layout::ReversedThird => vec![(s[0], t[0]), (s[1], t[1]), (t[2], s[2])],
            Layout::SwappedSinks => vec![(s[0], t[2]), (s[1], t[1]), (s[2], t[0])],
            Layout::FourMaterials => vec![
                ((0.25, 0.23), (0.42, 0.98)),
                ((0.4, 0.0), (0.0, 0.85)),
                ((0.75, 0.1), (0.85, 0.98)),
                ((0.0, 0.0), (0.65, 0.9)),
            ],
        }
    }

    pub fn scenarios(self, net: &TransportNetwork, amount: f64) -> Vec<Scenario> {
        self.positions()
            .into_iter()
            .enumerate()
            .map(|(material, (a, b))| Scenario {
                material,
                source: net.nearest_vertex(a.0, a.1),
                sink: net.nearest_vertex(b.0, b.1),
                amount,
            })
            .collect()
    }
}

/// `F(u) = ½|Su − z|²` over edge fluxes.
#[derive(Debug, Clone)]
pub struct TransportProblem {
    pub net: TransportNetwork,
    pub target: Vec<f64>,
}

impl TransportProblem {
    pub fn new(net: TransportNetwork, target: Vec<f64>) -> Self {
        assert_eq!(target.len(), net.materials * net.vertex_count(), "target length");
        Self { net, target }
    }

    pub fn misfit(&self, u: &[f64]) -> Vec<f64> {
        let mut r = self.net.divergence(u);
        r.iter_mut().zip(&self.target).for_each(|(a, b)| *a -= b);
        r
    }

    /// `p = S*(z − Su)`
    pub fn dual(&self, u: &[f64]) -> Vec<f64> {
        let r: Vec<f64> = self.misfit(u).into_iter().map(|v| -v).collect();
        self.net.divergence_adjoint(&r)
    }
}

struct TransportLinearization<'a> {
    problem: &'a TransportProblem,
    dual: Vec<f64>,
    objective: f64,
}

impl Linearization for TransportLinearization<'_> {
    fn dual(&self) -> &[f64] {
        &self.dual
    }

    fn objective(&self) -> f64 {
        self.objective
    }

    fn apply_hessian(&self, phi: &[f64], out: &mut [f64]) {
        let s = self.problem.net.divergence_adjoint(&self.problem.net.divergence(phi));
        out.copy_from_slice(&s);
    }
}

impl ReducedModel for TransportProblem {
    fn node_dim(&self) -> usize {
        self.net.materials
    }

    fn node_count(&self) -> usize {
        self.net.edge_count()
    }

    fn node_weight(&self, node: usize) -> f64 {
        self.net.lengths[node]
    }

    fn linearize(&self, u: &[f64]) -> Box<dyn Linearization + '_> {
        let r = self.misfit(u);
        let objective = 0.5 * r.iter().map(|v| v * v).sum::<f64>();
        let dual = self.net.divergence_adjoint(&r.iter().map(|v| -v).collect::<Vec<_>>());
        Box::new(TransportLinearization { problem: self, dual, objective })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path() -> TransportNetwork {
        TransportNetwork::new(vec![[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]], vec![(0, 1), (1, 2)], 1).unwrap()
    }

    #[test]
    fn divergence_of_path() {
        assert_eq!(path().divergence(&[1.0, 1.0]), vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn adjoint_plug_in() {
        let s = path().divergence_adjoint(&[0.0, 0.0, 1.0]);
        assert_eq!(s, vec![0.0, 0.5]);
    }

    #[test]
    fn admissible_set_sizes() {
        assert_eq!(build_admissible_set(&[1.0]).unwrap().len(), 3);
        assert_eq!(build_admissible_set(&[1.0, 1.0]).unwrap().len(), 7);
        assert_eq!(build_admissible_set(&[1.0; 3]).unwrap().len(), 15);
    }

    #[test]
    fn unit_square_triangulation() {
        let net = generate_network(&NetworkSpec { grid_n: 2, jitter: 0.0, materials: 1, ..Default::default() }).unwrap();
        assert_eq!(net.vertex_count(), 4);
        assert_eq!(net.edge_count(), 5);
    }

    #[test]
    fn disconnected_rejected() {
        let e = TransportNetwork::new(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], vec![(0, 1)], 1);
        assert_eq!(e, Err(TransportError::Disconnected { components: 2 }));
    }

    #[test]
    fn unbalanced_target_rejected() {
        let net = path();
        let z = net.target(&[Scenario { material: 0, source: 0, sink: 0, amount: 1.0 }]).unwrap();
        assert!(z.iter().all(|v| *v == 0.0));
        assert!(net.target(&[Scenario { material: 1, source: 0, sink: 2, amount: 1.0 }]).is_err());
    }
}
