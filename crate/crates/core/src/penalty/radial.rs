use super::{AdmissibleSet, CostKind, CostSpec, Penalty, PenaltyError, YosidaMap};
use crate::numerics::DenseMatrix;
use std::f64::consts::PI;

/// Zero together with `M > 2` points of common amplitude `ω₀` at the given
/// phases, with quadratic cost.
#[derive(Debug, Clone)]
pub struct RadialParams {
    omega0: f64,
    alpha: f64,
    phases: Vec<f64>,
    /// `[0, ū_1, …, ū_M]`
    points: Vec<Vec<f64>>,
}

/// Regions of the Yosida map; indices run over `1..=M` and `Edge(i)`,
/// `ZeroEdge(i)` refer to the pair `(i, i+1)` taken cyclically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadialRegion {
    Zero,
    Vertex(usize),
    ZeroVertex(usize),
    Edge(usize),
    ZeroEdge(usize),
}

impl RadialRegion {
    pub fn id(self, count: usize) -> usize {
        match self {
            RadialRegion::Zero => 0,
            RadialRegion::Vertex(i) => i,
            RadialRegion::ZeroVertex(i) => count + i,
            RadialRegion::Edge(i) => 2 * count + i,
            RadialRegion::ZeroEdge(i) => 3 * count + i,
        }
    }

    /// Label listing the active control values, e.g. `Q0_2_3`.
    pub fn tag(self, count: usize) -> String {
        let next = |i: usize| i % count + 1;
        match self {
            RadialRegion::Zero => "Q0".into(),
            RadialRegion::Vertex(i) => format!("Q{i}"),
            RadialRegion::ZeroVertex(i) => format!("Q0_{i}"),
            RadialRegion::Edge(i) => format!("Q{i}_{}", next(i)),
            RadialRegion::ZeroEdge(i) => format!("Q0_{i}_{}", next(i)),
        }
    }
}

impl RadialParams {
    /// Phases may be given in any order and any `2π` window.
    pub fn new(omega0: f64, phases: &[f64], alpha: f64) -> Result<Self, PenaltyError> {
        if !(omega0 > 0.0 && omega0.is_finite()) {
            return Err(PenaltyError::Radial("amplitude must be positive".into()));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(PenaltyError::InvalidCost);
        }
        if phases.len() < 3 {
            return Err(PenaltyError::Radial("need at least three phases".into()));
        }
        let mut th: Vec<f64> = phases.iter().map(|p| p.rem_euclid(2.0 * PI)).collect();
        th.sort_by(f64::total_cmp);
        for i in 0..th.len() {
            let next = if i + 1 < th.len() { th[i + 1] } else { th[0] + 2.0 * PI };
            let gap = next - th[i];
            if gap <= 0.0 {
                return Err(PenaltyError::Radial("phases must be distinct".into()));
            }
            if gap >= PI {
                return Err(PenaltyError::Radial("consecutive phases must be less than π apart".into()));
            }
        }
        let mut points = vec![vec![0.0, 0.0]];
        points.extend(th.iter().map(|t| vec![omega0 * t.cos(), omega0 * t.sin()]));
        Ok(Self { omega0, alpha, phases: th, points })
    }

    /// `count` equally spaced phases starting at `offset`.
    pub fn equispaced(omega0: f64, count: usize, offset: f64, alpha: f64) -> Result<Self, PenaltyError> {
        let phases: Vec<f64> = (0..count).map(|i| offset + 2.0 * PI * i as f64 / count as f64).collect();
        Self::new(omega0, &phases, alpha)
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// Number of nonzero vertices.
    pub fn count(&self) -> usize {
        self.phases.len()
    }

    /// `ū_i` for `i ∈ 1..=M`, `ū_0 = 0`.
    pub fn vertex(&self, i: usize) -> [f64; 2] {
        [self.points[i][0], self.points[i][1]]
    }

    pub fn admissible_set(&self) -> AdmissibleSet {
        AdmissibleSet::new(self.points.clone()).expect("vertices are distinct")
    }

    pub fn cost(&self) -> CostSpec {
        CostSpec::new(CostKind::Quadratic, self.alpha)
    }

    fn next(&self, i: usize) -> usize {
        i % self.count() + 1
    }

    fn prev(&self, i: usize) -> usize {
        if i == 1 {
            self.count()
        } else {
            i - 1
        }
    }

    /// Index of the closed sector containing `q`, lowest index on ties.
    fn sector(&self, q: [f64; 2]) -> usize {
        let mut best = 1;
        let mut val = f64::NEG_INFINITY;
        for i in 1..=self.count() {
            let v = dot(self.vertex(i), q);
            if v > val {
                val = v;
                best = i;
            }
        }
        best
    }
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn axpy(a: f64, x: [f64; 2], y: [f64; 2]) -> [f64; 2] {
    [y[0] + a * x[0], y[1] + a * x[1]]
}

pub fn classify(params: &RadialParams, q: [f64; 2], gamma: f64) -> RadialRegion {
    let w2 = params.omega0 * params.omega0;
    let alpha = params.alpha;
    let iq = params.sector(q);
    let ui = params.vertex(iq);
    let rho = dot(q, ui);
    if rho < 0.5 * alpha * w2 {
        return RadialRegion::Zero;
    }
    let jq = params.sector(axpy(-gamma, ui, q));
    let kq = params.sector(axpy(-(rho / w2 - 0.5 * alpha), ui, q));
    let upper = (0.5 * alpha + gamma) * w2;
    if rho > upper && jq == iq {
        return RadialRegion::Vertex(iq);
    }
    if rho <= upper && kq == iq {
        return RadialRegion::ZeroVertex(iq);
    }
    // The edge test uses the neighbor on the side of q and checks that the
    // edge formula lands on the segment. Testing {i_q, j_q} instead misses
    // edges once γ|ū_i − ū_{i+1}| exceeds the angular gap.
    let cross = ui[0] * q[1] - ui[1] * q[0];
    let (lo, hi) = if cross >= 0.0 { (iq, params.next(iq)) } else { (params.prev(iq), iq) };
    let (a, b) = (params.vertex(lo), params.vertex(hi));
    let s = [a[0] + b[0], a[1] + b[1]];
    let d = [a[0] - b[0], a[1] - b[1]];
    let sigma = dot(axpy(-0.5 * gamma, s, q), s);
    let c = dot(q, d) / (gamma * dot(d, d));
    if sigma > alpha * w2 && c.abs() <= 0.5 {
        return RadialRegion::Edge(lo);
    }
    RadialRegion::ZeroEdge(lo)
}

fn eval(params: &RadialParams, q: [f64; 2], gamma: f64) -> (RadialRegion, [f64; 2], [[f64; 2]; 2]) {
    let w2 = params.omega0 * params.omega0;
    let alpha = params.alpha;
    let region = classify(params, q, gamma);
    let outer = |v: [f64; 2], c: f64| [[c * v[0] * v[0], c * v[0] * v[1]], [c * v[1] * v[0], c * v[1] * v[1]]];
    match region {
        RadialRegion::Zero => (region, [0.0, 0.0], [[0.0; 2]; 2]),
        RadialRegion::Vertex(i) => (region, params.vertex(i), [[0.0; 2]; 2]),
        RadialRegion::ZeroVertex(i) => {
            let u = params.vertex(i);
            let c = dot(q, u) / (gamma * w2) - alpha / (2.0 * gamma);
            (region, [c * u[0], c * u[1]], outer(u, 1.0 / (gamma * w2)))
        }
        RadialRegion::Edge(i) => {
            let a = params.vertex(i);
            let b = params.vertex(params.next(i));
            let d = [a[0] - b[0], a[1] - b[1]];
            let dd = dot(d, d);
            let c = dot(q, d) / (gamma * dd);
            let h = [0.5 * (a[0] + b[0]) + c * d[0], 0.5 * (a[1] + b[1]) + c * d[1]];
            (region, h, outer(d, 1.0 / (gamma * dd)))
        }
        RadialRegion::ZeroEdge(i) => {
            let a = params.vertex(i);
            let b = params.vertex(params.next(i));
            let s = [a[0] + b[0], a[1] + b[1]];
            let f = alpha / gamma * w2 / dot(s, s);
            let h = [q[0] / gamma - f * s[0], q[1] / gamma - f * s[1]];
            (region, h, [[1.0 / gamma, 0.0], [0.0, 1.0 / gamma]])
        }
    }
}

pub fn yosida_radial(params: &RadialParams, q: [f64; 2], gamma: f64) -> [f64; 2] {
    eval(params, q, gamma).1
}

pub fn newton_radial(params: &RadialParams, q: [f64; 2], gamma: f64) -> DenseMatrix {
    let d = eval(params, q, gamma).2;
    DenseMatrix::from_rows(&[d[0].to_vec(), d[1].to_vec()])
}

pub fn conjugate_radial(params: &RadialParams, q: [f64; 2]) -> f64 {
    let i = params.sector(q);
    (dot(q, params.vertex(i)) - 0.5 * params.alpha * params.omega0 * params.omega0).max(0.0)
}

struct RadialMap<'a> {
    params: &'a RadialParams,
    gamma: f64,
}

impl YosidaMap for RadialMap<'_> {
    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn eval(&self, q: &[f64], h: &mut [f64], d: &mut [f64]) -> usize {
        let (region, hv, dv) = eval(self.params, [q[0], q[1]], self.gamma);
        h.copy_from_slice(&hv);
        d.copy_from_slice(&[dv[0][0], dv[0][1], dv[1][0], dv[1][1]]);
        region.id(self.params.count())
    }
}

impl Penalty for RadialParams {
    fn dim(&self) -> usize {
        2
    }

    fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    fn conjugate(&self, q: &[f64]) -> f64 {
        conjugate_radial(self, [q[0], q[1]])
    }

    fn regularize(&self, gamma: f64) -> Box<dyn YosidaMap + '_> {
        assert!(gamma > 0.0, "γ must be positive");
        Box::new(RadialMap { params: self, gamma })
    }
}
