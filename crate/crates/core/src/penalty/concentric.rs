use super::{AdmissibleSet, CostKind, CostSpec, Penalty, YosidaMap};
use crate::numerics::DenseMatrix;

/// The eight corners `(i,j)` and `(2i,2j)`, `i,j ∈ {−1,1}`, with quadratic cost.
#[derive(Debug, Clone)]
pub struct ConcentricParams {
    alpha: f64,
    points: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionIjk {
    pub i: i8,
    pub j: i8,
    pub k: i8,
}

impl RegionIjk {
    pub fn id(self) -> usize {
        ((self.i + 1) * 9 + (self.j + 1) * 3 + (self.k + 1)) as usize
    }
}

impl ConcentricParams {
    pub fn new(alpha: f64) -> Self {
        assert!(alpha >= 0.0 && alpha.is_finite(), "α must be finite and nonnegative");
        let mut points = Vec::with_capacity(8);
        for r in [1.0, 2.0] {
            for (i, j) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                points.push(vec![r * i, r * j]);
            }
        }
        Self { alpha, points }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn admissible_set(&self) -> AdmissibleSet {
        AdmissibleSet::new(self.points.clone()).expect("corners are distinct")
    }

    pub fn cost(&self) -> CostSpec {
        CostSpec::new(CostKind::Quadratic, self.alpha)
    }

    /// Breakpoint function of the classification.
    pub fn eta(&self, x: f64, gamma: f64) -> f64 {
        let a3 = 3.0 * self.alpha;
        if x < a3 + gamma {
            gamma
        } else if x <= a3 + 2.0 * gamma {
            x - a3
        } else {
            2.0 * gamma
        }
    }
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

pub fn conjugate_concentric(params: &ConcentricParams, q: [f64; 2]) -> f64 {
    let l1 = q[0].abs() + q[1].abs();
    (l1 - params.alpha).max(2.0 * l1 - 4.0 * params.alpha)
}

pub fn classify_eta(params: &ConcentricParams, q: [f64; 2], gamma: f64) -> RegionIjk {
    let (a1, a2) = (q[0].abs(), q[1].abs());
    let i = if a1 <= params.eta(a2, gamma) { 0 } else { sign(q[0]) };
    let j = if a2 <= params.eta(a1, gamma) { 0 } else { sign(q[1]) };
    let a3 = 3.0 * params.alpha;
    let linf = a1.max(a2);
    let l1 = a1 + a2;
    let k = if linf < a3 + gamma && l1 < a3 + 2.0 * gamma {
        -1
    } else if linf > a3 + 2.0 * gamma || l1 > a3 + 4.0 * gamma {
        1
    } else {
        0
    };
    RegionIjk { i, j, k }
}

fn eval(params: &ConcentricParams, q: [f64; 2], gamma: f64) -> (RegionIjk, [f64; 2], [[f64; 2]; 2]) {
    let r = classify_eta(params, q, gamma);
    let (i, j, k) = (r.i as f64, r.j as f64, r.k as f64);
    let a3 = 3.0 * params.alpha;
    let g = 1.0 / gamma;
    let nz = |v: i8| (v != 0) as i32;
    let (h, d) = if r.i != 0 && r.j != 0 && r.k != 0 {
        let s = (k + 3.0) / 2.0;
        ([s * i, s * j], [[0.0; 2]; 2])
    } else if nz(r.i) + nz(r.j) + nz(r.k) == 1 {
        ([g * (q[0] - a3 * i), g * (q[1] - a3 * j)], [[g, 0.0], [0.0, g]])
    } else if r.i == 0 && r.j != 0 && r.k != 0 {
        ([g * q[0], (k + 3.0) / 2.0 * j], [[g, 0.0], [0.0, 0.0]])
    } else if r.j == 0 && r.i != 0 && r.k != 0 {
        ([(k + 3.0) / 2.0 * i, g * q[1]], [[0.0, 0.0], [0.0, g]])
    } else {
        assert!(r.i != 0 && r.j != 0 && r.k == 0, "unreachable region {r:?}");
        let c = (q[0].abs() + q[1].abs() - a3) / (2.0 * gamma);
        let e = 0.5 * g;
        ([c * i, c * j], [[e * i * i, e * i * j], [e * j * i, e * j * j]])
    };
    (r, h, d)
}

pub fn yosida_concentric(params: &ConcentricParams, q: [f64; 2], gamma: f64) -> [f64; 2] {
    eval(params, q, gamma).1
}

pub fn newton_concentric(params: &ConcentricParams, q: [f64; 2], gamma: f64) -> DenseMatrix {
    let d = eval(params, q, gamma).2;
    DenseMatrix::from_rows(&[d[0].to_vec(), d[1].to_vec()])
}

struct ConcentricMap<'a> {
    params: &'a ConcentricParams,
    gamma: f64,
}

impl YosidaMap for ConcentricMap<'_> {
    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn eval(&self, q: &[f64], h: &mut [f64], d: &mut [f64]) -> usize {
        let (r, hv, dv) = eval(self.params, [q[0], q[1]], self.gamma);
        h.copy_from_slice(&hv);
        d.copy_from_slice(&[dv[0][0], dv[0][1], dv[1][0], dv[1][1]]);
        r.id()
    }
}

impl Penalty for ConcentricParams {
    fn dim(&self) -> usize {
        2
    }

    fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    fn conjugate(&self, q: &[f64]) -> f64 {
        conjugate_concentric(self, [q[0], q[1]])
    }

    fn regularize(&self, gamma: f64) -> Box<dyn YosidaMap + '_> {
        assert!(gamma > 0.0, "γ must be positive");
        Box::new(ConcentricMap { params: self, gamma })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conjugate_branches() {
        let p = ConcentricParams::new(0.1);
        assert!((conjugate_concentric(&p, [0.0, 0.0]) + 0.1).abs() < 1e-15);
        assert!((conjugate_concentric(&p, [0.1, 0.1]) - 0.1).abs() < 1e-15);
        assert!((conjugate_concentric(&p, [0.3, 0.15]) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn classification_examples() {
        let p = ConcentricParams::new(0.1);
        assert_eq!(classify_eta(&p, [0.0, 0.0], 0.01), RegionIjk { i: 0, j: 0, k: -1 });
        assert_eq!(classify_eta(&p, [0.05, 0.05], 0.01), RegionIjk { i: 1, j: 1, k: -1 });
        assert_eq!(classify_eta(&p, [0.5, 0.5], 0.01), RegionIjk { i: 1, j: 1, k: 1 });
    }

    #[test]
    fn yosida_examples() {
        let p = ConcentricParams::new(0.1);
        assert_eq!(yosida_concentric(&p, [0.0, 0.0], 0.01), [0.0, 0.0]);
        assert_eq!(yosida_concentric(&p, [0.05, 0.05], 0.01), [1.0, 1.0]);
        assert_eq!(yosida_concentric(&p, [0.5, 0.5], 0.01), [2.0, 2.0]);
        assert_eq!(newton_concentric(&p, [0.5, 0.5], 0.01).max_abs(), 0.0);
        let d = newton_concentric(&p, [0.0, 0.0], 0.01);
        assert_eq!(d[(0, 0)], 100.0);
        assert_eq!(d[(1, 1)], 100.0);
    }
}
