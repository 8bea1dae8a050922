//! Polyhedral multibang penalties `g = (αc + δ_M)**`: conjugates, proximal
//! points, Yosida maps and Newton derivatives.

mod concentric;
mod engine;
mod radial;

pub use concentric::{
    classify_eta, conjugate_concentric, newton_concentric, yosida_concentric, ConcentricParams, RegionIjk,
};
pub use engine::{enumerate_faces, EngineMap, EpigraphFace, FaceBlocks, PenaltyEngine, DEFAULT_MAX_POINTS};
pub use radial::{classify, conjugate_radial, newton_radial, yosida_radial, RadialParams, RadialRegion};

use crate::numerics::{DenseMatrix, NumericsError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PenaltyError {
    #[error("admissible set is empty")]
    EmptySet,
    #[error("points must all have dimension {expected}, found {got}")]
    Dimension { expected: usize, got: usize },
    #[error("admissible points {0} and {1} coincide")]
    Duplicate(usize, usize),
    #[error("cost parameter must be finite and nonnegative")]
    InvalidCost,
    #[error("explicit cost list has {got} entries for {expected} points")]
    CostLength { expected: usize, got: usize },
    #[error("{got} admissible points exceed the enumeration bound {bound}")]
    TooManyPoints { got: usize, bound: usize },
    #[error("invalid radial parameters: {0}")]
    Radial(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Finite set of admissible control values in `R^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleSet {
    dim: usize,
    points: Vec<Vec<f64>>,
}

impl AdmissibleSet {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self, PenaltyError> {
        let dim = points.first().ok_or(PenaltyError::EmptySet)?.len();
        if dim == 0 {
            return Err(PenaltyError::Dimension { expected: 1, got: 0 });
        }
        for p in &points {
            if p.len() != dim {
                return Err(PenaltyError::Dimension { expected: dim, got: p.len() });
            }
        }
        for i in 0..points.len() {
            for j in 0..i {
                if points[i] == points[j] {
                    return Err(PenaltyError::Duplicate(j, i));
                }
            }
        }
        Ok(Self { dim, points })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "values")]
pub enum CostKind {
    /// `c(v) = ½|v|²`
    Quadratic,
    /// `c(v) = |v|`
    Norm,
    /// one value per admissible point
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub kind: CostKind,
    pub alpha: f64,
}

impl CostSpec {
    pub fn new(kind: CostKind, alpha: f64) -> Self {
        Self { kind, alpha }
    }

    /// Offsets `α c(ū_i)` of the affine pieces of the conjugate.
    pub fn offsets(&self, set: &AdmissibleSet) -> Result<Vec<f64>, PenaltyError> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(PenaltyError::InvalidCost);
        }
        let costs: Vec<f64> = match &self.kind {
            CostKind::Quadratic => set.points.iter().map(|p| 0.5 * p.iter().map(|v| v * v).sum::<f64>()).collect(),
            CostKind::Norm => set.points.iter().map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt()).collect(),
            CostKind::Explicit(v) => {
                if v.len() != set.len() {
                    return Err(PenaltyError::CostLength { expected: set.len(), got: v.len() });
                }
                if v.iter().any(|c| !c.is_finite()) {
                    return Err(PenaltyError::InvalidCost);
                }
                v.clone()
            }
        };
        Ok(costs.into_iter().map(|c| self.alpha * c).collect())
    }
}

/// Extended-real penalty value; `Infinite` outside the convex hull of M.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyValue {
    Finite(f64),
    Infinite,
}

impl PenaltyValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            PenaltyValue::Finite(v) => Some(v),
            PenaltyValue::Infinite => None,
        }
    }
}

/// A pointwise penalty that can be regularized for a given `γ > 0`.
pub trait Penalty: Send + Sync {
    fn dim(&self) -> usize;
    fn points(&self) -> &[Vec<f64>];
    fn conjugate(&self, q: &[f64]) -> f64;
    fn regularize(&self, gamma: f64) -> Box<dyn YosidaMap + '_>;

    /// Distance from `u` to the nearest admissible point.
    fn multibang_distance(&self, u: &[f64]) -> f64 {
        multibang_distance(self.points(), u)
    }
}

/// Yosida map `h_γ` together with a Newton derivative.
pub trait YosidaMap: Send + Sync {
    fn gamma(&self) -> f64;

    /// Writes `h_γ(q)` to `h` and its Newton derivative (row-major `m×m`) to
    /// `d`; returns an identifier of the region containing `q`.
    fn eval(&self, q: &[f64], h: &mut [f64], d: &mut [f64]) -> usize;

    fn yosida(&self, q: &[f64]) -> Vec<f64> {
        let m = q.len();
        let mut h = vec![0.0; m];
        let mut d = vec![0.0; m * m];
        self.eval(q, &mut h, &mut d);
        h
    }

    fn newton(&self, q: &[f64]) -> DenseMatrix {
        let m = q.len();
        let mut h = vec![0.0; m];
        let mut d = vec![0.0; m * m];
        self.eval(q, &mut h, &mut d);
        DenseMatrix::from_row_major(m, m, d).expect("m×m buffer")
    }
}

pub fn multibang_distance(points: &[Vec<f64>], u: &[f64]) -> f64 {
    points
        .iter()
        .map(|p| p.iter().zip(u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}
