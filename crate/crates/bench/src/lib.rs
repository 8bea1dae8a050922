//! Fixtures shared by the benchmarks.

use multibang::bloch::{BlochProblem, GYROMAGNETIC_RATIO};
use multibang::penalty::{PenaltyEngine, RadialParams};
use multibang::transport::build_admissible_set;
use multibang::CostKind;
use multibang::CostSpec;
use std::f64::consts::PI;

/// Three-phase radial set of the single-isochromat experiment.
pub fn radial_three(alpha: f64) -> RadialParams {
    RadialParams::new(1.0, &[-PI, -PI / 3.0, PI / 3.0], alpha).expect("valid phases")
}

/// Engine for the transport set with three unit materials.
pub fn transport_engine(alpha: f64) -> PenaltyEngine {
    let set = build_admissible_set(&[1.0; 3]).expect("distinct points");
    PenaltyEngine::new(set, CostSpec::new(CostKind::Norm, alpha)).expect("engine builds")
}

pub fn bloch_problem(intervals: usize) -> BlochProblem {
    BlochProblem::new(1.0, intervals, vec![0.01 * GYROMAGNETIC_RATIO], vec![[1.0, 0.0, 0.0]])
}

/// Deterministic query points on a square grid of half-width `w`.
pub fn grid(n: usize, w: f64) -> Vec<[f64; 2]> {
    let step = 2.0 * w / (n - 1) as f64;
    (0..n * n).map(|k| [-w + step * (k % n) as f64, -w + step * (k / n) as f64]).collect()
}
