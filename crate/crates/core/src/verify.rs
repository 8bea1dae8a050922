//! Self-checks of the penalty maps and model operators against independent
//! computations. Every group reports its largest deviation and a tolerance.

use crate::bloch::BlochProblem;
use crate::elasticity::{assemble, ElasticityProblem};
use crate::numerics::prox_oracle_qp;
use crate::penalty::{
    AdmissibleSet, ConcentricParams, CostKind, CostSpec, Penalty, PenaltyEngine, RadialParams, YosidaMap,
};
use crate::transport::{generate_network, NetworkSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    /// relative perturbation of `α` inside the closed-form radial map only;
    /// nonzero values must make the oracle comparison fail
    pub perturb_radial_alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub name: String,
    pub checks: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub groups: Vec<GroupResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for g in &self.groups {
            writeln!(
                f,
                "{} {:<28} checks {:>6}  max deviation {:.3e}  tolerance {:.1e}",
                if g.passed { "PASS" } else { "FAIL" },
                g.name,
                g.checks,
                g.max_deviation,
                g.tolerance
            )?;
        }
        Ok(())
    }
}

struct Group {
    name: &'static str,
    tolerance: f64,
    checks: usize,
    worst: f64,
}

impl Group {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self { name, tolerance, checks: 0, worst: 0.0 }
    }

    fn record(&mut self, deviation: f64) {
        self.checks += 1;
        // NaN counts as a failure
        if deviation.is_nan() || deviation > self.worst {
            self.worst = if deviation.is_nan() { f64::INFINITY } else { deviation };
        }
    }

    fn finish(self) -> GroupResult {
        GroupResult {
            name: self.name.to_string(),
            checks: self.checks,
            max_deviation: self.worst,
            tolerance: self.tolerance,
            passed: self.worst <= self.tolerance,
        }
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn oracle_yosida(points: &[Vec<f64>], offsets: &[f64], q: &[f64], gamma: f64) -> Vec<f64> {
    let w = prox_oracle_qp(points, offsets, q, gamma);
    q.iter().zip(&w).map(|(a, b)| (a - b) / gamma).collect()
}

fn random_set(rng: &mut ChaCha8Rng, m: usize, size: usize) -> AdmissibleSet {
    loop {
        let mut pts = vec![vec![0.0; m]];
        while pts.len() < size {
            pts.push((0..m).map(|_| rng.random_range(-2.0..2.0)).collect());
        }
        if let Ok(set) = AdmissibleSet::new(pts) {
            return set;
        }
    }
}

fn standard_radial(alpha: f64) -> RadialParams {
    RadialParams::new(1.0, &[-PI, -PI / 3.0, PI / 3.0], alpha).expect("valid phases")
}

/// Closed forms and the general engine against the support-enumeration oracle.
fn oracle_group(opts: &VerifyOptions, rng: &mut ChaCha8Rng) -> GroupResult {
    let mut g = Group::new("prox_oracle", 1e-8);
    let alpha = 0.1;
    let perturbed = standard_radial(alpha * (1.0 + opts.perturb_radial_alpha));
    let radial = standard_radial(alpha);
    let concentric = ConcentricParams::new(alpha);
    let mut cases: Vec<(Box<dyn Penalty>, Vec<Vec<f64>>, Vec<f64>)> = Vec::new();
    let cost = radial.cost();
    let offsets = cost.offsets(&radial.admissible_set()).expect("offsets");
    cases.push((Box::new(perturbed), radial.admissible_set().points().to_vec(), offsets));
    let cset = concentric.admissible_set();
    let coff = concentric.cost().offsets(&cset).expect("offsets");
    cases.push((Box::new(concentric.clone()), cset.points().to_vec(), coff));
    for (m, size, kind) in [(2, 6, CostKind::Quadratic), (3, 8, CostKind::Norm), (3, 10, CostKind::Quadratic)] {
        let set = random_set(rng, m, size);
        let spec = CostSpec::new(kind, alpha);
        let off = spec.offsets(&set).expect("offsets");
        let pts = set.points().to_vec();
        if let Ok(engine) = PenaltyEngine::new(set, spec) {
            cases.push((Box::new(engine), pts, off));
        }
    }
    for (penalty, points, offsets) in &cases {
        let m = penalty.dim();
        for gamma in [1e-1, 1e-3] {
            let map = penalty.regularize(gamma);
            for _ in 0..150 {
                let q: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
                g.record(max_abs_diff(&map.yosida(&q), &oracle_yosida(points, offsets, &q, gamma)));
            }
        }
    }
    g.finish()
}

fn grid_compare(g: &mut Group, a: &dyn YosidaMap, b: &dyn YosidaMap, half_width: f64, n: usize) {
    for i in 0..n {
        for j in 0..n {
            let q = [
                -half_width + 2.0 * half_width * i as f64 / (n - 1) as f64,
                -half_width + 2.0 * half_width * j as f64 / (n - 1) as f64,
            ];
            g.record(max_abs_diff(&a.yosida(&q), &b.yosida(&q)));
        }
    }
}

fn closed_form_group() -> GroupResult {
    let mut g = Group::new("closed_form_vs_engine", 1e-10);
    let alpha = 0.1;
    let radial = standard_radial(alpha);
    let re = PenaltyEngine::new(radial.admissible_set(), radial.cost()).expect("radial engine");
    let concentric = ConcentricParams::new(alpha);
    let ce = PenaltyEngine::new(concentric.admissible_set(), concentric.cost()).expect("concentric engine");
    for gamma in [1e-1, 1e-2] {
        grid_compare(&mut g, radial.regularize(gamma).as_ref(), &re.regularized(gamma), 1.0, 60);
        grid_compare(&mut g, concentric.regularize(gamma).as_ref(), &ce.regularized(gamma), 1.0, 60);
    }
    g.finish()
}

/// Monotonicity and `1/γ`-Lipschitz continuity of the Yosida maps.
fn resolvent_group(rng: &mut ChaCha8Rng) -> GroupResult {
    let mut g = Group::new("monotone_lipschitz", 1e-12);
    let alpha = 0.1;
    let penalties: Vec<Box<dyn Penalty>> = vec![Box::new(standard_radial(alpha)), Box::new(ConcentricParams::new(alpha))];
    for p in &penalties {
        for gamma in [1e-1, 1e-2] {
            let map = p.regularize(gamma);
            for _ in 0..500 {
                let a: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
                let b: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
                let dh: Vec<f64> = map.yosida(&a).iter().zip(map.yosida(&b)).map(|(x, y)| x - y).collect();
                let dq: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
                g.record((-dot(&dh, &dq)).max(0.0));
                g.record((dot(&dh, &dh).sqrt() - dot(&dq, &dq).sqrt() / gamma).max(0.0) * gamma);
            }
        }
    }
    g.finish()
}

/// Newton derivatives against central differences at points where the map is smooth.
fn newton_group(rng: &mut ChaCha8Rng) -> GroupResult {
    let mut g = Group::new("newton_derivative", 1e-6);
    let alpha = 0.1;
    let radial = standard_radial(alpha);
    let penalties: Vec<Box<dyn Penalty>> = vec![
        Box::new(radial.clone()),
        Box::new(ConcentricParams::new(alpha)),
        Box::new(PenaltyEngine::new(radial.admissible_set(), radial.cost()).expect("engine")),
    ];
    for p in &penalties {
        let gamma = 0.1;
        let map = p.regularize(gamma);
        for _ in 0..300 {
            let q: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (mut h, mut d) = (vec![0.0; 2], vec![0.0; 4]);
            let region = map.eval(&q, &mut h, &mut d);
            let eps = 1e-6;
            let mut dev: f64 = 0.0;
            let mut smooth = true;
            for j in 0..2 {
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[j] += eps;
                qm[j] -= eps;
                let (mut hp, mut hm, mut scratch) = (vec![0.0; 2], vec![0.0; 2], vec![0.0; 4]);
                smooth &= map.eval(&qp, &mut hp, &mut scratch) == region;
                smooth &= map.eval(&qm, &mut hm, &mut scratch) == region;
                for i in 0..2 {
                    dev = dev.max(((hp[i] - hm[i]) / (2.0 * eps) - d[2 * i + j]).abs() * gamma);
                }
            }
            if smooth {
                g.record(dev);
            }
        }
    }
    g.finish()
}

/// Reduced gradient and Hessian action of the Bloch problem against finite
/// differences of the objective, plus norm preservation of the scheme.
fn bloch_group(rng: &mut ChaCha8Rng) -> GroupResult {
    let mut g = Group::new("bloch_derivatives", 1e-5);
    let prob = BlochProblem::new(1.0, 40, vec![2.0, -1.0], vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
    let n = 2 * prob.intervals;
    let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let phi: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let eps = 1e-6;
    let shift = |s: f64| -> Vec<f64> { u.iter().zip(&phi).map(|(a, b)| a + s * b).collect() };
    let fd = (prob.objective(&shift(eps)) - prob.objective(&shift(-eps))) / (2.0 * eps);
    let grad = prob.gradient(&u);
    let exact = -prob.inner(&grad, &phi);
    g.record((fd - exact).abs() / exact.abs().max(1.0));
    let hp = prob.hessian_action(&u, &phi);
    let gp = prob.gradient(&shift(eps));
    let gm = prob.gradient(&shift(-eps));
    let scale = hp.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    for k in 0..n {
        g.record(((gm[k] - gp[k]) / (2.0 * eps) - hp[k]).abs() / scale);
    }
    for states in prob.solve_state(&u) {
        for m in states {
            g.record((dot(&m, &m).sqrt() - 1.0).abs());
        }
    }
    g.finish()
}

fn elasticity_group(rng: &mut ChaCha8Rng) -> GroupResult {
    let mut g = Group::new("elasticity_operators", 1e-10);
    let disc = assemble(&ElasticityProblem::new(9));
    let a = disc.stiffness_free();
    let m = disc.mass_free();
    for op in [&a, &m] {
        let n = op.rows();
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let scale = dot(&op.matvec(&x), &x).abs().max(1.0);
        g.record((dot(&op.matvec(&x), &y) - dot(&x, &op.matvec(&y))).abs() / scale);
        // positive definiteness on the free dofs
        g.record((-dot(&op.matvec(&x), &x)).max(0.0));
    }
    g.finish()
}

fn transport_group(rng: &mut ChaCha8Rng) -> GroupResult {
    let mut g = Group::new("transport_operators", 1e-10);
    let net = generate_network(&NetworkSpec { grid_n: 6, ..NetworkSpec::default() }).expect("network");
    let m = net.materials;
    let u: Vec<f64> = (0..m * net.edge_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let z: Vec<f64> = (0..m * net.vertex_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let su = net.divergence(&u);
    g.record((dot(&su, &z) - net.edge_inner(&u, &net.divergence_adjoint(&z))).abs());
    for c in 0..m {
        g.record((0..net.vertex_count()).map(|v| su[v * m + c]).sum::<f64>().abs());
    }
    g.finish()
}

/// Runs every group with a fixed seed.
pub fn verify_suite(opts: &VerifyOptions) -> VerifyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    VerifyReport {
        groups: vec![
            oracle_group(opts, &mut rng),
            closed_form_group(),
            resolvent_group(&mut rng),
            newton_group(&mut rng),
            bloch_group(&mut rng),
            elasticity_group(&mut rng),
            transport_group(&mut rng),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        let report = verify_suite(&VerifyOptions::default());
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn perturbed_alpha_is_detected() {
        let report = verify_suite(&VerifyOptions { perturb_radial_alpha: 1e-3 });
        let oracle = report.groups.iter().find(|g| g.name == "prox_oracle").unwrap();
        assert!(!oracle.passed, "{report}");
    }
}
