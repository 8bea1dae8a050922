mod common;

use common::*;
use multibang::penalty::{
    classify, AdmissibleSet, ConcentricParams, CostKind, CostSpec, Penalty, PenaltyEngine, PenaltyValue,
    RadialParams, RadialRegion, YosidaMap,
};
use proptest::prelude::*;
use std::f64::consts::PI;

fn three_phase(alpha: f64) -> RadialParams {
    RadialParams::new(1.0, &[-PI, -PI / 3.0, PI / 3.0], alpha).unwrap()
}

fn costs(points: &[Vec<f64>], kind: &CostKind, alpha: f64) -> Vec<f64> {
    points
        .iter()
        .map(|p| match kind {
            CostKind::Quadratic => 0.5 * alpha * dot(p, p),
            CostKind::Norm => alpha * norm(p),
            CostKind::Explicit(v) => alpha * v[0],
        })
        .collect()
}

fn random_engine(seed: u64, m: usize, size: usize, kind: CostKind, alpha: f64) -> (PenaltyEngine, Vec<Vec<f64>>) {
    let mut r = rng(seed);
    let pts = random_points(&mut r, m, size);
    let engine = PenaltyEngine::new(AdmissibleSet::new(pts.clone()).unwrap(), CostSpec::new(kind, alpha)).unwrap();
    (engine, pts)
}

#[test]
fn engine_matches_reference_prox() {
    for (seed, m, size, kind) in [(1, 2, 7, CostKind::Quadratic), (2, 3, 9, CostKind::Norm)] {
        let alpha = 0.3;
        let (engine, pts) = random_engine(seed, m, size, kind.clone(), alpha);
        let reference = Supports::new(&pts, &costs(&pts, &kind, alpha));
        let mut r = rng(seed + 100);
        for gamma in [1.0, 1e-2] {
            let map = engine.regularized(gamma);
            for _ in 0..200 {
                let q: Vec<f64> = (0..m).map(|_| r.random_range(-2.0..2.0)).collect();
                let dev = max_abs_diff(&map.yosida(&q), &reference.yosida(&q, gamma));
                assert!(dev <= 1e-8, "seed {seed} γ {gamma} q {q:?}: {dev}");
            }
        }
    }
}

use rand::Rng;

fn all_penalties() -> Vec<(Box<dyn Penalty>, Vec<Vec<f64>>)> {
    let radial = three_phase(0.1);
    let six = RadialParams::equispaced(1.5, 6, 0.2, 0.05).unwrap();
    let conc = ConcentricParams::new(0.1);
    let (e2, p2) = random_engine(11, 2, 6, CostKind::Norm, 0.2);
    let (e3, p3) = random_engine(12, 3, 8, CostKind::Quadratic, 0.2);
    vec![
        (Box::new(radial.clone()), radial.admissible_set().points().to_vec()),
        (Box::new(six.clone()), six.admissible_set().points().to_vec()),
        (Box::new(conc.clone()), conc.admissible_set().points().to_vec()),
        (Box::new(e2), p2),
        (Box::new(e3), p3),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn monotone_and_prox_nonexpansive(
        which in 0usize..5,
        log_gamma in -4.0f64..0.0,
        a in prop::collection::vec(-1.5f64..1.5, 3),
        b in prop::collection::vec(-1.5f64..1.5, 3),
    ) {
        let penalties = all_penalties();
        let (p, _) = &penalties[which];
        let m = p.dim();
        let gamma = 10f64.powf(log_gamma);
        let map = p.regularize(gamma);
        let (a, b) = (&a[..m], &b[..m]);
        let (ha, hb) = (map.yosida(a), map.yosida(b));
        let dh: Vec<f64> = ha.iter().zip(&hb).map(|(x, y)| x - y).collect();
        let dq: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        prop_assert!(dot(&dh, &dq) >= -1e-9);
        let wa: Vec<f64> = a.iter().zip(&ha).map(|(q, h)| q - gamma * h).collect();
        let wb: Vec<f64> = b.iter().zip(&hb).map(|(q, h)| q - gamma * h).collect();
        let dw: Vec<f64> = wa.iter().zip(&wb).map(|(x, y)| x - y).collect();
        prop_assert!(norm(&dw) <= norm(&dq) + 1e-9);
    }

    #[test]
    fn yosida_lies_in_hull(which in 0usize..5, log_gamma in -5.0f64..1.0, q in prop::collection::vec(-3.0f64..3.0, 3)) {
        let penalties = all_penalties();
        let (p, pts) = &penalties[which];
        let q = &q[..p.dim()];
        let h = p.regularize(10f64.powf(log_gamma)).yosida(q);
        prop_assert!(hull_distance(pts, &h) <= 1e-9, "h = {:?}", h);
    }

    #[test]
    fn engine_resolvent_identity(seed in 0u64..20, log_gamma in -4.0f64..0.5, q in prop::collection::vec(-2.0f64..2.0, 3)) {
        let m = 2 + (seed as usize % 2);
        let (engine, _) = random_engine(seed, m, 5 + seed as usize % 5, CostKind::Quadratic, 0.2);
        let gamma = 10f64.powf(log_gamma);
        let q = &q[..m];
        let (w, _) = engine.prox(q, gamma).unwrap();
        let h = engine.yosida(q, gamma).unwrap();
        for c in 0..m {
            prop_assert!((w[c] + gamma * h[c] - q[c]).abs() <= 1e-14 * (1.0 + q[c].abs()));
        }
    }

    #[test]
    fn fenchel_young(seed in 0u64..20, q in prop::collection::vec(-2.0f64..2.0, 3)) {
        let m = 2 + (seed as usize % 2);
        let kind = if seed % 3 == 0 { CostKind::Norm } else { CostKind::Quadratic };
        let (engine, pts) = random_engine(seed + 40, m, 4 + seed as usize % 6, kind, 0.25);
        let q = &q[..m];
        let conj = engine.conjugate_value(q).unwrap();
        let offsets = engine.offsets();
        let best = pts.iter().zip(offsets).map(|(p, o)| dot(p, q) - o).fold(f64::NEG_INFINITY, f64::max);
        for (p, o) in pts.iter().zip(offsets) {
            let PenaltyValue::Finite(g) = engine.penalty_value(p).unwrap() else { panic!("vertex outside domain") };
            // g(ū) can be below the listed cost when ū is not a vertex of the epigraph
            prop_assert!(g <= o + 1e-9);
            let gap = g + conj - dot(p, q);
            prop_assert!(gap >= -1e-9);
            if dot(p, q) - o >= best - 1e-12 {
                prop_assert!(gap.abs() <= 1e-9, "maximizer must attain equality, gap {}", gap);
            }
        }
    }

    #[test]
    fn concentric_symmetry(q in prop::collection::vec(-1.5f64..1.5, 2), log_gamma in -4.0f64..0.0, alpha in 0.0f64..0.5) {
        let params = ConcentricParams::new(alpha);
        let map = params.regularize(10f64.powf(log_gamma));
        let h = map.yosida(&q);
        prop_assert!(h.iter().all(|v| v.abs() <= 2.0));
        for swap in [false, true] {
            for s1 in [1.0, -1.0] {
                for s2 in [1.0, -1.0] {
                    let apply = |v: &[f64]| if swap { vec![s1 * v[1], s2 * v[0]] } else { vec![s1 * v[0], s2 * v[1]] };
                    let hp = map.yosida(&apply(&q));
                    prop_assert!(max_abs_diff(&hp, &apply(&h)) <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn radial_rotation_equivariance(q in prop::collection::vec(-1.0f64..1.0, 2), k in 1usize..6) {
        // rotating q by a multiple of 2π/M rotates h_γ(q) for equispaced phases
        let count = 6;
        let params = RadialParams::equispaced(1.0, count, 0.3, 0.1).unwrap();
        let map = params.regularize(0.05);
        let t = 2.0 * PI * k as f64 / count as f64;
        let rot = |v: &[f64]| vec![t.cos() * v[0] - t.sin() * v[1], t.sin() * v[0] + t.cos() * v[1]];
        let lhs = map.yosida(&rot(&q));
        let rhs = rot(&map.yosida(&q));
        prop_assert!(max_abs_diff(&lhs, &rhs) <= 1e-10);
    }
}

/// Largest jump of `h_γ` across region boundaries found by bisecting random
/// segments down to `1e-8`.
fn max_boundary_jump(map: &dyn YosidaMap, scale: f64, seed: u64) -> (f64, usize) {
    let mut r = rng(seed);
    let region = |q: &[f64]| {
        let (mut h, mut d) = (vec![0.0; 2], vec![0.0; 4]);
        map.eval(q, &mut h, &mut d)
    };
    let (mut worst, mut crossings) = (0.0f64, 0);
    for _ in 0..2000 {
        let mut a: Vec<f64> = (0..2).map(|_| r.random_range(-scale..scale)).collect();
        let mut b: Vec<f64> = (0..2).map(|_| r.random_range(-scale..scale)).collect();
        let ra = region(&a);
        if ra == region(&b) {
            continue;
        }
        while norm(&a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>()) > 1e-8 {
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            if region(&mid) == ra {
                a = mid;
            } else {
                b = mid;
            }
        }
        crossings += 1;
        worst = worst.max(max_abs_diff(&map.yosida(&a), &map.yosida(&b)));
    }
    (worst, crossings)
}

#[test]
fn closed_forms_are_continuous() {
    for gamma in [1.0, 1e-1, 1e-2] {
        let radial = three_phase(0.1);
        let (jump, n) = max_boundary_jump(radial.regularize(gamma).as_ref(), 0.2 + 2.0 * gamma, 3);
        assert!(n > 100 && jump <= 1e-6, "radial γ {gamma}: {jump} over {n} crossings");
        let conc = ConcentricParams::new(0.1);
        let (jump, n) = max_boundary_jump(conc.regularize(gamma).as_ref(), 0.5 + 5.0 * gamma, 4);
        assert!(n > 100 && jump <= 1e-6, "concentric γ {gamma}: {jump} over {n} crossings");
    }
}

#[test]
fn saturated_regions_return_stored_vertex() {
    let params = three_phase(0.1);
    let gamma = 0.05;
    let map = params.regularize(gamma);
    let mut r = rng(5);
    let mut hits = 0;
    for _ in 0..5000 {
        let q = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
        if let RadialRegion::Vertex(i) = classify(&params, q, gamma) {
            hits += 1;
            let h = map.yosida(&q);
            assert_eq!(h, params.vertex(i).to_vec(), "q {q:?}");
        }
    }
    assert!(hits > 500);
}

#[test]
fn small_gamma_limit_picks_subgradient() {
    // away from the kinks of g*, ∂g*(q) is the single maximizing vertex
    let params = three_phase(0.1);
    let pts = params.admissible_set().points().to_vec();
    let offs: Vec<f64> = pts.iter().map(|p| 0.05 * dot(p, p)).collect();
    let mut r = rng(6);
    let mut checked = 0;
    while checked < 200 {
        let q = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
        let vals: Vec<f64> = pts.iter().zip(&offs).map(|(p, o)| dot(p, &q) - o).collect();
        let mut sorted = vals.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        if sorted[0] - sorted[1] < 1e-2 {
            continue;
        }
        let best = vals.iter().position(|v| *v == sorted[0]).unwrap();
        let mut last = f64::INFINITY;
        for gamma in [1e-2, 1e-4, 1e-6] {
            let d = max_abs_diff(&params.regularize(gamma).yosida(&q), &pts[best]);
            assert!(d <= last + 1e-15);
            last = d;
        }
        assert!(last <= 1e-12, "q {q:?}: {last}");
        checked += 1;
    }
}

#[test]
fn closed_forms_match_engine_on_grid() {
    let radial = three_phase(0.1);
    let conc = ConcentricParams::new(0.1);
    let re = PenaltyEngine::new(radial.admissible_set(), radial.cost()).unwrap();
    let ce = PenaltyEngine::new(conc.admissible_set(), conc.cost()).unwrap();
    for gamma in [0.5, 0.05] {
        for (closed, engine, w) in
            [(&radial as &dyn Penalty, &re, 0.35 + gamma), (&conc as &dyn Penalty, &ce, 0.5 + 3.0 * gamma)]
        {
            let (a, b) = (closed.regularize(gamma), engine.regularized(gamma));
            for i in 0..80 {
                for j in 0..80 {
                    let q = [-w + 2.0 * w * i as f64 / 79.0, -w + 2.0 * w * j as f64 / 79.0];
                    assert!(max_abs_diff(&a.yosida(&q), &b.yosida(&q)) <= 1e-10, "q {q:?}");
                }
            }
        }
    }
}

#[test]
fn conjugates_agree_with_max_of_pieces() {
    let radial = three_phase(0.2);
    let conc = ConcentricParams::new(0.2);
    let mut r = rng(7);
    for p in [&radial as &dyn Penalty, &conc] {
        let pts = p.points().to_vec();
        for _ in 0..500 {
            let q = [r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)];
            let direct = pts.iter().map(|u| dot(u, &q) - 0.1 * dot(u, u)).fold(f64::NEG_INFINITY, f64::max);
            assert!((p.conjugate(&q) - direct).abs() <= 1e-12);
        }
    }
}

#[test]
fn radial_edges_hold_for_large_gamma() {
    // with γ|ū_i − ū_{i+1}| well above the angular gap, q − γū_i leaves the neighboring sector
    let params = RadialParams::equispaced(1.5, 6, 0.2, 0.05).unwrap();
    let engine = PenaltyEngine::new(params.admissible_set(), params.cost()).unwrap();
    let mut r = rng(9);
    for gamma in [1.0, 3.0] {
        let (a, b) = (params.regularize(gamma), engine.regularized(gamma));
        for _ in 0..5000 {
            let q = [r.random_range(-6.0..6.0), r.random_range(-6.0..6.0)];
            assert!(max_abs_diff(&a.yosida(&q), &b.yosida(&q)) <= 1e-10, "γ {gamma} q {q:?}");
        }
    }
}
