//! Runs a configured experiment and collects its output files in memory.

use crate::bloch::BlochProblem;
use crate::config::{
    ConfigError, ExperimentConfig, NetworkConfig, NetworkFile, PenaltyConfig, PenaltyMapConfig, ProblemConfig,
    TargetConfig, TransportConfig,
};
use crate::elasticity::{assemble, make_deadload_target, make_rotation_target, ElasticityProblem, ElasticitySolver};
use crate::numerics::NumericsError;
use crate::penalty::{
    classify, classify_eta, ConcentricParams, CostSpec, Penalty, PenaltyEngine, PenaltyError, RadialParams,
};
use crate::ssn::{continuation, count_non_multibang, stats_table, ContinuationResult, SsnError};
use crate::transport::{
    build_admissible_set, generate_network, total_cost, Layout, NetworkSpec, Scenario, TransportError,
    TransportNetwork, TransportProblem,
};
use crate::verify::{verify_suite, VerifyOptions};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Penalty(#[from] PenaltyError),
    #[error(transparent)]
    Solver(#[from] SsnError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("invalid network file {path}: {message}")]
    NetworkFile { path: PathBuf, message: String },
}

/// One output file.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub kind: &'static str,
    pub artifacts: Vec<Artifact>,
    pub summary: Value,
    /// false when a verification check failed; solver runs always report true
    pub passed: bool,
}

fn artifact(name: &str, contents: String) -> Artifact {
    Artifact { name: name.to_string(), contents }
}

fn csv<I: IntoIterator<Item = Vec<String>>>(header: &[&str], rows: I) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn stats_artifacts(res: &ContinuationResult) -> [Artifact; 2] {
    [
        artifact("stats.csv", stats_table(&res.stats)),
        artifact("stats.json", serde_json::to_string_pretty(&res.stats).expect("stats serialize")),
    ]
}

fn max_distance(penalty: &dyn Penalty, u: &[f64]) -> f64 {
    u.chunks(penalty.dim()).map(|v| penalty.multibang_distance(v)).fold(0.0, f64::max)
}

/// Runs `cfg`; relative file paths in the configuration resolve against `base_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, base_dir: &Path) -> Result<RunReport, ExperimentError> {
    cfg.validate()?;
    match &cfg.problem {
        ProblemConfig::Bloch(_) => run_bloch(cfg),
        ProblemConfig::Elasticity(_) => run_elasticity(cfg),
        ProblemConfig::Transport(t) => run_transport(cfg, t, base_dir),
        ProblemConfig::PenaltyMap(p) => run_penalty_map(p),
        ProblemConfig::Verify(v) => {
            let report = verify_suite(&VerifyOptions { perturb_radial_alpha: v.perturb_radial_alpha });
            let passed = report.passed();
            Ok(RunReport {
                kind: "verify",
                artifacts: vec![
                    artifact("verify.json", serde_json::to_string_pretty(&report).expect("report serializes")),
                    artifact("verify.txt", report.to_string()),
                ],
                summary: json!({ "passed": passed, "groups": report.groups.len() }),
                passed,
            })
        }
    }
}

fn run_bloch(cfg: &ExperimentConfig) -> Result<RunReport, ExperimentError> {
    let ProblemConfig::Bloch(b) = &cfg.problem else { unreachable!() };
    let penalty = b.penalty.build(b.alpha)?;
    let problem = BlochProblem::new(b.horizon, b.intervals, b.offsets.clone(), b.targets.clone());
    let solver = cfg.solver_config();
    let res = continuation(&problem, penalty.as_ref(), &vec![0.0; 2 * b.intervals], &solver, cfg.continuation_mode())?;
    let h = problem.step();
    let control = csv(
        &["t", "u1", "u2"],
        (0..b.intervals).map(|m| vec![num((m as f64 + 0.5) * h), num(res.u[2 * m]), num(res.u[2 * m + 1])]),
    );
    let states = problem.solve_state(&res.u);
    let mut header = vec!["t".to_string()];
    for j in 0..states.len() {
        header.extend((1..=3).map(|c| format!("m{j}_{c}")));
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let state_csv = csv(
        &header,
        (0..=b.intervals).map(|n| {
            let mut row = vec![num(n as f64 * h)];
            for s in &states {
                row.extend(s[n].iter().map(|v| num(*v)));
            }
            row
        }),
    );
    let terminal: Vec<[f64; 3]> = states.iter().map(|s| s[b.intervals]).collect();
    let misfit: Vec<f64> = terminal
        .iter()
        .zip(&b.targets)
        .map(|(m, t)| m.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .collect();
    let [stats_csv, stats_json] = stats_artifacts(&res);
    Ok(RunReport {
        kind: "bloch",
        artifacts: vec![artifact("control.csv", control), artifact("states.csv", state_csv), stats_csv, stats_json],
        summary: json!({
            "final_gamma": res.final_gamma,
            "continuation_steps": res.stats.len(),
            "terminal_states": terminal,
            "terminal_misfit": misfit,
            "non_multibang": count_non_multibang(penalty.as_ref(), &res.u, solver.mb_tol),
            "max_multibang_distance": max_distance(penalty.as_ref(), &res.u),
        }),
        passed: true,
    })
}

fn run_elasticity(cfg: &ExperimentConfig) -> Result<RunReport, ExperimentError> {
    let ProblemConfig::Elasticity(e) = &cfg.problem else { unreachable!() };
    let mut problem = ElasticityProblem::new(e.resolution);
    problem.young = e.young;
    problem.poisson = e.poisson;
    problem.ny = e.vertical_resolution.unwrap_or(e.resolution);
    let disc = assemble(&problem);
    let target = match e.target {
        TargetConfig::Rotation { angle } => make_rotation_target(&disc, angle),
        TargetConfig::Deadload { magnitude, noise } => make_deadload_target(&disc, magnitude, noise, cfg.seed)?,
    };
    let penalty = e.penalty.build(e.alpha)?;
    let solver_cfg = cfg.solver_config();
    let solver = ElasticitySolver::new(&disc, penalty.as_ref(), &target);
    let (sol, res) = solver.run(&solver_cfg)?;
    let control = csv(
        &["x1", "x2", "u1", "u2"],
        disc.coords.iter().enumerate().map(|(n, x)| {
            vec![num(x[0]), num(x[1]), num(sol.u[2 * n]), num(sol.u[2 * n + 1])]
        }),
    );
    let deformed = csv(
        &["x1", "x2", "y1", "y2", "z1", "z2"],
        disc.coords.iter().enumerate().map(|(n, x)| {
            vec![
                num(x[0]),
                num(x[1]),
                num(sol.y[2 * n]),
                num(sol.y[2 * n + 1]),
                num(target[2 * n]),
                num(target[2 * n + 1]),
            ]
        }),
    );
    let triangles = csv(&["a", "b", "c"], disc.triangles.iter().map(|t| t.iter().map(|v| v.to_string()).collect()));
    let misfit = disc.mass.matvec(&sol.y.iter().zip(&target).map(|(a, b)| a - b).collect::<Vec<_>>());
    let misfit: f64 = misfit.iter().zip(sol.y.iter().zip(&target)).map(|(m, (a, b))| m * (a - b)).sum::<f64>();
    let [stats_csv, stats_json] = stats_artifacts(&res);
    Ok(RunReport {
        kind: "elasticity",
        artifacts: vec![
            artifact("control.csv", control),
            artifact("deformed.csv", deformed),
            artifact("triangles.csv", triangles),
            stats_csv,
            stats_json,
        ],
        summary: json!({
            "final_gamma": res.final_gamma,
            "continuation_steps": res.stats.len(),
            "nodes": disc.node_count(),
            "tracking_misfit": misfit.max(0.0).sqrt(),
            "non_multibang": count_non_multibang(penalty.as_ref(), &sol.u, solver_cfg.mb_tol),
            "max_multibang_distance": max_distance(penalty.as_ref(), &sol.u),
        }),
        passed: true,
    })
}

fn load_network(path: &Path) -> Result<(TransportNetwork, Vec<Scenario>), ExperimentError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ExperimentError::Io { path: path.to_path_buf(), message: e.to_string() })?;
    let file: NetworkFile = serde_json::from_str(&text)
        .map_err(|e| ExperimentError::NetworkFile { path: path.to_path_buf(), message: e.to_string() })?;
    let net = TransportNetwork::new(file.vertices, file.edges, file.materials)?;
    Ok((net, file.scenarios))
}

fn run_transport(cfg: &ExperimentConfig, t: &TransportConfig, base_dir: &Path) -> Result<RunReport, ExperimentError> {
    let (net, scenarios) = match &t.network {
        NetworkConfig::Generated { grid_n, spacing, jitter, prune_factor } => {
            let layout = t.layout.unwrap_or(Layout::Joint);
            let spec = NetworkSpec {
                grid_n: *grid_n,
                spacing: *spacing,
                jitter: *jitter,
                seed: cfg.seed,
                prune_factor: *prune_factor,
                materials: layout.materials(),
            };
            let net = generate_network(&spec)?;
            let scenarios = layout.scenarios(&net, t.amount);
            (net, scenarios)
        }
        NetworkConfig::File { path } => {
            if t.layout.is_some() {
                return Err(ConfigError::Invalid {
                    field: "problem.layout".into(),
                    message: "scenarios come from the network file".into(),
                }
                .into());
            }
            load_network(&base_dir.join(path))?
        }
    };
    // each material may carry the largest amount any of its scenarios moves
    let mut amounts = vec![0.0f64; net.materials];
    for s in &scenarios {
        if s.material >= net.materials {
            return Err(TransportError::MaterialOutOfRange(s.material).into());
        }
        amounts[s.material] = amounts[s.material].max(s.amount);
    }
    for a in amounts.iter_mut().filter(|a| **a == 0.0) {
        *a = t.amount;
    }
    let z = net.target(&scenarios)?;
    let engine = PenaltyEngine::new(build_admissible_set(&amounts)?, CostSpec::new(t.cost.clone(), t.alpha))?;
    let network_json = NetworkFile::from_network(&net, &scenarios);
    let problem = TransportProblem::new(net, z);
    let solver = cfg.solver_config();
    let u0 = vec![0.0; problem.net.materials * problem.net.edge_count()];
    let res = continuation(&problem, &engine, &u0, &solver, cfg.continuation_mode())?;
    let m = problem.net.materials;
    let mut header = vec!["edge".to_string(), "tail".into(), "head".into()];
    header.extend((1..=m).map(|c| format!("u{c}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let flux = csv(
        &header,
        problem.net.edges.iter().enumerate().map(|(e, (a, b))| {
            let mut row = vec![e.to_string(), a.to_string(), b.to_string()];
            row.extend(res.u[e * m..(e + 1) * m].iter().map(|v| num(*v)));
            row
        }),
    );
    let misfit = problem.misfit(&res.u).iter().map(|v| v * v).sum::<f64>().sqrt();
    let cost = total_cost(&problem.net, &engine, &res.u)?.finite();
    let [stats_csv, stats_json] = stats_artifacts(&res);
    Ok(RunReport {
        kind: "transport",
        artifacts: vec![
            artifact("network.json", serde_json::to_string_pretty(&network_json).expect("network serializes")),
            artifact("flux.csv", flux),
            stats_csv,
            stats_json,
        ],
        summary: json!({
            "final_gamma": res.final_gamma,
            "continuation_steps": res.stats.len(),
            "vertices": problem.net.vertex_count(),
            "edges": problem.net.edge_count(),
            "misfit": misfit,
            "transport_cost": cost,
            "non_multibang": count_non_multibang(&engine, &res.u, solver.mb_tol),
            "max_multibang_distance": max_distance(&engine, &res.u),
        }),
        passed: true,
    })
}

enum Classifier {
    Radial(RadialParams),
    Concentric(ConcentricParams),
    Faces,
}

fn run_penalty_map(p: &PenaltyMapConfig) -> Result<RunReport, ExperimentError> {
    let penalty = p.penalty.build(p.alpha)?;
    let classifier = match &p.penalty {
        PenaltyConfig::Radial { omega0, count, offset, phases, general: false } => Classifier::Radial(match phases {
            Some(ph) => RadialParams::new(*omega0, ph, p.alpha)?,
            None => RadialParams::equispaced(*omega0, count.unwrap_or_default(), *offset, p.alpha)?,
        }),
        PenaltyConfig::Concentric { general: false } => Classifier::Concentric(ConcentricParams::new(p.alpha)),
        _ => Classifier::Faces,
    };
    let map = penalty.regularize(p.gamma);
    let g = &p.grid;
    let coord = |k: usize, i: usize| g.min[k] + (g.max[k] - g.min[k]) * i as f64 / (g.n - 1) as f64;
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut rows = Vec::with_capacity(g.n * g.n);
    let (mut h, mut d) = (vec![0.0; 2], vec![0.0; 4]);
    for j in 0..g.n {
        for i in 0..g.n {
            let q = [coord(0, i), coord(1, j)];
            let region = map.eval(&q, &mut h, &mut d);
            let tag = match &classifier {
                Classifier::Radial(params) => classify(params, q, p.gamma).tag(params.count()),
                Classifier::Concentric(params) => {
                    let r = classify_eta(params, q, p.gamma);
                    format!("Q_{}_{}_{}", r.i, r.j, r.k)
                }
                Classifier::Faces => format!("F{region}"),
            };
            *counts.entry(tag.clone()).or_default() += 1;
            rows.push(vec![num(q[0]), num(q[1]), region.to_string(), tag, num(h[0]), num(h[1])]);
        }
    }
    Ok(RunReport {
        kind: "penalty_map",
        artifacts: vec![artifact("regions.csv", csv(&["q1", "q2", "region", "tag", "h1", "h2"], rows))],
        summary: json!({ "samples": g.n * g.n, "regions": counts }),
        passed: true,
    })
}
