//! Reduced semismooth Newton method with matrix-free GMRES, residual line
//! search and Moreau-Yosida continuation.

use crate::numerics::{gmres, LinearOperator};
use crate::penalty::{Penalty, YosidaMap};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A reduced objective `F(u)` over node-wise vector controls.
pub trait ReducedModel: Sync {
    /// Components per node.
    fn node_dim(&self) -> usize;
    fn node_count(&self) -> usize;
    /// Quadrature weight of a node in the control inner product.
    fn node_weight(&self, node: usize) -> f64;
    fn linearize(&self, u: &[f64]) -> Box<dyn Linearization + '_>;

    fn control_len(&self) -> usize {
        self.node_dim() * self.node_count()
    }
}

/// First and second order information of a model at a fixed control.
pub trait Linearization {
    /// `p = −F′(u)` in the weighted control space.
    fn dual(&self) -> &[f64];
    fn objective(&self) -> f64;
    /// `F″(u)φ` in the weighted control space.
    fn apply_hessian(&self, phi: &[f64], out: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuationMode {
    Fixed,
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptiveConfig {
    pub q0: f64,
    pub fail_exponent: f64,
    pub slow_exponent: f64,
    pub fast_exponent: f64,
    pub slow_cap: f64,
    pub default_cap: f64,
    pub fast_floor: f64,
    pub fail_iterations: usize,
    pub slow_iterations: usize,
    pub fast_iterations: usize,
    pub abs_target: f64,
    pub rel_target: f64,
    pub gamma_stop: f64,
    /// consecutive rejected steps before giving up
    pub max_rejections: usize,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            q0: 0.5,
            fail_exponent: 0.25,
            slow_exponent: 0.75,
            fast_exponent: 1.25,
            slow_cap: 1.0 - 1e-4,
            default_cap: 1.0 - 1e-3,
            fast_floor: 0.5,
            fail_iterations: 20,
            slow_iterations: 15,
            fast_iterations: 5,
            abs_target: 1e-6,
            rel_target: 1e-9,
            gamma_stop: 1e-7,
            max_rejections: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iterations: usize,
    pub gmres_tol: f64,
    pub gmres_max_iterations: usize,
    pub gamma0: f64,
    pub gamma_min: f64,
    pub reduction: f64,
    pub backtrack: f64,
    pub tau_min: f64,
    pub mb_tol: f64,
    pub adaptive: AdaptiveConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-7,
            rel_tol: 1e-7,
            max_iterations: 500,
            gmres_tol: 1e-10,
            gmres_max_iterations: 1000,
            gamma0: 1e2,
            gamma_min: 1e-10,
            reduction: 0.5,
            backtrack: 0.5,
            tau_min: 1e-5,
            mb_tol: 1e-3,
            adaptive: AdaptiveConfig::default(),
        }
    }
}

impl SolverConfig {
    /// Settings of the adaptive path-following runs.
    pub fn adaptive_defaults() -> Self {
        Self { gamma0: 20.0, gmres_tol: 1e-11, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SsnError> {
        let positive = [
            self.abs_tol,
            self.rel_tol,
            self.gmres_tol,
            self.gamma0,
            self.gamma_min,
            self.tau_min,
            self.mb_tol,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(SsnError::InvalidConfig("tolerances and γ values must be positive".into()));
        }
        if !(self.reduction > 0.0 && self.reduction < 1.0) || !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(SsnError::InvalidConfig("reduction factors must lie in (0,1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SsnError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("semismooth Newton failed at the initial γ = {0}")]
    InitialFailure(f64),
}

/// Convergence record for one value of `γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub gamma: f64,
    pub ssn_iterations: usize,
    pub avg_gmres: f64,
    pub line_searches: usize,
    pub non_multibang: usize,
    pub converged: bool,
    /// residual norm after each iterate, starting with the initial one
    pub residuals: Vec<f64>,
    /// accepted step length of each iteration
    pub step_sizes: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SsnOutcome {
    pub u: Vec<f64>,
    pub converged: bool,
    pub stats: IterationStats,
}

struct Evaluation<'a> {
    lin: Box<dyn Linearization + 'a>,
    residual: Vec<f64>,
    deriv: Vec<f64>,
    regions: Vec<usize>,
    norm: f64,
}

fn weighted_norm(model: &dyn ReducedModel, v: &[f64]) -> f64 {
    let m = model.node_dim();
    let s: f64 = (0..model.node_count())
        .map(|i| model.node_weight(i) * v[i * m..(i + 1) * m].iter().map(|x| x * x).sum::<f64>())
        .sum();
    s.sqrt()
}

fn evaluate<'a>(model: &'a dyn ReducedModel, map: &dyn YosidaMap, u: &[f64]) -> Evaluation<'a> {
    let m = model.node_dim();
    let n = model.node_count();
    let lin = model.linearize(u);
    let mut residual = vec![0.0; m * n];
    let mut deriv = vec![0.0; m * m * n];
    let mut regions = vec![0; n];
    {
        let p = lin.dual();
        let mut h = vec![0.0; m];
        for i in 0..n {
            regions[i] = map.eval(&p[i * m..(i + 1) * m], &mut h, &mut deriv[i * m * m..(i + 1) * m * m]);
            for c in 0..m {
                residual[i * m + c] = u[i * m + c] - h[c];
            }
        }
    }
    let norm = weighted_norm(model, &residual);
    Evaluation { lin, residual, deriv, regions, norm }
}

/// `R(u) = u − H_γ(−F′(u))`.
pub fn reduced_residual(model: &dyn ReducedModel, map: &dyn YosidaMap, u: &[f64]) -> Vec<f64> {
    evaluate(model, map, u).residual
}

/// Region identifiers of `H_γ(−F′(u))` per node.
pub fn active_regions(model: &dyn ReducedModel, map: &dyn YosidaMap, u: &[f64]) -> Vec<usize> {
    evaluate(model, map, u).regions
}

/// `φ ↦ φ + D_N H_γ(p)·F″(u)φ`.
pub struct NewtonOperator<'e> {
    lin: &'e dyn Linearization,
    deriv: &'e [f64],
    m: usize,
}

impl LinearOperator for NewtonOperator<'_> {
    fn dim_in(&self) -> usize {
        self.deriv.len() / self.m
    }
    fn dim_out(&self) -> usize {
        self.dim_in()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let m = self.m;
        let mut hx = vec![0.0; x.len()];
        self.lin.apply_hessian(x, &mut hx);
        for i in 0..x.len() / m {
            let d = &self.deriv[i * m * m..(i + 1) * m * m];
            for r in 0..m {
                let s: f64 = (0..m).map(|c| d[r * m + c] * hx[i * m + c]).sum();
                y[i * m + r] = x[i * m + r] + s;
            }
        }
    }
}

/// Applies the Newton operator at `u` to `phi`; exposed for consistency checks.
pub fn newton_operator_apply(model: &dyn ReducedModel, map: &dyn YosidaMap, u: &[f64], phi: &[f64]) -> Vec<f64> {
    let ev = evaluate(model, map, u);
    let op = NewtonOperator { lin: ev.lin.as_ref(), deriv: &ev.deriv, m: model.node_dim() };
    let mut y = vec![0.0; phi.len()];
    op.apply(phi, &mut y);
    y
}

pub fn count_non_multibang(penalty: &dyn Penalty, u: &[f64], tol: f64) -> usize {
    let m = penalty.dim();
    u.chunks(m).filter(|v| penalty.multibang_distance(v) > tol).count()
}

/// Termination rule of one Newton solve.
#[derive(Debug, Clone, Copy)]
pub struct StopRule {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iterations: usize,
}

/// Semismooth Newton iteration for `R(u) = 0` at fixed `γ`.
pub fn ssn_solve(
    model: &dyn ReducedModel,
    penalty: &dyn Penalty,
    u0: &[f64],
    gamma: f64,
    config: &SolverConfig,
) -> SsnOutcome {
    let rule = StopRule { abs_tol: config.abs_tol, rel_tol: config.rel_tol, max_iterations: config.max_iterations };
    ssn_solve_with(model, penalty, u0, gamma, config, rule)
}

pub fn ssn_solve_with(
    model: &dyn ReducedModel,
    penalty: &dyn Penalty,
    u0: &[f64],
    gamma: f64,
    config: &SolverConfig,
    rule: StopRule,
) -> SsnOutcome {
    assert_eq!(u0.len(), model.control_len(), "control length");
    let map = penalty.regularize(gamma);
    let m = model.node_dim();
    let mut u = u0.to_vec();
    let mut ev = evaluate(model, map.as_ref(), &u);
    let r0 = ev.norm;
    let tol = rule.abs_tol.max(rule.rel_tol * r0);
    let mut residuals = vec![r0];
    let mut step_sizes = Vec::new();
    let mut gmres_total = 0usize;
    let mut line_searches = 0usize;
    let mut iterations = 0usize;
    let mut converged = ev.norm <= tol;

    while !converged && iterations < rule.max_iterations {
        let rhs: Vec<f64> = ev.residual.iter().map(|v| -v).collect();
        let step = {
            let op = NewtonOperator { lin: ev.lin.as_ref(), deriv: &ev.deriv, m };
            gmres(&op, &rhs, config.gmres_tol, config.gmres_max_iterations)
        };
        gmres_total += step.iterations;
        let mut tau = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = u.iter().zip(&step.x).map(|(a, d)| a + tau * d).collect();
            let next = evaluate(model, map.as_ref(), &trial);
            if next.norm < ev.norm {
                break Some((trial, next));
            }
            tau *= config.backtrack;
            if tau < config.tau_min {
                break None;
            }
        };
        iterations += 1;
        let Some((trial, next)) = accepted else {
            break;
        };
        if tau < 1.0 {
            line_searches += 1;
        }
        u = trial;
        ev = next;
        residuals.push(ev.norm);
        step_sizes.push(tau);
        converged = ev.norm <= tol;
    }
    let stats = IterationStats {
        gamma,
        ssn_iterations: iterations,
        avg_gmres: if iterations > 0 { gmres_total as f64 / iterations as f64 } else { 0.0 },
        line_searches,
        non_multibang: count_non_multibang(penalty, &u, config.mb_tol),
        converged,
        residuals,
        step_sizes,
    };
    SsnOutcome { u, converged, stats }
}

#[derive(Debug, Clone)]
pub struct ContinuationResult {
    pub u: Vec<f64>,
    pub stats: Vec<IterationStats>,
    /// the last `γ` whose solve was accepted
    pub final_gamma: f64,
}

/// Halves (or scales by `reduction`) `γ` until `γ_min` or the first failed solve,
/// warm-starting each solve at the previous solution.
pub fn fixed_continuation(
    config: &SolverConfig,
    u0: &[f64],
    mut solve: impl FnMut(f64, &[f64]) -> SsnOutcome,
) -> Result<ContinuationResult, SsnError> {
    config.validate()?;
    let mut u = u0.to_vec();
    let mut stats = Vec::new();
    let mut gamma = config.gamma0;
    let mut final_gamma = f64::NAN;
    while gamma >= config.gamma_min {
        let out = solve(gamma, &u);
        stats.push(out.stats);
        if !out.converged {
            if stats.len() == 1 {
                return Err(SsnError::InitialFailure(gamma));
            }
            break;
        }
        u = out.u;
        final_gamma = gamma;
        gamma *= config.reduction;
    }
    Ok(ContinuationResult { u, stats, final_gamma })
}

/// Path-following with an adaptively chosen reduction factor. Only accepted
/// solves are recorded in the statistics.
pub fn adaptive_continuation(
    config: &SolverConfig,
    u0: &[f64],
    mut solve: impl FnMut(f64, &[f64]) -> SsnOutcome,
) -> Result<ContinuationResult, SsnError> {
    config.validate()?;
    let a = &config.adaptive;
    let mut q = a.q0;
    let mut u_prev = u0.to_vec();
    let mut stats = Vec::new();
    let first = solve(config.gamma0, &u_prev);
    if !first.converged {
        return Err(SsnError::InitialFailure(config.gamma0));
    }
    let mut gamma_prev = config.gamma0;
    let mut last_iters = first.stats.ssn_iterations;
    u_prev = first.u;
    stats.push(first.stats);
    let mut rejections = 0;
    loop {
        if last_iters <= a.fast_iterations {
            q = a.default_cap.min(q.powf(a.fast_exponent).max(a.fast_floor));
        } else if last_iters <= a.slow_iterations {
            q = q.powf(a.slow_exponent).min(a.slow_cap);
        } else {
            q = q.min(a.default_cap);
        }
        let mut gamma = gamma_prev * q;
        let accepted = loop {
            if gamma < a.gamma_stop {
                break None;
            }
            let out = solve(gamma, &u_prev);
            if out.converged {
                rejections = 0;
                break Some(out);
            }
            rejections += 1;
            if rejections > a.max_rejections {
                break None;
            }
            q = q.powf(a.fail_exponent);
            gamma = gamma_prev * q;
        };
        let Some(out) = accepted else { break };
        gamma_prev = gamma;
        last_iters = out.stats.ssn_iterations;
        u_prev = out.u;
        stats.push(out.stats);
    }
    Ok(ContinuationResult { u: u_prev, stats, final_gamma: gamma_prev })
}

/// Runs the continuation with Newton solves on `model`.
pub fn continuation(
    model: &dyn ReducedModel,
    penalty: &dyn Penalty,
    u0: &[f64],
    config: &SolverConfig,
    mode: ContinuationMode,
) -> Result<ContinuationResult, SsnError> {
    match mode {
        ContinuationMode::Fixed => {
            fixed_continuation(config, u0, |gamma, u| ssn_solve(model, penalty, u, gamma, config))
        }
        ContinuationMode::Adaptive => {
            let a = &config.adaptive;
            adaptive_continuation(config, u0, |gamma, u| {
                let rule = StopRule {
                    abs_tol: gamma.min(a.abs_target),
                    rel_tol: a.rel_target,
                    max_iterations: a.fail_iterations,
                };
                ssn_solve_with(model, penalty, u, gamma, config, rule)
            })
        }
    }
}

const STATS_HEADER: &str = "gamma,ssn_iterations,avg_gmres,line_searches,non_multibang";

/// CSV table with one row per `γ`.
pub fn stats_table(stats: &[IterationStats]) -> String {
    let mut s = String::from(STATS_HEADER);
    s.push('\n');
    for st in stats {
        s.push_str(&format!(
            "{:e},{},{},{},{}\n",
            st.gamma, st.ssn_iterations, st.avg_gmres, st.line_searches, st.non_multibang
        ));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub gamma: f64,
    pub ssn_iterations: usize,
    pub avg_gmres: f64,
    pub line_searches: usize,
    pub non_multibang: usize,
}

impl From<&IterationStats> for StatsRow {
    fn from(s: &IterationStats) -> Self {
        Self {
            gamma: s.gamma,
            ssn_iterations: s.ssn_iterations,
            avg_gmres: s.avg_gmres,
            line_searches: s.line_searches,
            non_multibang: s.non_multibang,
        }
    }
}

/// Parses the output of [`stats_table`].
pub fn parse_stats_table(text: &str) -> Result<Vec<StatsRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == STATS_HEADER => {}
        other => return Err(format!("unexpected header {other:?}")),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(n, l)| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 5 {
                return Err(format!("row {}: expected 5 fields", n + 1));
            }
            let err = |e: &dyn std::fmt::Display| format!("row {}: {e}", n + 1);
            Ok(StatsRow {
                gamma: f[0].parse().map_err(|e| err(&e))?,
                ssn_iterations: f[1].parse().map_err(|e| err(&e))?,
                avg_gmres: f[2].parse().map_err(|e| err(&e))?,
                line_searches: f[3].parse().map_err(|e| err(&e))?,
                non_multibang: f[4].parse().map_err(|e| err(&e))?,
            })
        })
        .collect()
}

/// Residuals below this fraction of the initial one are rounding noise; their
/// ratios say nothing about the convergence rate.
const ROUNDOFF_FLOOR: f64 = 1e-10;

/// For a converged solve with at least four full steps, checks that the last
/// three residual ratios above the rounding floor do not increase by more than
/// `slack` (relative). `None` if the solve does not qualify.
pub fn superlinear_tail(stats: &IterationStats, slack: f64) -> Option<bool> {
    let full = stats.step_sizes.iter().filter(|t| **t == 1.0).count();
    if !stats.converged || full < 4 {
        return None;
    }
    let r0 = *stats.residuals.first()?;
    let n = stats.residuals.iter().take_while(|r| **r > ROUNDOFF_FLOOR * r0).count();
    if n < 4 || stats.step_sizes[n - 4..n - 1].iter().any(|t| *t != 1.0) {
        return None;
    }
    let r = &stats.residuals;
    let ratios: Vec<f64> = (n - 3..n).map(|k| r[k] / r[k - 1]).collect();
    Some(ratios.windows(2).all(|w| w[1] <= w[0] * (1.0 + slack)))
}
