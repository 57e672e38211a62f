//! Jacobian-free Newton-Krylov driver for the mixed system.
//!
//! The auxiliary block `A` is eliminated, so GMRES only sees the Schur
//! complement in the inner control points. Its action is a finite
//! difference of `R_N` along `(A^{-1} B s, s)`.

use std::cell::Cell;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assembly::{MixedOptions, MixedSystem};
use crate::error::{MapError, SolveError};
use crate::linalg::{gmres, norm, GmresOptions};
use crate::mapping::{make_map, transfinite_initial_guess, BoundaryCurves, Side, SplineMap};

/// Residual evaluation and auxiliary solves needed by the Newton driver.
///
/// Sign convention: `R_L(d, c) = A d - B c - B_bnd c_bnd`, so the
/// auxiliary update that keeps `R_L` at zero along `s` is `+A^{-1} B s`.
pub trait MixedProblem {
    fn aux_len(&self) -> usize;
    fn inner_len(&self) -> usize;
    fn residual_linear(&self, d: &[f64], c: &[f64]) -> Vec<f64>;
    fn residual_nonlinear(&self, d: &[f64], c: &[f64]) -> Vec<f64>;
    /// `d` with `R_L(d, c) = 0`, solved exactly.
    fn project_aux(&self, c: &[f64]) -> Vec<f64>;
    /// `A^{-1} B s`, possibly approximate.
    fn solve_aux_b(&self, s: &[f64]) -> Vec<f64>;
    /// `A^{-1} R_L(d, c)`, possibly approximate.
    fn solve_aux_residual(&self, d: &[f64], c: &[f64]) -> Vec<f64>;
}

impl MixedProblem for MixedSystem {
    fn aux_len(&self) -> usize {
        MixedSystem::aux_len(self)
    }

    fn inner_len(&self) -> usize {
        MixedSystem::inner_len(self)
    }

    fn residual_linear(&self, d: &[f64], c: &[f64]) -> Vec<f64> {
        self.eval_rl(d, c).expect("state dimensions")
    }

    fn residual_nonlinear(&self, d: &[f64], c: &[f64]) -> Vec<f64> {
        self.eval_rn(d, c).expect("state dimensions")
    }

    fn project_aux(&self, c: &[f64]) -> Vec<f64> {
        MixedSystem::project_aux(self, c)
    }

    fn solve_aux_b(&self, s: &[f64]) -> Vec<f64> {
        self.ainv_b(s)
    }

    fn solve_aux_residual(&self, d: &[f64], c: &[f64]) -> Vec<f64> {
        self.ainv_rl(d, c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearch {
    pub factor: f64,
    pub sufficient_decrease: f64,
    pub min_step: f64,
}

impl Default for LineSearch {
    fn default() -> Self {
        LineSearch { factor: 0.5, sufficient_decrease: 1e-4, min_step: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Tolerance on the step norm relative to the first step.
    pub newton_tol: f64,
    /// Floor for the step norm test, relative to `1 + |c|` so that round-off
    /// in large coordinates does not keep the loop alive.
    pub abs_tol: f64,
    pub max_newton: usize,
    pub gmres: GmresOptions,
    pub line_search: LineSearch,
    pub coarse_levels: usize,
    /// Emit one JSON line per Newton iteration on stderr.
    pub verbose: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            newton_tol: 1e-8,
            abs_tol: 1e-12,
            max_newton: 50,
            gmres: GmresOptions::default(),
            line_search: LineSearch::default(),
            coarse_levels: 0,
            verbose: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        let positive = [
            ("newton_tol", self.newton_tol),
            ("abs_tol", self.abs_tol),
            ("gmres_tol", self.gmres.tol),
            ("line search factor", self.line_search.factor),
            ("line search constant", self.line_search.sufficient_decrease),
            ("minimum step", self.line_search.min_step),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SolveError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.line_search.factor < 1.0 && self.line_search.min_step <= 1.0) {
            return Err(SolveError::Config("line search factor and minimum step must lie in (0, 1]".into()));
        }
        if self.max_newton == 0 || self.gmres.restart == 0 || self.gmres.max_iter == 0 {
            return Err(SolveError::Config("iteration limits must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    Stagnation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub iterations: usize,
    /// `||R||` at the initial state and after every accepted step.
    pub residual_norms: Vec<f64>,
    pub step_norms: Vec<f64>,
    pub step_lengths: Vec<f64>,
    pub gmres_iterations: Vec<usize>,
    pub gmres_converged: Vec<bool>,
    pub rn_evaluations: usize,
    pub converged: bool,
    pub termination: Termination,
    pub final_residual_norm: f64,
    /// Reports of the coarser levels, coarsest first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coarse_levels: Vec<SolverReport>,
    #[serde(skip)]
    pub wall_seconds: f64,
}

impl SolverReport {
    /// The stagnation error, if the line search gave up.
    pub fn error(&self) -> Option<SolveError> {
        (self.termination == Termination::Stagnation).then(|| SolveError::Stagnation {
            iteration: self.iterations,
            residual: self.residual_norms.last().copied().unwrap_or(f64::NAN),
        })
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub report: SolverReport,
}

/// Counts nonlinear residual evaluations.
struct Counted<'a, P> {
    inner: &'a P,
    rn: Cell<usize>,
}

impl<P: MixedProblem> MixedProblem for Counted<'_, P> {
    fn aux_len(&self) -> usize {
        self.inner.aux_len()
    }
    fn inner_len(&self) -> usize {
        self.inner.inner_len()
    }
    fn residual_linear(&self, d: &[f64], c: &[f64]) -> Vec<f64> {
        self.inner.residual_linear(d, c)
    }
    fn residual_nonlinear(&self, d: &[f64], c: &[f64]) -> Vec<f64> {
        self.rn.set(self.rn.get() + 1);
        self.inner.residual_nonlinear(d, c)
    }
    fn project_aux(&self, c: &[f64]) -> Vec<f64> {
        self.inner.project_aux(c)
    }
    fn solve_aux_b(&self, s: &[f64]) -> Vec<f64> {
        self.inner.solve_aux_b(s)
    }
    fn solve_aux_residual(&self, d: &[f64], c: &[f64]) -> Vec<f64> {
        self.inner.solve_aux_residual(d, c)
    }
}

/// The auxiliary field consistent with `c`.
pub fn initial_d_from_c<P: MixedProblem>(problem: &P, c: &[f64]) -> Vec<f64> {
    problem.project_aux(c)
}

/// Difference step `sqrt(eps) (1 + ||(d, c)||) / ||s||`.
pub fn fd_epsilon(d: &[f64], c: &[f64], s_norm: f64) -> f64 {
    let state = (norm(d).powi(2) + norm(c).powi(2)).sqrt();
    f64::EPSILON.sqrt() * (1.0 + state) / s_norm.max(1e-14)
}

/// Finite-difference action of the Schur complement on `s`, given the
/// base residual `rn = R_N(d, c)`.
pub fn schur_matvec<P: MixedProblem>(problem: &P, d: &[f64], c: &[f64], rn: &[f64], s: &[f64]) -> Vec<f64> {
    let eps = fd_epsilon(d, c, norm(s));
    let p = problem.solve_aux_b(s);
    let dp: Vec<f64> = d.iter().zip(&p).map(|(a, b)| a + eps * b).collect();
    let cp: Vec<f64> = c.iter().zip(s).map(|(a, b)| a + eps * b).collect();
    let r = problem.residual_nonlinear(&dp, &cp);
    r.iter().zip(rn).map(|(a, b)| (a - b) / eps).collect()
}

/// Right-hand side `-R_N - C A^{-1} a` with `a = -R_L`. The difference
/// term is skipped when `R_L` vanishes exactly.
pub fn schur_rhs<P: MixedProblem>(problem: &P, d: &[f64], c: &[f64], rl: &[f64], rn: &[f64]) -> Vec<f64> {
    let mut rhs: Vec<f64> = rn.iter().map(|v| -v).collect();
    if rl.iter().all(|&v| v == 0.0) {
        return rhs;
    }
    // q = A^{-1} a
    let q: Vec<f64> = problem.solve_aux_residual(d, c).into_iter().map(|v| -v).collect();
    let eps = fd_epsilon(d, c, norm(&q));
    let dq: Vec<f64> = d.iter().zip(&q).map(|(a, b)| a + eps * b).collect();
    let r = problem.residual_nonlinear(&dq, c);
    for ((o, a), b) in rhs.iter_mut().zip(&r).zip(rn) {
        *o -= (a - b) / eps;
    }
    rhs
}

fn joint_norm(a: &[f64], b: &[f64]) -> f64 {
    (norm(a).powi(2) + norm(b).powi(2)).sqrt()
}

/// Damped Newton iteration from the inner control points `c0`.
pub fn newton_solve<P: MixedProblem>(problem: &P, c0: &[f64], config: &SolverConfig) -> Result<NewtonOutcome, SolveError> {
    config.validate()?;
    if c0.len() != problem.inner_len() {
        return Err(SolveError::Config(format!(
            "initial guess has {} entries, expected {}",
            c0.len(),
            problem.inner_len()
        )));
    }
    let start = Instant::now();
    let prob = Counted { inner: problem, rn: Cell::new(0) };
    let mut c = c0.to_vec();
    let mut d = prob.project_aux(&c);
    let mut rl = prob.residual_linear(&d, &c);
    let mut rn = prob.residual_nonlinear(&d, &c);
    let mut rnorm = joint_norm(&rl, &rn);
    let mut report = SolverReport {
        iterations: 0,
        residual_norms: vec![rnorm],
        step_norms: Vec::new(),
        step_lengths: Vec::new(),
        gmres_iterations: Vec::new(),
        gmres_converged: Vec::new(),
        rn_evaluations: 0,
        converged: false,
        termination: Termination::MaxIterations,
        final_residual_norm: rnorm,
        coarse_levels: Vec::new(),
        wall_seconds: 0.0,
    };
    let mut first_step: Option<f64> = None;
    let ls = config.line_search;

    for it in 1..=config.max_newton {
        report.iterations = it;
        let rhs = schur_rhs(&prob, &d, &c, &rl, &rn);
        let out = gmres(|s| schur_matvec(&prob, &d, &c, &rn, s), &rhs, config.gmres);
        let dc = out.solution;
        // A dd = a + B dc
        let q = prob.solve_aux_residual(&d, &c);
        let dd: Vec<f64> = prob.solve_aux_b(&dc).iter().zip(&q).map(|(b, q)| b - q).collect();
        let step = joint_norm(&dd, &dc);
        report.step_norms.push(step);
        report.gmres_iterations.push(out.iterations);
        report.gmres_converged.push(out.converged);
        let first = *first_step.get_or_insert(step);
        let floor = config.abs_tol * (1.0 + c.iter().map(|v| v * v).sum::<f64>().sqrt());
        let small = step <= (config.newton_tol * first).max(floor);

        let mut nu = 1.0;
        let accepted = loop {
            let ct: Vec<f64> = c.iter().zip(&dc).map(|(a, b)| a + nu * b).collect();
            let dt: Vec<f64> = d.iter().zip(&dd).map(|(a, b)| a + nu * b).collect();
            let rlt = prob.residual_linear(&dt, &ct);
            let rnt = prob.residual_nonlinear(&dt, &ct);
            let norm_t = joint_norm(&rlt, &rnt);
            if small || norm_t <= (1.0 - ls.sufficient_decrease * nu) * rnorm {
                c = ct;
                d = dt;
                rl = rlt;
                rn = rnt;
                rnorm = norm_t;
                break true;
            }
            nu *= ls.factor;
            if nu < ls.min_step {
                break false;
            }
        };
        if !accepted {
            report.termination = Termination::Stagnation;
            log_iteration(config, it, rnorm, step, 0.0, &out.iterations, prob.rn.get());
            break;
        }
        report.step_lengths.push(nu);
        report.residual_norms.push(rnorm);
        log_iteration(config, it, rnorm, step, nu, &out.iterations, prob.rn.get());
        if small {
            report.termination = Termination::Converged;
            report.converged = true;
            break;
        }
    }
    report.rn_evaluations = prob.rn.get();
    report.final_residual_norm = rnorm;
    report.wall_seconds = start.elapsed().as_secs_f64();
    Ok(NewtonOutcome { c, d, report })
}

fn log_iteration(config: &SolverConfig, it: usize, residual: f64, step: f64, nu: f64, gmres_its: &usize, rn: usize) {
    if !config.verbose {
        return;
    }
    let line = serde_json::json!({
        "iteration": it,
        "residual_norm": residual,
        "step_norm": step,
        "step_length": nu,
        "gmres_iterations": gmres_its,
        "rn_evaluations": rn,
    });
    let _ = writeln!(std::io::stderr(), "{line}");
}

/// Boundary curves of `map` re-interpolated on a coarser basis.
fn coarse_curves(map: &SplineMap, coarse: &crate::splines::TensorBasis) -> BoundaryCurves {
    let fine = map.boundary_curves();
    let on = |side: Side| {
        let kv = side.knots(&map.basis);
        let coeffs = fine.get(side);
        side.knots(coarse).interpolate(|t| kv.eval_curve(coeffs, t))
    };
    BoundaryCurves { south: on(Side::South), east: on(Side::East), north: on(Side::North), west: on(Side::West) }
}

/// Solves the single-patch problem and writes the inner control points of
/// `map`. The current inner points are the initial guess unless coarse
/// levels are requested, in which case the coarsest level starts from the
/// transfinite guess.
pub fn solve_map(map: &mut SplineMap, options: &MixedOptions, config: &SolverConfig) -> Result<SolverReport, SolveError> {
    if config.coarse_levels > 0 {
        return coarse_to_fine_solve(map, options, config);
    }
    let sys = MixedSystem::new(map, options)?;
    let c0 = sys.pack(&map.inner_points());
    let out = newton_solve(&sys, &c0, config)?;
    map.set_inner(&sys.unpack(&out.c));
    Ok(out.report)
}

/// Solves on successively coarsened bases first and prolongs the control
/// net from level to level.
pub fn coarse_to_fine_solve(
    map: &mut SplineMap,
    options: &MixedOptions,
    config: &SolverConfig,
) -> Result<SolverReport, SolveError> {
    let start = Instant::now();
    let mut bases = vec![map.basis.clone()];
    for _ in 0..config.coarse_levels {
        let coarse = bases.last().unwrap().coarsen().map_err(MapError::from)?;
        bases.push(coarse);
    }
    bases.reverse();
    let level_config = SolverConfig { coarse_levels: 0, ..config.clone() };
    let mut coarse_reports = Vec::new();
    let mut current: Option<SplineMap> = None;
    for (level, basis) in bases.iter().enumerate() {
        let is_finest = level + 1 == bases.len();
        let mut level_map = if is_finest {
            map.clone()
        } else {
            make_map(basis.clone(), &coarse_curves(map, basis))?
        };
        match &current {
            None => {
                let inner = transfinite_initial_guess(&level_map);
                level_map.set_inner(&inner);
            }
            Some(prev) => {
                let (refined, prolong) = prev.basis.h_refine();
                if refined != level_map.basis {
                    return Err(SolveError::Config("basis hierarchy is not nested by bisection".into()));
                }
                let net = prolong.apply_points(&prev.control_points);
                let inner: Vec<_> = level_map.inner_indices().iter().map(|&k| net[k]).collect();
                level_map.set_inner(&inner);
            }
        }
        let report = solve_map(&mut level_map, options, &level_config)?;
        if is_finest {
            *map = level_map;
            let mut report = report;
            report.coarse_levels = coarse_reports;
            report.wall_seconds = start.elapsed().as_secs_f64();
            return Ok(report);
        }
        coarse_reports.push(report);
        current = Some(level_map);
    }
    unreachable!("the hierarchy contains the input basis")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::mirrored_inner;
    use crate::splines::{KnotVector, TensorBasis};
    use crate::Vec2;

    fn map_of(basis: TensorBasis, f: impl Fn(f64, f64) -> Vec2) -> SplineMap {
        let curves = BoundaryCurves::interpolate(&basis, &f);
        let mut map = make_map(basis, &curves).unwrap();
        let inner = transfinite_initial_guess(&map);
        map.set_inner(&inner);
        map
    }

    fn square(p: usize, n: usize) -> TensorBasis {
        TensorBasis::new(KnotVector::uniform(p, n).unwrap(), KnotVector::uniform(p, n).unwrap())
    }

    #[test]
    fn identity_converges_immediately() {
        let mut map = map_of(square(2, 3), |x, y| [x, y]);
        let report = solve_map(&mut map, &MixedOptions::default(), &SolverConfig::default()).unwrap();
        assert!(report.converged);
        assert!(report.iterations <= 2);
        assert!(report.final_residual_norm < 1e-10);
    }

    #[test]
    fn consistent_state_rhs_is_minus_rn() {
        let map = map_of(square(2, 2), |x, y| [x + 0.1 * y * y, y]);
        let sys = MixedSystem::new(&map, &MixedOptions::default()).unwrap();
        let c = sys.pack(&map.inner_points());
        let d = sys.project_aux(&c);
        let rn = sys.eval_rn(&d, &c).unwrap();
        let rl = vec![0.0; d.len()];
        let rhs = schur_rhs(&sys, &d, &c, &rl, &rn);
        assert!(rhs.iter().zip(&rn).all(|(a, b)| *a == -b));
    }

    #[test]
    fn tiny_direction_is_finite() {
        let map = map_of(square(2, 2), |x, y| [x, y]);
        let sys = MixedSystem::new(&map, &MixedOptions::default()).unwrap();
        let c = sys.pack(&map.inner_points());
        let d = sys.project_aux(&c);
        let rn = sys.eval_rn(&d, &c).unwrap();
        let s = vec![1e-300; c.len()];
        assert!(schur_matvec(&sys, &d, &c, &rn, &s).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn folded_start_recovers() {
        let mut map = map_of(square(2, 4), |x, y| [x + 0.2 * y, y + 0.1 * x * x]);
        let folded = mirrored_inner(&map, &map.inner_points());
        map.set_inner(&folded);
        let report = solve_map(&mut map, &MixedOptions::default(), &SolverConfig::default()).unwrap();
        assert!(report.converged, "{report:?}");
        assert!(crate::mapping::sampled_bijectivity(&map, 5).is_bijective());
        // line search never accepts an increase
        let ls = LineSearch::default();
        for (w, nu) in report.residual_norms.windows(2).zip(&report.step_lengths) {
            assert!(w[1] <= (1.0 - ls.sufficient_decrease * nu) * w[0] || nu == report.step_lengths.last().unwrap());
        }
    }

    #[test]
    fn config_validation() {
        let bad = SolverConfig { newton_tol: -1.0, ..Default::default() };
        assert!(matches!(bad.validate(), Err(SolveError::Config(_))));
        let bad = SolverConfig { max_newton: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
