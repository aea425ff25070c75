//! The adaptive triple loop: mesh level `l`, linearization step `k`,
//! algebraic solver step `j`.
//!
//! The algebraic loop needs no tuning constant. It stops as soon as the
//! energy-per-norm quotient
//!
//! ```text
//! alpha_{l}^{k,j} = dl2(u^{k,j}, u^{k-1}) / ||u^{k,j} - u^{k-1}||^2
//! ```
//!
//! reaches the running lower bound `alpha_min`, or the update vanishes, or it
//! is positive after more than `J_max` steps. Whenever a loop needs more than
//! `J_max` steps, `J_max` grows to that count and `alpha_min` shrinks by `rho`.

mod diagnostics;
mod history;
mod marking;

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use diagnostics::{
    energy_contraction_ratios, estimator_equivalence, quasi_error, r_linear_fit, reference_solution,
    reference_solutions, EquivalenceRecord, RLinearFit,
};
pub use history::{
    rates, rates_from_points, Diagnostics, LevelData, LevelRecord, LinearizationRecord, RateSummary, RunHistory,
    StepRecord, Termination,
};
pub use marking::doerfler_mark;

use crate::algsolver::{direct_solve, MultigridCycle, MultilevelHierarchy, SolverStats};
use crate::error::{Error, Result};
use crate::estimator::{indicators, IndicatorField};
use crate::fem::{energy_norm, exact_error, DiscreteProblem, DofMap, ElementWeights, FeFunction};
use crate::linearize::{build_system_with_weights, element_weights, LinearizationMethod};
use crate::problems::Problem;

/// What to keep for a posteriori diagnostics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Retention {
    #[default]
    None,
    /// Discrete problem and `u^{k,j_}` for every level and `k >= 0`.
    Accepted,
    /// Additionally every iterate `u^{k,j}`.
    Full,
}

#[derive(Clone, Debug)]
pub struct AdaptiveParams {
    /// Dörfler bulk parameter in `(0, 1]`.
    pub theta: f64,
    /// Linearization stopping parameter `> 0`.
    pub lambda_lin: f64,
    /// Decay of `alpha_min` in `(0, 1)`.
    pub rho: f64,
    pub alpha_min_init: f64,
    pub j_max_init: usize,
    /// Overall tolerance of the combined stopping test.
    pub tau: f64,
    /// Marking is sort-based, hence minimal; any `c_mark >= 1` is met.
    pub c_mark: f64,
    pub method: LinearizationMethod,
    pub max_total_steps: usize,
    /// Stop once the final estimator of a level drops below this value.
    pub eta_stop: Option<f64>,
    pub record_exact_error: bool,
    /// Compare every algebraic step against a direct solve.
    pub measure_contraction: bool,
    pub retention: Retention,
}

impl Default for AdaptiveParams {
    fn default() -> Self {
        Self {
            theta: 0.5,
            lambda_lin: 0.9,
            rho: 0.5,
            alpha_min_init: 100.0,
            j_max_init: 1,
            tau: 0.0,
            c_mark: 1.0,
            method: LinearizationMethod::Kacanov,
            max_total_steps: 1_000_000,
            eta_stop: None,
            record_exact_error: false,
            measure_contraction: false,
            retention: Retention::None,
        }
    }
}

impl AdaptiveParams {
    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self, problem: &Problem) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return bad(format!("theta = {} not in (0, 1]", self.theta));
        }
        if !(self.lambda_lin > 0.0 && self.lambda_lin.is_finite()) {
            return bad(format!("lambda_lin = {} must be positive", self.lambda_lin));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad(format!("rho = {} not in (0, 1)", self.rho));
        }
        if !(self.alpha_min_init > 0.0 && self.alpha_min_init.is_finite()) {
            return bad(format!("alpha_min = {} must be positive", self.alpha_min_init));
        }
        if self.j_max_init < 1 {
            return bad("j_max must be at least 1".into());
        }
        if !(self.tau >= 0.0) {
            return bad(format!("tau = {} must be nonnegative", self.tau));
        }
        if !(self.c_mark >= 1.0) {
            return bad(format!("c_mark = {} must be at least 1", self.c_mark));
        }
        if self.max_total_steps == 0 {
            return bad("max_total_steps must be positive".into());
        }
        if let Some(s) = self.eta_stop {
            if !(s > 0.0) {
                return bad(format!("eta_stop = {s} must be positive"));
            }
        }
        if self.record_exact_error && problem.data.exact_gradient.is_none() {
            return Err(Error::MissingExactSolution);
        }
        self.method.validate(&problem.nonlinearity)
    }
}

/// Combined termination test: `eta + ||u^{k,j} - u^{k-1}|| + ||u^{k,j} - u^{k,j-1}|| <= tau`.
pub fn overall_stop(eta: f64, norm_inc_lin: f64, norm_inc_alg: f64, tau: f64) -> bool {
    eta + norm_inc_lin + norm_inc_alg <= tau
}

/// Algebraic stopping test. `alpha` is NaN when the update vanished.
pub fn algebraic_stop(alpha: f64, update_vanished: bool, j: usize, j_max: usize, alpha_min: f64) -> bool {
    alpha >= alpha_min || update_vanished || (alpha > 0.0 && j > j_max)
}

/// Linearization stopping test `dl2(u^{k}, u^{k-1}) <= lambda_lin eta(u^k)^2`.
pub fn linearization_stop(dl2_inc: f64, eta: f64, lambda_lin: f64) -> bool {
    dl2_inc <= lambda_lin * eta * eta
}

/// Self-tuning after an algebraic loop that took `j_final` steps.
pub fn update_solver_bounds(j_final: usize, j_max: &mut usize, alpha_min: &mut f64, rho: f64) {
    if j_final > *j_max {
        *j_max = j_final;
        *alpha_min *= rho;
    }
}

/// `||v|| <= 2^-48 max(1, ||u||)` stands in for exact equality.
pub fn update_vanished(norm_inc: f64, norm_u: f64) -> bool {
    norm_inc <= 2f64.powi(-48) * norm_u.max(1.0)
}

/// Counters and self-tuning state of a running loop.
#[derive(Clone, Debug)]
pub struct LoopState {
    pub ell: usize,
    pub k: usize,
    pub j: usize,
    pub alpha_min: f64,
    pub j_max: usize,
    pub problem: DiscreteProblem,
    /// `u^{k,j}`.
    pub iterate: FeFunction,
    /// `u^{k-1, j_}`: the current linearization point.
    pub accepted: FeFunction,
}

enum Flow {
    Continue,
    Terminate(Termination),
}

struct Driver<'a> {
    problem: &'a Problem,
    params: &'a AdaptiveParams,
    hierarchy: MultilevelHierarchy,
    history: RunHistory,
    cum_cost: u64,
    total_steps: usize,
    last_indicators: Option<IndicatorField>,
}

pub fn run(problem: &Problem, params: &AdaptiveParams) -> Result<RunHistory> {
    params.validate(problem)?;
    let start = Instant::now();
    let dofs = Arc::new(DofMap::new(Arc::new(problem.initial_mesh.clone())));
    let discrete = DiscreteProblem::new(Arc::clone(&dofs), &problem.data, &problem.nonlinearity);
    let zero = discrete.zero();
    let mut state = LoopState {
        ell: 0,
        k: 0,
        j: 0,
        alpha_min: params.alpha_min_init,
        j_max: params.j_max_init,
        problem: discrete,
        iterate: zero.clone(),
        accepted: zero,
    };
    let mut driver = Driver {
        problem,
        params,
        hierarchy: MultilevelHierarchy::new(dofs),
        history: RunHistory::new(params),
        cum_cost: 0,
        total_steps: 0,
        last_indicators: None,
    };
    let termination = loop {
        match driver.level(&mut state) {
            Ok(Flow::Continue) => {}
            Ok(Flow::Terminate(t)) => break t,
            Err(Error::StepCap { cap, .. }) => {
                let mut history = driver.history;
                history.termination = Termination::StepCap;
                history.wall_time_seconds = start.elapsed().as_secs_f64();
                history.final_mesh = Some(Arc::clone(state.problem.dofs().mesh()));
                return Err(Error::StepCap { cap, history: Box::new(history) });
            }
            Err(e) => return Err(e),
        }
    };
    let mut history = driver.history;
    history.termination = termination;
    history.wall_time_seconds = start.elapsed().as_secs_f64();
    history.final_mesh = Some(Arc::clone(state.problem.dofs().mesh()));
    Ok(history)
}

impl Driver<'_> {
    fn level(&mut self, state: &mut LoopState) -> Result<Flow> {
        if self.params.retention != Retention::None {
            let diag = self.history.diagnostics.get_or_insert_with(|| Diagnostics {
                method: self.params.method,
                levels: Vec::new(),
            });
            diag.levels.push(LevelData {
                problem: state.problem.clone(),
                accepted: vec![state.accepted.clone()],
                iterates: Vec::new(),
            });
        }
        if let Flow::Terminate(t) = self.linearization_loop(state)? {
            return Ok(Flow::Terminate(t));
        }
        let ind = self.last_indicators.take().expect("at least one step per level");
        let eta = ind.total();
        let marked = doerfler_mark(&ind, self.params.theta);
        let mesh = state.problem.dofs().mesh();
        let exact = if self.params.record_exact_error { Some(state.problem.exact_error(&state.iterate)?) } else { None };
        self.history.levels.push(LevelRecord {
            ell: state.ell,
            dofs: state.problem.dofs().num_dofs(),
            triangles: mesh.num_triangles(),
            k_final: state.k,
            eta,
            marked: marked.len(),
            cum_cost: self.cum_cost,
            exact_error: exact,
        });
        if self.params.eta_stop.is_some_and(|s| eta < s) {
            return Ok(Flow::Terminate(Termination::ToleranceMet));
        }
        if marked.is_empty() {
            return Ok(Flow::Terminate(Termination::ExactHit));
        }
        let fine = Arc::new(mesh.refine(&marked));
        let dofs = Arc::new(DofMap::new(fine));
        self.hierarchy.push(Arc::clone(&dofs))?;
        let coeffs = self.hierarchy.prolongate(self.hierarchy.num_levels() - 1, state.iterate.coeffs());
        state.problem = DiscreteProblem::new(Arc::clone(&dofs), &self.problem.data, &self.problem.nonlinearity);
        state.iterate = FeFunction::from_coeffs(&dofs, coeffs)?;
        state.accepted = state.iterate.clone();
        state.ell += 1;
        state.k = 0;
        state.j = 0;
        Ok(Flow::Continue)
    }

    fn linearization_loop(&mut self, state: &mut LoopState) -> Result<Flow> {
        loop {
            state.k += 1;
            state.j = 0;
            let weights = element_weights(self.params.method, &state.problem, &state.accepted);
            let (weight_min, weight_max) = weight_range(&weights);
            let sys = build_system_with_weights(self.params.method, &state.problem, &state.accepted, &weights)?;
            if let Flow::Terminate(t) = self.algebraic_inner_loop(state, &sys)? {
                return Ok(Flow::Terminate(t));
            }
            let j_final = state.j;
            update_solver_bounds(j_final, &mut state.j_max, &mut state.alpha_min, self.params.rho);
            let last = self.history.steps.last().expect("inner loop records");
            let (eta, mut dl2) = (last.eta, last.dl2_inc);
            let energy = last.energy;
            if dl2 < 0.0 {
                if dl2 < -1e-12 * energy.abs() {
                    return Err(Error::Defect(format!(
                        "energy increased by {} at level {} step {}",
                        -dl2, state.ell, state.k
                    )));
                }
                dl2 = 0.0;
            }
            let stop = linearization_stop(dl2, eta, self.params.lambda_lin);
            self.history.linearizations.push(LinearizationRecord {
                ell: state.ell,
                k: state.k,
                j_final,
                weight_min,
                weight_max,
                dl2_inc: dl2,
                eta,
            });
            state.accepted = state.iterate.clone();
            if let Some(diag) = self.history.diagnostics.as_mut() {
                diag.levels.last_mut().expect("level pushed").accepted.push(state.accepted.clone());
            }
            if stop {
                return Ok(Flow::Continue);
            }
        }
    }

    fn algebraic_inner_loop(&mut self, state: &mut LoopState, sys: &crate::linearize::LinearizedSystem) -> Result<Flow> {
        let cycle = MultigridCycle::new(&self.hierarchy, sys.matrix())?;
        let exact = if self.params.measure_contraction { Some(direct_solve(sys)?) } else { None };
        let a_error = |u: &FeFunction, exact: &FeFunction| -> f64 {
            let d: Vec<f64> = u.coeffs().iter().zip(exact.coeffs()).map(|(a, b)| a - b).collect();
            sys.a_norm(&d)
        };
        let problem = &state.problem;
        let nt = problem.dofs().mesh().num_triangles() as u64;
        state.iterate = state.accepted.clone();
        loop {
            state.j += 1;
            self.total_steps += 1;
            if self.total_steps > self.params.max_total_steps {
                return Err(Error::StepCap { cap: self.params.max_total_steps, history: Box::default() });
            }
            let previous = std::mem::replace(&mut state.iterate, problem.zero());
            state.iterate = FeFunction::from_coeffs(problem.dofs(), cycle.step(sys.rhs(), previous.coeffs()))?;
            let u = &state.iterate;
            if !u.is_finite() {
                return Err(Error::Defect(format!("non-finite iterate at level {} step {} {}", state.ell, state.k, state.j)));
            }
            if let Some(exact) = &exact {
                let floor = 1e-12 * sys.a_norm(exact.coeffs());
                let stats = self.history.solver_stats.get_or_insert_with(SolverStats::default);
                stats.record(a_error(&previous, exact), a_error(u, exact), floor);
            }
            let ind = indicators(problem, u)?;
            let eta = ind.total();
            let norm_inc_lin = energy_norm(&u.sub(&state.accepted)?);
            let norm_inc_alg = energy_norm(&u.sub(&previous)?);
            self.cum_cost += nt;
            let dl2_inc = problem.energy_difference(u, &state.accepted)?;
            let vanished = update_vanished(norm_inc_lin, energy_norm(u));
            let alpha = if vanished { f64::NAN } else { dl2_inc / (norm_inc_lin * norm_inc_lin) };
            let energy = problem.energy(u)?;
            let exact_err = if self.params.record_exact_error { Some(exact_error(problem.data(), u)?) } else { None };
            self.history.steps.push(StepRecord {
                ell: state.ell,
                k: state.k,
                j: state.j,
                dofs: problem.dofs().num_dofs(),
                eta,
                norm_inc_lin,
                norm_inc_alg,
                dl2_inc,
                alpha_kj: alpha,
                alpha_min: state.alpha_min,
                j_max: state.j_max,
                energy,
                cum_cost: self.cum_cost,
                exact_error: exact_err,
            });
            if self.params.retention == Retention::Full {
                let diag = self.history.diagnostics.as_mut().expect("retention enabled");
                diag.levels.last_mut().expect("level pushed").iterates.push(u.clone());
            }
            self.last_indicators = Some(ind);
            if overall_stop(eta, norm_inc_lin, norm_inc_alg, self.params.tau) {
                return Ok(Flow::Terminate(Termination::ToleranceMet));
            }
            if algebraic_stop(alpha, vanished, state.j, state.j_max, state.alpha_min) {
                return Ok(Flow::Continue);
            }
        }
    }
}

fn weight_range(weights: &ElementWeights) -> (f64, f64) {
    match weights {
        ElementWeights::Constant(c) => (*c, *c),
        ElementWeights::Scalar(w) => w.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x))),
        ElementWeights::Matrix(w) => w.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| {
            // eigenvalues of a symmetric 2x2 matrix
            let (tr, det) = (m[0][0] + m[1][1], m[0][0] * m[1][1] - m[0][1] * m[1][0]);
            let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
            (lo.min(0.5 * tr - disc), hi.max(0.5 * tr + disc))
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::builtin_problem;

    #[test]
    fn overall_stop_sides() {
        assert!(overall_stop(0.5, 0.25, 0.25, 1.0));
        assert!(!overall_stop(0.5, 0.25, 0.2500001, 1.0));
        assert!(overall_stop(0.0, 0.0, 0.0, 0.0));
        assert!(!overall_stop(1e-300, 0.0, 0.0, 0.0));
    }

    #[test]
    fn algebraic_stop_clauses() {
        // first clause: quotient reaches the bound
        assert!(algebraic_stop(2.0, false, 1, 5, 2.0));
        assert!(!algebraic_stop(1.999, false, 1, 5, 2.0));
        // second clause: vanished update
        assert!(algebraic_stop(f64::NAN, true, 1, 5, 2.0));
        // third clause needs both a positive quotient and j > J_max
        assert!(algebraic_stop(0.1, false, 6, 5, 2.0));
        assert!(!algebraic_stop(0.1, false, 5, 5, 2.0));
        assert!(!algebraic_stop(-0.1, false, 6, 5, 2.0));
        assert!(!algebraic_stop(0.0, false, 6, 5, 2.0));
        assert!(!algebraic_stop(f64::NAN, false, 9, 5, 2.0));
    }

    #[test]
    fn linearization_stop_sides() {
        assert!(linearization_stop(0.9, 1.0, 0.9));
        assert!(!linearization_stop(0.9000001, 1.0, 0.9));
        assert!(linearization_stop(0.0, 0.0, 0.5));
    }

    #[test]
    fn solver_bounds_update() {
        let (mut j_max, mut alpha_min) = (1, 100.0);
        update_solver_bounds(1, &mut j_max, &mut alpha_min, 0.5);
        assert_eq!((j_max, alpha_min), (1, 100.0));
        update_solver_bounds(3, &mut j_max, &mut alpha_min, 0.5);
        assert_eq!((j_max, alpha_min), (3, 50.0));
        update_solver_bounds(2, &mut j_max, &mut alpha_min, 0.5);
        assert_eq!((j_max, alpha_min), (3, 50.0));
    }

    #[test]
    fn vanishing_update_threshold() {
        assert!(update_vanished(0.0, 0.0));
        assert!(update_vanished(2f64.powi(-48), 0.5));
        assert!(!update_vanished(2f64.powi(-47), 1.0));
        assert!(update_vanished(2f64.powi(-40), 2f64.powi(8)));
    }

    #[test]
    fn huge_tolerance_stops_after_first_step() {
        let problem = builtin_problem("zshape").unwrap();
        let params = AdaptiveParams { tau: 1e10, ..Default::default() };
        let h = run(&problem, &params).unwrap();
        assert_eq!(h.steps.len(), 1);
        let s = &h.steps[0];
        assert_eq!((s.ell, s.k, s.j), (0, 1, 1));
        assert_eq!(h.termination, Termination::ToleranceMet);
    }

    #[test]
    fn step_cap_returns_history() {
        let problem = builtin_problem("lshape").unwrap();
        let params = AdaptiveParams { max_total_steps: 25, ..Default::default() };
        match run(&problem, &params) {
            Err(Error::StepCap { cap, history }) => {
                assert_eq!(cap, 25);
                assert_eq!(history.steps.len(), 25);
                assert_eq!(history.termination, Termination::StepCap);
            }
            other => panic!("expected step cap, got {other:?}"),
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        let problem = builtin_problem("lshape").unwrap();
        for params in [
            AdaptiveParams { theta: 0.0, ..Default::default() },
            AdaptiveParams { theta: 1.5, ..Default::default() },
            AdaptiveParams { rho: 1.0, ..Default::default() },
            AdaptiveParams { lambda_lin: 0.0, ..Default::default() },
            AdaptiveParams { j_max_init: 0, ..Default::default() },
            AdaptiveParams { method: LinearizationMethod::Zarantonello { delta: 1.0 }, ..Default::default() },
        ] {
            assert!(run(&problem, &params).is_err());
        }
        let z = builtin_problem("zshape").unwrap();
        let params = AdaptiveParams { record_exact_error: true, ..Default::default() };
        assert!(matches!(run(&z, &params), Err(Error::MissingExactSolution)));
    }

    #[test]
    fn small_run_invariants() {
        let problem = builtin_problem("zshape").unwrap();
        let params = AdaptiveParams { eta_stop: Some(0.15), ..Default::default() };
        let h = run(&problem, &params).unwrap();
        assert_eq!(h.termination, Termination::ToleranceMet);
        // lexicographic order and positive counters
        for w in h.steps.windows(2) {
            assert!((w[0].ell, w[0].k, w[0].j) < (w[1].ell, w[1].k, w[1].j));
            assert!(w[0].cum_cost < w[1].cum_cost);
            assert!(w[1].j_max >= w[0].j_max);
            assert!(w[1].alpha_min <= w[0].alpha_min);
        }
        assert!(h.steps.iter().all(|s| s.k >= 1 && s.j >= 1));
        assert!(h.levels.iter().all(|l| l.k_final >= 1));
        // alpha_min moves exactly with J_max
        for w in h.steps.windows(2) {
            if w[1].j_max > w[0].j_max {
                assert_eq!(w[1].alpha_min, w[0].alpha_min * 0.5);
            } else {
                assert_eq!(w[1].alpha_min, w[0].alpha_min);
            }
        }
    }
}
