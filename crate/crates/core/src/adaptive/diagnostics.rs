//! A posteriori checks of a run with retained iterates. All of them compare
//! against a per-level reference solution computed by iterating exact
//! Kačanov steps to convergence.

use serde::Serialize;

use super::{Diagnostics, RunHistory};
use crate::algsolver::direct_solve;
use crate::error::{Error, Result};
use crate::estimator::indicators;
use crate::fem::{energy_norm_of_difference, DiscreteProblem, FeFunction};
use crate::linearize::{build_system, LinearizationMethod};

const REFERENCE_MAX_ITERATIONS: usize = 500;

/// Minimizer of the discrete energy, approximated by exact Kačanov steps
/// from `start` until the energy decrease drops below `1e-14 |E|` and the
/// update below `1e-10 ||u||`.
pub fn reference_solution(problem: &DiscreteProblem, start: &FeFunction) -> Result<FeFunction> {
    let mut u = start.clone();
    for _ in 0..REFERENCE_MAX_ITERATIONS {
        let next = direct_solve(&build_system(LinearizationMethod::Kacanov, problem, &u)?)?;
        let decrease = problem.energy_difference(&next, &u)?;
        let energy = problem.energy(&next)?;
        let step = energy_norm_of_difference(&next, &u)?;
        let scale = crate::fem::energy_norm(&next);
        u = next;
        if decrease <= 1e-14 * energy.abs() && step <= 1e-10 * scale.max(f64::MIN_POSITIVE) {
            return Ok(u);
        }
    }
    Err(Error::Defect(format!("reference solution not converged in {REFERENCE_MAX_ITERATIONS} iterations")))
}

fn retained(history: &RunHistory) -> Result<&Diagnostics> {
    history.diagnostics.as_ref().ok_or(Error::DiagnosticsOff)
}

/// One reference solution per level, started from the level's final iterate.
pub fn reference_solutions(history: &RunHistory) -> Result<Vec<FeFunction>> {
    retained(history)?
        .levels
        .iter()
        .map(|l| reference_solution(&l.problem, l.accepted.last().expect("transferred iterate")))
        .collect()
}

/// Quasi-error `||u* - u^{k,j}|| + ||u^{k,*} - u^{k,j}|| + eta(u^{k,j})` for
/// every step, where `u^{k,*}` solves the linearized problem exactly.
pub fn quasi_error(history: &RunHistory, references: &[FeFunction]) -> Result<Vec<f64>> {
    let diag = retained(history)?;
    check_references(diag, references)?;
    let mut out = Vec::with_capacity(history.steps.len());
    let mut cursor = vec![0usize; diag.levels.len()];
    let mut exact_step: Option<((usize, usize), FeFunction)> = None;
    for s in &history.steps {
        let level = &diag.levels[s.ell];
        let u = level.iterates.get(cursor[s.ell]).ok_or(Error::DiagnosticsOff)?;
        cursor[s.ell] += 1;
        if exact_step.as_ref().is_none_or(|(key, _)| *key != (s.ell, s.k)) {
            let point = &level.accepted[s.k - 1];
            let sys = build_system(diag.method, &level.problem, point)?;
            exact_step = Some(((s.ell, s.k), direct_solve(&sys)?));
        }
        let u_lin = &exact_step.as_ref().expect("set above").1;
        out.push(
            energy_norm_of_difference(&references[s.ell], u)? + energy_norm_of_difference(u_lin, u)? + s.eta,
        );
    }
    Ok(out)
}

/// Ratios `dl2(u*, u^{k}) / dl2(u*, u^{k-1})` over accepted linearization
/// iterates. Pairs whose denominator is below `1e-20 max(1, |E(u*)|)` are
/// skipped as rounding noise.
pub fn energy_contraction_ratios(history: &RunHistory, references: &[FeFunction]) -> Result<Vec<f64>> {
    let diag = retained(history)?;
    check_references(diag, references)?;
    let mut out = Vec::new();
    for (level, u_star) in diag.levels.iter().zip(references) {
        let p = &level.problem;
        let floor = 1e-20 * p.energy(u_star)?.abs().max(1.0);
        for pair in level.accepted.windows(2) {
            let before = p.energy_difference(u_star, &pair[0])?;
            let after = p.energy_difference(u_star, &pair[1])?;
            if before > floor {
                out.push(after / before);
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EquivalenceRecord {
    pub ell: usize,
    /// Estimator at the final iterate of the level.
    pub eta_final: f64,
    /// Estimator at the reference solution.
    pub eta_reference: f64,
}

pub fn estimator_equivalence(history: &RunHistory, references: &[FeFunction]) -> Result<Vec<EquivalenceRecord>> {
    let diag = retained(history)?;
    check_references(diag, references)?;
    diag.levels
        .iter()
        .zip(references)
        .enumerate()
        .map(|(ell, (level, u_star))| {
            let u = level.accepted.last().expect("transferred iterate");
            Ok(EquivalenceRecord {
                ell,
                eta_final: indicators(&level.problem, u)?.total(),
                eta_reference: indicators(&level.problem, u_star)?.total(),
            })
        })
        .collect()
}

fn check_references(diag: &Diagnostics, references: &[FeFunction]) -> Result<()> {
    if references.len() != diag.levels.len() {
        return Err(Error::DimensionMismatch { expected: diag.levels.len(), got: references.len() });
    }
    Ok(())
}

/// Fit `h_i <= C q^{i - i'} h_{i'}` for all `i' <= i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RLinearFit {
    /// `exp` of the least-squares slope of `log h` against the index.
    pub q: f64,
    /// Smallest constant valid for that `q`.
    pub c: f64,
}

pub fn r_linear_fit(h: &[f64]) -> Result<RLinearFit> {
    if h.len() < 2 {
        return Err(Error::InsufficientData(format!("{} values, need 2", h.len())));
    }
    if let Some(v) = h.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter(format!("non-positive quasi-error {v}")));
    }
    let n = h.len() as f64;
    let logs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let mean_i = (n - 1.0) / 2.0;
    let mean_l = logs.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, l) in logs.iter().enumerate() {
        let dx = i as f64 - mean_i;
        sxy += dx * (l - mean_l);
        sxx += dx * dx;
    }
    let log_q = sxy / sxx;
    // log C = max over i' <= i of (log h_i - i log q) - (log h_i' - i' log q)
    let mut lowest = f64::INFINITY;
    let mut log_c = f64::NEG_INFINITY;
    for (i, l) in logs.iter().enumerate() {
        let shifted = l - i as f64 * log_q;
        lowest = lowest.min(shifted);
        log_c = log_c.max(shifted - lowest);
    }
    Ok(RLinearFit { q: log_q.exp(), c: log_c.exp() })
}
