use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;

use super::AdaptiveParams;
use crate::algsolver::SolverStats;
use crate::error::{Error, Result};
use crate::fem::{DiscreteProblem, FeFunction};
use crate::linearize::LinearizationMethod;
use crate::mesh::Mesh;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    ToleranceMet,
    #[default]
    StepCap,
    /// The estimator vanished, so marking selected nothing.
    ExactHit,
}

/// One algebraic solver step `u^{k,j}` on level `ell`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub ell: usize,
    pub k: usize,
    pub j: usize,
    pub dofs: usize,
    pub eta: f64,
    /// `||u^{k,j} - u^{k-1}||`
    pub norm_inc_lin: f64,
    /// `||u^{k,j} - u^{k,j-1}||`
    pub norm_inc_alg: f64,
    /// `E(u^{k-1}) - E(u^{k,j})`
    pub dl2_inc: f64,
    /// NaN when the update vanished.
    pub alpha_kj: f64,
    pub alpha_min: f64,
    pub j_max: usize,
    pub energy: f64,
    /// Sum of triangle counts over all steps so far.
    pub cum_cost: u64,
    pub exact_error: Option<f64>,
}

/// One accepted linearization step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinearizationRecord {
    pub ell: usize,
    pub k: usize,
    pub j_final: usize,
    /// Extreme eigenvalues of the elementwise weights of the linearized form.
    pub weight_min: f64,
    pub weight_max: f64,
    pub dl2_inc: f64,
    pub eta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelRecord {
    pub ell: usize,
    pub dofs: usize,
    pub triangles: usize,
    pub k_final: usize,
    pub eta: f64,
    pub marked: usize,
    pub cum_cost: u64,
    pub exact_error: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct LevelData {
    pub problem: DiscreteProblem,
    /// `u^{0}, u^{1,j_}, ..., u^{k_,j_}`; the first entry is the transferred iterate.
    pub accepted: Vec<FeFunction>,
    /// Every `u^{k,j}` of the level in step order; empty unless fully retained.
    pub iterates: Vec<FeFunction>,
}

#[derive(Clone, Debug)]
pub struct Diagnostics {
    pub method: LinearizationMethod,
    pub levels: Vec<LevelData>,
}

#[derive(Clone, Debug, Default)]
pub struct RunHistory {
    pub steps: Vec<StepRecord>,
    pub linearizations: Vec<LinearizationRecord>,
    pub levels: Vec<LevelRecord>,
    pub termination: Termination,
    pub solver_stats: Option<SolverStats>,
    pub diagnostics: Option<Diagnostics>,
    pub wall_time_seconds: f64,
    /// Mesh of the last level visited.
    pub final_mesh: Option<Arc<Mesh>>,
    record_exact_error: bool,
}

const CSV_COLUMNS: &str =
    "ell,k,j,dofs,eta,norm_inc_lin,norm_inc_alg,dl2_inc,alpha_kj,alpha_min,J_max,energy,cum_cost";

impl RunHistory {
    pub(super) fn new(params: &AdaptiveParams) -> Self {
        Self { record_exact_error: params.record_exact_error, ..Self::default() }
    }

    /// Steps of the final linearization step on each level, i.e. the
    /// iterates `u^{k_,j_}`.
    pub fn final_steps(&self) -> Vec<&StepRecord> {
        let mut out: Vec<&StepRecord> = Vec::new();
        for s in &self.steps {
            match out.last_mut() {
                Some(last) if last.ell == s.ell => *last = s,
                _ => out.push(s),
            }
        }
        out
    }

    /// All step records in CSV form, with floats in shortest round-trip notation.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_COLUMNS);
        if self.record_exact_error {
            out.push_str(",exact_error");
        }
        out.push('\n');
        for s in &self.steps {
            let _ = write!(
                out,
                "{},{},{},{},{:?},{:?},{:?},{:?},{:?},{:?},{},{:?},{}",
                s.ell,
                s.k,
                s.j,
                s.dofs,
                s.eta,
                s.norm_inc_lin,
                s.norm_inc_alg,
                s.dl2_inc,
                s.alpha_kj,
                s.alpha_min,
                s.j_max,
                s.energy,
                s.cum_cost
            );
            if self.record_exact_error {
                let _ = write!(out, ",{:?}", s.exact_error.unwrap_or(f64::NAN));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateSummary {
    /// Least-squares slope of `log eta` against `log dofs`.
    pub slope_dofs: f64,
    /// Least-squares slope of `log eta` against `log cum_cost`.
    pub slope_cost: f64,
    pub levels_used: usize,
}

/// Empirical convergence rates from the final iterate of every level,
/// discarding the first `cutoff` fraction of levels.
pub fn rates(history: &RunHistory, cutoff: f64) -> Result<RateSummary> {
    let points: Vec<(f64, f64, f64)> =
        history.levels.iter().map(|l| (l.dofs as f64, l.cum_cost as f64, l.eta)).collect();
    rates_from_points(&points, cutoff)
}

/// Same as [`rates`] on raw `(dofs, cost, eta)` triples.
pub fn rates_from_points(points: &[(f64, f64, f64)], cutoff: f64) -> Result<RateSummary> {
    if !(0.0..1.0).contains(&cutoff) {
        return Err(Error::InvalidParameter(format!("cutoff {cutoff} not in [0, 1)")));
    }
    let skip = (cutoff * points.len() as f64).floor() as usize;
    let used: Vec<_> = points[skip..].iter().filter(|p| p.0 > 0.0 && p.1 > 0.0 && p.2 > 0.0).collect();
    if used.len() < 2 {
        return Err(Error::InsufficientData(format!("{} usable levels, need 2", used.len())));
    }
    let slope = |xs: Vec<f64>, ys: Vec<f64>| -> Result<f64> {
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        if sxx == 0.0 {
            return Err(Error::InsufficientData("all abscissae coincide".into()));
        }
        Ok(sxy / sxx)
    };
    let log_eta: Vec<f64> = used.iter().map(|p| p.2.ln()).collect();
    Ok(RateSummary {
        slope_dofs: slope(used.iter().map(|p| p.0.ln()).collect(), log_eta.clone())?,
        slope_cost: slope(used.iter().map(|p| p.1.ln()).collect(), log_eta)?,
        levels_used: used.len(),
    })
}
