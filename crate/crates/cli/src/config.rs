use std::path::{Path, PathBuf};

use afem_core::adaptive::{AdaptiveParams, Retention};
use afem_core::linearize::LinearizationMethod;
use afem_core::problems::{builtin_problem, Problem};
use anyhow::{bail, Context, Result};
use serde::Deserialize;

/// Flat JSON run description. Unknown keys are rejected.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: String,
    /// `kacanov`, `zarantonello:<delta>`, `newton` or `newton:<delta>`.
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_lambda_lin")]
    pub lambda_lin: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_alpha_min")]
    pub alpha_min: f64,
    #[serde(default = "default_j_max")]
    pub j_max: usize,
    #[serde(default)]
    pub tau: f64,
    #[serde(default)]
    pub eta_stop: Option<f64>,
    #[serde(default = "default_c_mark")]
    pub c_mark: f64,
    #[serde(default = "default_max_total_steps")]
    pub max_total_steps: usize,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub record_exact_error: bool,
    #[serde(default)]
    pub measure_contraction: bool,
    #[serde(default)]
    pub dump_mesh: bool,
    /// Fraction of leading mesh levels left out of the rate fits.
    #[serde(default = "default_rate_cutoff")]
    pub rate_cutoff: f64,
    /// Grid for `sweep`; must be absent for `run`.
    #[serde(default)]
    pub sweep_theta: Vec<f64>,
    #[serde(default)]
    pub sweep_lambda_lin: Vec<f64>,
}

fn default_method() -> String {
    "kacanov".into()
}
fn default_theta() -> f64 {
    0.5
}
fn default_lambda_lin() -> f64 {
    0.9
}
fn default_rho() -> f64 {
    0.5
}
fn default_alpha_min() -> f64 {
    100.0
}
fn default_j_max() -> usize {
    1
}
fn default_c_mark() -> f64 {
    1.0
}
fn default_max_total_steps() -> usize {
    1_000_000
}
fn default_output() -> PathBuf {
    PathBuf::from("afem-output")
}
fn default_rate_cutoff() -> f64 {
    0.25
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn problem(&self) -> Result<Problem> {
        Ok(builtin_problem(&self.problem)?)
    }

    /// Parameters for a run, checked against the problem.
    pub fn params(&self, problem: &Problem) -> Result<AdaptiveParams> {
        let method = match self.method.as_str() {
            "newton" => LinearizationMethod::newton_default(&problem.nonlinearity),
            other => other.parse::<LinearizationMethod>()?,
        };
        if !(0.0..1.0).contains(&self.rate_cutoff) {
            bail!("rate_cutoff = {} not in [0, 1)", self.rate_cutoff);
        }
        let params = AdaptiveParams {
            theta: self.theta,
            lambda_lin: self.lambda_lin,
            rho: self.rho,
            alpha_min_init: self.alpha_min,
            j_max_init: self.j_max,
            tau: self.tau,
            c_mark: self.c_mark,
            method,
            max_total_steps: self.max_total_steps,
            eta_stop: self.eta_stop,
            record_exact_error: self.record_exact_error,
            measure_contraction: self.measure_contraction,
            retention: Retention::None,
        };
        params.validate(problem)?;
        Ok(params)
    }

    pub fn has_sweep_grid(&self) -> bool {
        !self.sweep_theta.is_empty() || !self.sweep_lambda_lin.is_empty()
    }
}
