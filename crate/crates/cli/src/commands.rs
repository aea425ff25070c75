use std::collections::HashMap;
use std::fs;
use std::path::Path;

use afem_core::adaptive::{rates, run, RateSummary, RunHistory, Termination};
use afem_core::algsolver::estimate_contraction;
use afem_core::verify::{require_all, run_suite};
use afem_core::Error;
use anyhow::{bail, Context, Result};
use serde::Serialize;

use crate::config::RunConfig;

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub problem: String,
    pub method: String,
    pub termination: Termination,
    pub final_eta: Option<f64>,
    pub final_dofs: Option<usize>,
    pub final_exact_error: Option<f64>,
    pub levels: usize,
    pub total_steps: usize,
    pub cum_cost: u64,
    pub k_final_max: usize,
    pub k_final_mean: f64,
    pub j_final_max: usize,
    pub j_final_modal: usize,
    pub j_max: usize,
    pub alpha_min: f64,
    /// Largest measured algebraic contraction factor.
    pub q_alg: Option<f64>,
    pub rates: Option<RateSummary>,
    pub rates_note: Option<String>,
    /// Informational; excluded from determinism checks.
    pub wall_time_seconds: f64,
}

pub fn summarize(config: &RunConfig, method: String, h: &RunHistory) -> RunSummary {
    let last_level = h.levels.last();
    let last_step = h.steps.last();
    let ks: Vec<usize> = h.levels.iter().map(|l| l.k_final).collect();
    let mut j_counts: HashMap<usize, usize> = HashMap::new();
    for l in &h.linearizations {
        *j_counts.entry(l.j_final).or_default() += 1;
    }
    let (rates, rates_note) = match rates(h, config.rate_cutoff) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    RunSummary {
        problem: config.problem.clone(),
        method,
        termination: h.termination,
        final_eta: last_level.map(|l| l.eta).or(last_step.map(|s| s.eta)),
        final_dofs: last_level.map(|l| l.dofs).or(last_step.map(|s| s.dofs)),
        final_exact_error: last_step.and_then(|s| s.exact_error),
        levels: h.levels.len(),
        total_steps: h.steps.len(),
        cum_cost: last_step.map_or(0, |s| s.cum_cost),
        k_final_max: ks.iter().copied().max().unwrap_or(0),
        k_final_mean: if ks.is_empty() { 0.0 } else { ks.iter().sum::<usize>() as f64 / ks.len() as f64 },
        j_final_max: h.linearizations.iter().map(|l| l.j_final).max().unwrap_or(0),
        j_final_modal: j_counts
            .into_iter()
            .max_by_key(|&(j, c)| (c, std::cmp::Reverse(j)))
            .map_or(0, |(j, _)| j),
        j_max: last_step.map_or(0, |s| s.j_max),
        alpha_min: last_step.map_or(f64::NAN, |s| s.alpha_min),
        q_alg: h.solver_stats.as_ref().and_then(|s| estimate_contraction(s).ok()),
        rates,
        rates_note,
        wall_time_seconds: h.wall_time_seconds,
    }
}

fn write_artifacts(config: &RunConfig, summary: &RunSummary, h: &RunHistory) -> Result<()> {
    let out = &config.output;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("history.csv"), h.to_csv())?;
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(summary)? + "\n")?;
    if config.dump_mesh {
        if let Some(mesh) = &h.final_mesh {
            fs::write(out.join("mesh.txt"), mesh.to_text())?;
        }
    }
    Ok(())
}

pub fn cmd_run(path: &Path) -> Result<RunSummary> {
    let config = RunConfig::load(path)?;
    if config.has_sweep_grid() {
        bail!("sweep_theta / sweep_lambda_lin are only valid for `sweep`");
    }
    let problem = config.problem()?;
    let params = config.params(&problem)?;
    let (history, failure) = match run(&problem, &params) {
        Ok(h) => (h, None),
        Err(Error::StepCap { cap, history }) => (*history, Some(format!("step cap {cap} reached"))),
        Err(e) => return Err(e.into()),
    };
    let summary = summarize(&config, params.method.to_string(), &history);
    write_artifacts(&config, &summary, &history)?;
    if let Some(msg) = failure {
        bail!("{msg}; partial history written to {}", config.output.display());
    }
    Ok(summary)
}

#[derive(Debug, Serialize)]
pub struct SweepCell {
    pub theta: f64,
    pub lambda_lin: f64,
    /// `eta_final * cum_cost_final^(1/2)`; `None` if the run failed.
    pub metric: Option<f64>,
    pub final_eta: Option<f64>,
    pub final_dofs: Option<usize>,
    pub total_steps: usize,
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct SweepSummary {
    pub problem: String,
    pub method: String,
    pub cells: Vec<SweepCell>,
    /// For each theta, the lambda_lin with the smallest metric.
    pub row_minima: Vec<(f64, f64)>,
    /// For each lambda_lin, the theta with the smallest metric.
    pub column_minima: Vec<(f64, f64)>,
    /// `(theta, lambda_lin, metric)` of the best cell.
    pub best: Option<(f64, f64, f64)>,
}

fn argmin<'a>(cells: impl Iterator<Item = &'a SweepCell>) -> Option<&'a SweepCell> {
    cells.filter(|c| c.metric.is_some()).min_by(|a, b| a.metric.unwrap().total_cmp(&b.metric.unwrap()))
}

pub fn cmd_sweep(path: &Path) -> Result<SweepSummary> {
    let config = RunConfig::load(path)?;
    if config.sweep_theta.is_empty() || config.sweep_lambda_lin.is_empty() {
        bail!("sweep needs nonempty sweep_theta and sweep_lambda_lin");
    }
    let problem = config.problem()?;
    let base = config.params(&problem)?;
    let mut cells = Vec::new();
    for &theta in &config.sweep_theta {
        for &lambda_lin in &config.sweep_lambda_lin {
            let params = afem_core::adaptive::AdaptiveParams { theta, lambda_lin, ..base.clone() };
            let outcome = params.validate(&problem).and_then(|_| run(&problem, &params));
            let cell = match outcome {
                Ok(h) => {
                    let last = h.levels.last();
                    let cost = h.steps.last().map_or(0, |s| s.cum_cost) as f64;
                    SweepCell {
                        theta,
                        lambda_lin,
                        metric: last.map(|l| l.eta * cost.sqrt()),
                        final_eta: last.map(|l| l.eta),
                        final_dofs: last.map(|l| l.dofs),
                        total_steps: h.steps.len(),
                        error: None,
                    }
                }
                Err(e) => {
                    let steps = match &e {
                        Error::StepCap { history, .. } => history.steps.len(),
                        _ => 0,
                    };
                    SweepCell { theta, lambda_lin, metric: None, final_eta: None, final_dofs: None, total_steps: steps, error: Some(e.to_string()) }
                }
            };
            eprintln!(
                "theta {theta} lambda_lin {lambda_lin}: {}",
                cell.metric.map_or_else(|| cell.error.clone().unwrap_or_default(), |m| format!("{m:.4e}"))
            );
            cells.push(cell);
        }
    }
    let row_minima = config
        .sweep_theta
        .iter()
        .filter_map(|&t| argmin(cells.iter().filter(|c| c.theta == t)).map(|c| (t, c.lambda_lin)))
        .collect();
    let column_minima = config
        .sweep_lambda_lin
        .iter()
        .filter_map(|&l| argmin(cells.iter().filter(|c| c.lambda_lin == l)).map(|c| (l, c.theta)))
        .collect();
    let best = argmin(cells.iter()).map(|c| (c.theta, c.lambda_lin, c.metric.unwrap()));

    let mut csv = String::from("theta");
    for l in &config.sweep_lambda_lin {
        csv.push_str(&format!(",{l:?}"));
    }
    csv.push('\n');
    for (row, &t) in config.sweep_theta.iter().enumerate() {
        csv.push_str(&format!("{t:?}"));
        for col in 0..config.sweep_lambda_lin.len() {
            let cell = &cells[row * config.sweep_lambda_lin.len() + col];
            csv.push_str(&cell.metric.map_or_else(|| ",".to_string(), |m| format!(",{m:?}")));
        }
        csv.push('\n');
    }
    let summary = SweepSummary {
        problem: config.problem.clone(),
        method: base.method.to_string(),
        cells,
        row_minima,
        column_minima,
        best,
    };
    fs::create_dir_all(&config.output).with_context(|| format!("creating {}", config.output.display()))?;
    fs::write(config.output.join("sweep.csv"), csv)?;
    fs::write(config.output.join("sweep.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(summary)
}

pub fn cmd_verify(seed: u64) -> Result<()> {
    let outcomes = run_suite(seed);
    for o in &outcomes {
        println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    require_all(&outcomes)?;
    Ok(())
}
