//! Runs a built-in benchmark with the default parameters and prints one line per level.
//!
//! `cargo run --release --example benchmark -- lshape`

use afem_core::adaptive::{rates, run, AdaptiveParams};
use afem_core::problems::builtin_problem;

fn main() -> afem_core::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "lshape".into());
    let problem = builtin_problem(&name)?;
    let params = AdaptiveParams { eta_stop: Some(1e-2), ..Default::default() };
    let history = run(&problem, &params)?;
    for l in &history.levels {
        println!("level {:3}  dofs {:7}  k {:2}  eta {:.4e}", l.ell, l.dofs, l.k_final, l.eta);
    }
    let r = rates(&history, 0.25)?;
    println!(
        "steps {}  slope(dofs) {:.3}  slope(cost) {:.3}  time {:.2}s",
        history.steps.len(),
        r.slope_dofs,
        r.slope_cost,
        history.wall_time_seconds
    );
    Ok(())
}
