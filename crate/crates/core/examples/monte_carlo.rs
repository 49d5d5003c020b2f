//! Monte-Carlo runs from a JSON config, written to disk with plots.
//!
//! cargo run --example monte_carlo -- examples/configs/desk_iv.json out/desk_iv

use pmbm_slam::harness::{plot_dir, run_monte_carlo, write_outputs};
use pmbm_slam::RunConfig;
use std::path::PathBuf;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = args.next().unwrap_or_else(|| "examples/configs/desk_iv.json".into());
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out/desk_iv".into()));
    let cfg = RunConfig::load(config.as_ref())?;
    let mc = run_monte_carlo(&cfg);
    write_outputs(&out, &mc)?;
    let files = plot_dir(&out)?;
    let a = &mc.aggregate;
    println!("{} runs ok, {} failed", a.successes, a.failures);
    println!("position RMSE {:.3} m, heading {:.4} rad, bias {:.3} m", a.rmse_position, a.rmse_heading, a.rmse_bias);
    println!("per step position RMSE:");
    for (k, e) in a.rmse_per_step.iter().enumerate().step_by(4) {
        println!("  step {k:>2}: {:.3} m", e[0]);
    }
    println!("wrote runs.csv, merged_map.json, trajectory.csv and {} plot files to {}", files.len(), out.display());
    Ok(())
}
