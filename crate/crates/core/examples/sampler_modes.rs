//! Gibbs-only, split/merge-only and combined sampling on the same runs.
//!
//! cargo run --example sampler_modes -- IV 5

use pmbm_slam::harness::{run_monte_carlo, PresetScale, RunConfig};
use pmbm_slam::models::Preset;
use pmbm_slam::SamplerMode;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let preset: Preset = args.next().map(|s| s.parse()).transpose().map_err(anyhow::Error::msg)?.unwrap_or(Preset::IV);
    let runs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(5);
    println!("{:<10} {:>8} {:>10} {:>10}", "mode", "nmi", "gospa_m", "rmse_m");
    for mode in [SamplerMode::Combined, SamplerMode::GibbsOnly, SamplerMode::MhOnly] {
        let mut cfg = RunConfig {
            preset,
            scale: PresetScale::Desk,
            runs,
            seed: 5,
            ..RunConfig::default()
        };
        cfg.sampler.mode = mode;
        let a = run_monte_carlo(&cfg).aggregate;
        println!(
            "{:<10} {:>8.4} {:>10.3} {:>10.3}",
            format!("{mode:?}"), a.mean_nmi_tail, a.mean_gospa, a.rmse_position
        );
    }
    Ok(())
}
