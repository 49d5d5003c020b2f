//! One full run, then a look at what the merge produced: the multi-Bernoulli
//! map, the reported landmarks and the undetected intensity.

use pmbm_slam::harness::{run_once, PresetScale, RunConfig};
use pmbm_slam::merge::{extract_map_estimate, registry_counts};
use pmbm_slam::models::Preset;

fn main() -> anyhow::Result<()> {
    let cfg = RunConfig {
        preset: Preset::II,
        scale: PresetScale::Desk,
        outer_iters: 60,
        gamma: 30,
        ..RunConfig::default()
    };
    let r = run_once(&cfg, 0)?;
    let m = &r.merged;
    println!("{} samples merged, {} landmark tracks registered", r.records_merged, m.registry.len());
    for (key, count) in registry_counts(&m.registry) {
        println!("  first measurement {key:>3}: kept in {count}/{} samples", cfg.gamma);
    }
    println!("merged map:");
    for c in &m.map.components {
        let u = &c.density.mean;
        let sd: Vec<f64> = c.density.cov.diagonal().iter().map(|v| v.sqrt()).collect();
        println!("  r {:.2}  u ({:7.2}, {:7.2}, {:5.2}) m  std {:.3?}", c.r, u[0], u[1], u[2], sd);
    }
    let reported = extract_map_estimate(&m.map, cfg.thresholds.r_report);
    println!("{} landmarks reported, {} in the truth", reported.len(), r.truth.landmarks.len());
    println!("expected undetected landmarks {:.2}", m.undetected.expected_count(40));
    println!("GOSPA {:.3} m", r.gospa.total);
    Ok(())
}
