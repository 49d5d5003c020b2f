//! Simulate one desk-scale scenario and summarize what the sensor saw.
//!
//! cargo run --example simulate_scenario -- IV

use pmbm_slam::models::{generate_scenario, Preset};
use pmbm_slam::ScenarioConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let preset: Preset = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()
        .map_err(anyhow::Error::msg)?
        .unwrap_or(Preset::I);
    let cfg = ScenarioConfig::desk_preset(preset);
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (truth, batch) = generate_scenario(&cfg, &mut rng);

    println!("preset {preset:?}: {} steps, {} landmarks", cfg.steps, cfg.landmarks.len());
    let clutter = truth.origins.iter().filter(|o| o.is_none()).count();
    println!(
        "{} measurements ({} clutter), {} true cells, {} landmarks detected",
        batch.len(),
        clutter,
        truth.associations.num_cells(),
        truth.detected_landmarks().len()
    );
    for k in [1, cfg.steps / 2, cfg.steps] {
        let s = &truth.trajectory[k];
        println!(
            "step {k:>2}: position ({:7.2}, {:7.2}) m, heading {:6.3} rad, bias {:6.3} m, {} measurements",
            s.position.x, s.position.y, s.heading, s.clock_bias, batch.scans[k - 1].len()
        );
        if let Some(z) = batch.scans[k - 1].first() {
            println!("         first measurement: range {:.2} m, angles {:.3} {:.3} {:.3} {:.3} rad", z[0], z[1], z[2], z[3], z[4]);
        }
    }
    Ok(())
}
