//! Total-variation distance between each sampler's visit frequencies and the
//! enumerated posterior as the chain grows. Split/merge alone moves whole
//! groups of indices and mixes far more slowly on a posterior this spread.

use pmbm_slam::association::{exact_posterior, sample_histogram, total_variation, CellModel, SamplerParams};
use pmbm_slam::fixtures::association_fixtures;
use pmbm_slam::{Partition, SamplerMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let fx = &association_fixtures()[2];
    let mut model = CellModel::new(&fx.batch, &fx.traj, &fx.cfg);
    let post = exact_posterior(&mut model)?;
    println!("{}: {} partitions", fx.name, post.len());
    println!("{:>8} {:>10} {:>10} {:>10}", "samples", "combined", "gibbs", "mh");
    for n in [1_000, 10_000, 100_000] {
        let row: Vec<f64> = [SamplerMode::Combined, SamplerMode::GibbsOnly, SamplerMode::MhOnly]
            .into_iter()
            .map(|mode| {
                let params = SamplerParams { mode, ..SamplerParams::exact() };
                let mut rng = ChaCha8Rng::seed_from_u64(3);
                let init = Partition::singletons(fx.batch.len());
                let counts = sample_histogram(&init, &mut model, &params, 500, n, &mut rng);
                total_variation(&post, &counts)
            })
            .collect();
        println!("{n:>8} {:>10.4} {:>10.4} {:>10.4}", row[0], row[1], row[2]);
    }
    Ok(())
}
