//! Sampler-versus-enumeration check on the small association fixtures.

use super::HarnessError;
use crate::association::{exact_posterior, sample_histogram, total_variation, CellModel, Partition, SamplerParams};
use crate::fixtures::association_fixtures;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Kept sampler rounds per fixture.
    pub samples: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub tv_max: f64,
    pub sampler: SamplerParams,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            samples: 100_000,
            burn_in: 1_000,
            seed: 0,
            tv_max: 0.05,
            sampler: SamplerParams::exact(),
        }
    }
}

impl OracleConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text)?;
        if cfg.samples == 0 || !(cfg.tv_max > 0.0) {
            return Err(HarnessError::Config("samples must be positive and tv_max > 0".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleResult {
    pub fixture: String,
    pub measurements: usize,
    pub partitions: usize,
    /// Largest exact posterior probability.
    pub top_probability: f64,
    pub tv: f64,
    pub seconds: f64,
    pub pass: bool,
}

/// Runs the sampler on every fixture and compares its visit frequencies with
/// the enumerated posterior.
pub fn run_oracle_suite(cfg: &OracleConfig) -> Result<Vec<OracleResult>, HarnessError> {
    let fixtures = association_fixtures();
    fixtures
        .par_iter()
        .enumerate()
        .map(|(i, fx)| {
            let start = Instant::now();
            let mut model = CellModel::new(&fx.batch, &fx.traj, &fx.cfg);
            let post = exact_posterior(&mut model)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let init = Partition::singletons(fx.batch.len());
            let counts = sample_histogram(&init, &mut model, &cfg.sampler, cfg.burn_in, cfg.samples, &mut rng);
            let tv = total_variation(&post, &counts);
            Ok(OracleResult {
                fixture: fx.name.to_string(),
                measurements: fx.batch.len(),
                partitions: post.len(),
                top_probability: post.iter().map(|p| p.1).fold(0.0, f64::max),
                tv,
                seconds: start.elapsed().as_secs_f64(),
                pass: tv <= cfg.tv_max,
            })
        })
        .collect()
}
