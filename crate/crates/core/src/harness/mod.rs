//! Run configuration, the outer sample/optimize loop and Monte-Carlo
//! orchestration.

mod io;
mod oracle;
mod plot;

pub use io::{
    read_runs_csv, write_merged_map, write_outputs, write_runs_csv, write_steps_csv,
    write_trajectory_csv, RunsRow,
};
pub use oracle::{run_oracle_suite, OracleConfig, OracleResult};
pub use plot::{plot_dir, svg_line_chart, Series};

use crate::association::{
    da_sample, sample_existence, CellModel, ExistenceVector, Partition, SamplerParams,
};
use crate::graph::{build_graph, dead_reckoning, optimize, OptimizerSettings};
use crate::merge::{extract_map_estimate, merge_samples, MergedPosterior, SampleRecord};
use crate::metrics::{gospa, nmi, GospaBreakdown, GospaParams, StateSelector};
use crate::models::{generate_scenario, GroundTruth, MeasurementBatch, Preset, ScenarioConfig, SensorState};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] crate::models::ModelError),
    #[error(transparent)]
    Partition(#[from] crate::association::PartitionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Size of the built-in scenario presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetScale {
    /// 20 scattering points, K = 40.
    #[default]
    Full,
    /// 8 scattering points, K = 20.
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// Components below this existence are pruned from the merged map.
    pub r_min: f64,
    /// Components closer than this (m) are merged.
    pub dist_max: f64,
    /// Existence needed to report a landmark.
    pub r_report: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            r_min: 0.1,
            dist_max: 1.0,
            r_report: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Named scenario; ignored when `scenario` is given.
    pub preset: Preset,
    pub scale: PresetScale,
    /// Explicit scenario overriding the preset.
    pub scenario: Option<ScenarioConfig>,
    /// Birth standard deviation (m) applied on top of the scenario.
    pub birth_std: Option<f64>,
    pub outer_iters: usize,
    /// Number of trailing iterations that enter the merge.
    pub gamma: usize,
    /// Sampling rounds per outer iteration.
    pub sweeps_per_da: usize,
    pub sampler: SamplerParams,
    /// Start every association chain from all singletons instead of the
    /// previous sample.
    pub da_restart: bool,
    pub seed: u64,
    pub runs: usize,
    pub thresholds: Thresholds,
    pub gospa: GospaParams,
    pub max_gn_iters: usize,
    pub output_dir: Option<PathBuf>,
    /// Dump the information pattern and cost trace of the last optimization.
    pub debug: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: Preset::I,
            scale: PresetScale::Full,
            scenario: None,
            birth_std: None,
            outer_iters: 150,
            gamma: 100,
            sweeps_per_da: 1,
            sampler: SamplerParams::default(),
            da_restart: false,
            seed: 0,
            runs: 1,
            thresholds: Thresholds::default(),
            gospa: GospaParams::default(),
            max_gn_iters: 50,
            output_dir: None,
            debug: false,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, HarnessError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The scenario this run simulates.
    pub fn scenario(&self) -> ScenarioConfig {
        let mut s = match (&self.scenario, self.scale) {
            (Some(s), _) => s.clone(),
            (None, PresetScale::Full) => ScenarioConfig::preset(self.preset),
            (None, PresetScale::Desk) => ScenarioConfig::desk_preset(self.preset),
        };
        if let Some(std) = self.birth_std {
            s.set_birth_std(std);
        }
        s
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.outer_iters == 0 {
            return bad("outer_iters must be at least 1");
        }
        if self.gamma == 0 || self.gamma > self.outer_iters {
            return bad("gamma must lie in 1..=outer_iters");
        }
        if self.runs == 0 {
            return bad("runs must be at least 1");
        }
        let t = &self.thresholds;
        if !(0.0..=1.0).contains(&t.r_min) || !(0.0..=1.0).contains(&t.r_report) {
            return bad("r_min and r_report must lie in [0, 1]");
        }
        if !(t.dist_max >= 0.0) {
            return bad("dist_max must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.sampler.psi_floor) {
            return bad("psi_floor must lie in [0, 1]");
        }
        if matches!(self.sampler.gate_distance, Some(g) if !(g > 0.0)) {
            return bad("gate_distance must be positive");
        }
        if matches!(self.birth_std, Some(s) if !(s > 0.0)) {
            return bad("birth_std must be positive");
        }
        if !(self.gospa.c > 0.0 && self.gospa.p >= 1.0 && self.gospa.alpha > 0.0 && self.gospa.alpha <= 2.0) {
            return bad("gospa needs c > 0, p >= 1 and 0 < alpha <= 2");
        }
        self.scenario().validate()?;
        Ok(())
    }

    fn optimizer(&self) -> OptimizerSettings {
        OptimizerSettings {
            max_iters: self.max_gn_iters,
            ..OptimizerSettings::default()
        }
    }
}

/// Per-iteration diagnostics of the outer loop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub nmi: f64,
    pub num_cells: usize,
    pub num_landmarks: usize,
    /// Final GraphSLAM cost, `NaN` when the optimization failed.
    pub cost: f64,
    /// GOSPA of the iteration's landmark estimates against the truth (m).
    pub gospa: f64,
    pub failed: bool,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub run: usize,
    pub seed: u64,
    pub nmi_final: f64,
    /// NMI averaged over the kept tail.
    pub nmi_tail: f64,
    pub rmse_position: f64,
    pub rmse_heading: f64,
    pub rmse_bias: f64,
    /// Squared errors per step (position m², heading rad², bias m²).
    pub step_sq_errors: Vec<[f64; 3]>,
    pub gospa: GospaBreakdown,
    pub iterations: Vec<IterationStats>,
    pub failures: usize,
    pub records_merged: usize,
    pub merged: MergedPosterior,
    pub truth: GroundTruth,
    pub final_partition: Partition,
    pub wall_clock_s: f64,
    pub config: RunConfig,
}

impl RunReport {
    /// Every scalar reported per run, with its unit.
    pub fn metrics(&self) -> Vec<(&'static str, &'static str, f64)> {
        vec![
            ("nmi_final", "1", self.nmi_final),
            ("nmi_tail", "1", self.nmi_tail),
            ("rmse_position", "m", self.rmse_position),
            ("rmse_heading", "rad", self.rmse_heading),
            ("rmse_bias", "m", self.rmse_bias),
            ("gospa", "m", self.gospa.total),
            ("gospa_localization", "m", self.gospa.localization),
            ("gospa_missed", "m", self.gospa.missed),
            ("gospa_false", "m", self.gospa.false_alarm),
            ("landmarks_reported", "count", self.reported().len() as f64),
            ("undetected_expected", "count", self.merged.undetected.expected_count(40)),
            ("failed_iterations", "count", self.failures as f64),
        ]
    }

    pub fn reported(&self) -> Vec<Vector3<f64>> {
        extract_map_estimate(&self.merged.map, self.config.thresholds.r_report)
    }
}

/// Independent generator for `stream` of run `run` (streams never overlap).
pub fn rng_for(seed: u64, run: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((run as u64) << 8 | stream);
    rng
}

const SCENARIO_STREAM: u64 = 0;
const SAMPLER_STREAM: u64 = 1;

fn truth_points(truth: &GroundTruth) -> Vec<Vector3<f64>> {
    truth.detected_landmarks().iter().map(|l| l.pos()).collect()
}

/// Runs the full pipeline on a fresh simulation for run index `run`.
pub fn run_once(cfg: &RunConfig, run: usize) -> Result<RunReport, HarnessError> {
    let sc = cfg.scenario();
    let mut rng = rng_for(cfg.seed, run, SCENARIO_STREAM);
    let (truth, batch) = generate_scenario(&sc, &mut rng);
    run_on(cfg, run, &sc, truth, &batch)
}

/// The outer loop on given data.
pub fn run_on(
    cfg: &RunConfig,
    run: usize,
    sc: &ScenarioConfig,
    truth: GroundTruth,
    batch: &MeasurementBatch,
) -> Result<RunReport, HarnessError> {
    cfg.validate()?;
    let start = Instant::now();
    let mut rng = rng_for(cfg.seed, run, SAMPLER_STREAM);
    let settings = cfg.optimizer();
    let truth_pts = truth_points(&truth);

    let mut traj: Vec<SensorState> = dead_reckoning(sc, batch.steps());
    let mut p = Partition::singletons(batch.len());
    let mut warm: BTreeMap<usize, Vector3<f64>> = BTreeMap::new();
    let mut records: Vec<SampleRecord> = Vec::new();
    let mut iterations = Vec::with_capacity(cfg.outer_iters);
    let mut failures = 0;
    let mut tail_nmi = Vec::new();
    let keep_from = cfg.outer_iters - cfg.gamma;

    for it in 0..cfg.outer_iters {
        let (psi, p_next) = {
            let mut model = CellModel::new(batch, &traj, sc);
            let init = if cfg.da_restart {
                Partition::singletons(batch.len())
            } else {
                p.clone()
            };
            let next = da_sample(&init, &mut model, &cfg.sampler, cfg.sweeps_per_da, &mut rng);
            let psi = sample_existence(&next, &mut model, cfg.sampler.psi_floor, &mut rng);
            (psi, next)
        };
        p = p_next;
        let score = nmi(&p, &truth.associations);
        if it >= keep_from {
            tail_nmi.push(score);
        }

        let outcome = build_graph(&p, &psi, &traj, batch, sc)
            .map_err(|e| e.to_string())
            .and_then(|prob| {
                let lms: Vec<Option<Vector3<f64>>> =
                    prob.first_indices.iter().map(|f| warm.get(f).copied()).collect();
                let q0 = prob.initial_state(&traj, &lms);
                optimize(&prob, &q0, &settings)
                    .map(|res| (prob, res))
                    .map_err(|e| e.to_string())
            });

        let mut stats = IterationStats {
            iteration: it + 1,
            nmi: score,
            num_cells: p.num_cells(),
            num_landmarks: 0,
            cost: f64::NAN,
            gospa: f64::NAN,
            failed: false,
        };
        match outcome {
            Ok((prob, res)) => {
                if cfg.debug && it + 1 == cfg.outer_iters {
                    if let Some(dir) = &cfg.output_dir {
                        res.write_debug(dir, &format!("run{run}"))
                            .map_err(|e| HarnessError::Config(e.to_string()))?;
                    }
                }
                traj = res.trajectory();
                warm = prob
                    .first_indices
                    .iter()
                    .enumerate()
                    .map(|(i, &f)| {
                        let m = res.landmark(i).mean;
                        (f, Vector3::new(m[0], m[1], m[2]))
                    })
                    .collect();
                let est: Vec<Vector3<f64>> = warm.values().copied().collect();
                stats.num_landmarks = prob.num_landmarks();
                stats.cost = res.final_cost;
                stats.gospa = gospa(&truth_pts, &est, cfg.gospa).total;
                if it >= keep_from {
                    records.push(SampleRecord::new(p.clone(), psi, &prob, &res));
                }
            }
            Err(_) => {
                failures += 1;
                stats.failed = true;
                if it >= keep_from {
                    if let Some(last) = records.last().cloned() {
                        records.push(last);
                    }
                }
            }
        }
        iterations.push(stats);
    }

    if records.is_empty() {
        // Every kept iteration failed: fall back to the prior chain with no map.
        let prob = build_graph(
            &p,
            &ExistenceVector {
                psi: vec![false; p.num_cells()],
                r: vec![0.0; p.num_cells()],
            },
            &traj,
            batch,
            sc,
        )
        .map_err(|e| HarnessError::Config(e.to_string()))?;
        let q0 = prob.initial_state(&traj, &[]);
        let res = optimize(&prob, &q0, &settings).map_err(|e| HarnessError::Config(e.to_string()))?;
        let psi = ExistenceVector {
            psi: vec![false; p.num_cells()],
            r: vec![0.0; p.num_cells()],
        };
        records.push(SampleRecord::new(p.clone(), psi, &prob, &res));
    }

    let t = cfg.thresholds;
    let merged = merge_samples(&records, sc, t.r_min, t.dist_max);
    let est_traj = merged.trajectory();
    let step_sq_errors: Vec<[f64; 3]> = truth
        .trajectory
        .iter()
        .zip(&est_traj)
        .map(|(a, b)| {
            [
                StateSelector::Position.squared_error(a, b),
                StateSelector::Heading.squared_error(a, b),
                StateSelector::ClockBias.squared_error(a, b),
            ]
        })
        .collect();
    let mean_sq = |i: usize| {
        (step_sq_errors.iter().map(|e| e[i]).sum::<f64>() / step_sq_errors.len() as f64).sqrt()
    };
    let reported = extract_map_estimate(&merged.map, t.r_report);
    let g = gospa(&truth_pts, &reported, cfg.gospa);

    Ok(RunReport {
        run,
        seed: cfg.seed,
        nmi_final: nmi(&p, &truth.associations),
        nmi_tail: tail_nmi.iter().sum::<f64>() / tail_nmi.len() as f64,
        rmse_position: mean_sq(0),
        rmse_heading: mean_sq(1),
        rmse_bias: mean_sq(2),
        step_sq_errors,
        gospa: g,
        iterations,
        failures,
        records_merged: records.len(),
        merged,
        truth,
        final_partition: p,
        wall_clock_s: start.elapsed().as_secs_f64(),
        config: cfg.clone(),
    })
}

#[derive(Debug)]
pub struct MonteCarloReport {
    /// One entry per run index, in order.
    pub runs: Vec<Result<RunReport, String>>,
    pub aggregate: Aggregate,
}

/// Means over the successful runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub successes: usize,
    pub failures: usize,
    pub mean_nmi_final: f64,
    pub mean_nmi_tail: f64,
    pub mean_gospa: f64,
    /// Root mean square over runs and steps.
    pub rmse_position: f64,
    pub rmse_heading: f64,
    pub rmse_bias: f64,
    /// Per-step RMSE over runs: `[position m, heading rad, bias m]`.
    pub rmse_per_step: Vec<[f64; 3]>,
    /// Per-iteration mean GOSPA over runs (m).
    pub gospa_per_iteration: Vec<f64>,
}

pub fn aggregate(reports: &[&RunReport], failures: usize) -> Aggregate {
    let n = reports.len();
    let nf = n.max(1) as f64;
    let mean = |f: &dyn Fn(&RunReport) -> f64| reports.iter().map(|r| f(r)).sum::<f64>() / nf;
    let steps = reports.first().map_or(0, |r| r.step_sq_errors.len());
    let mut per_step = vec![[0.0; 3]; steps];
    for r in reports {
        for (acc, e) in per_step.iter_mut().zip(&r.step_sq_errors) {
            for i in 0..3 {
                acc[i] += e[i];
            }
        }
    }
    let total = |i: usize| (per_step.iter().map(|s| s[i]).sum::<f64>() / (nf * steps.max(1) as f64)).sqrt();
    let (rp, rh, rb) = (total(0), total(1), total(2));
    for s in per_step.iter_mut() {
        for v in s.iter_mut() {
            *v = (*v / nf).sqrt();
        }
    }
    let iters = reports.first().map_or(0, |r| r.iterations.len());
    let gospa_per_iteration = (0..iters)
        .map(|i| {
            let vals: Vec<f64> = reports
                .iter()
                .map(|r| r.iterations[i].gospa)
                .filter(|g| g.is_finite())
                .collect();
            if vals.is_empty() {
                f64::NAN
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            }
        })
        .collect();
    Aggregate {
        successes: n,
        failures,
        mean_nmi_final: mean(&|r| r.nmi_final),
        mean_nmi_tail: mean(&|r| r.nmi_tail),
        mean_gospa: mean(&|r| r.gospa.total),
        rmse_position: rp,
        rmse_heading: rh,
        rmse_bias: rb,
        rmse_per_step: per_step,
        gospa_per_iteration,
    }
}

/// `cfg.runs` independent runs on the rayon pool. Results do not depend on
/// the number of worker threads.
pub fn run_monte_carlo(cfg: &RunConfig) -> MonteCarloReport {
    let runs: Vec<Result<RunReport, String>> = (0..cfg.runs)
        .into_par_iter()
        .map(|i| run_once(cfg, i).map_err(|e| e.to_string()))
        .collect();
    let ok: Vec<&RunReport> = runs.iter().filter_map(|r| r.as_ref().ok()).collect();
    let failures = runs.len() - ok.len();
    let aggregate = aggregate(&ok, failures);
    MonteCarloReport { runs, aggregate }
}
