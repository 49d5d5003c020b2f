use super::geometry::{noise_factor, sample_gaussian5};
use super::{
    detection_prob, los_mean, measurement_mean, motion_sample, wrap_angle, Landmark,
    MeasurementBatch, ScenarioConfig, SensorState, Vector5,
};
use crate::association::Partition;
use crate::rfs::AxisBox;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// The four clutter / process-noise combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    /// Low clutter, low process noise.
    I,
    /// High clutter, low process noise.
    II,
    /// Low clutter, high process noise.
    III,
    /// High clutter, high process noise.
    IV,
}

impl Preset {
    pub fn high_clutter(self) -> bool {
        matches!(self, Preset::II | Preset::IV)
    }

    pub fn high_process_noise(self) -> bool {
        matches!(self, Preset::III | Preset::IV)
    }
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "I" => Ok(Preset::I),
            "II" => Ok(Preset::II),
            "III" => Ok(Preset::III),
            "IV" => Ok(Preset::IV),
            other => Err(format!("unknown preset {other:?}; expected I, II, III or IV")),
        }
    }
}

const Q_LOW: [f64; 5] = [0.04, 0.04, 0.0, 1e-6, 0.04];
const ORBIT_RADIUS: f64 = 40.0;

/// Cluster centers: eight bearings, alternating outside / inside the orbit.
fn cluster_centers() -> Vec<[f64; 3]> {
    (0..8)
        .map(|j| {
            let bearing = (j as f64 * 45.0 + 22.5).to_radians();
            let radius = if j % 2 == 0 { 62.0 } else { 22.0 };
            let height = 2.0 + (j as f64 * 10.0 / 7.0);
            [radius * bearing.cos(), radius * bearing.sin(), height]
        })
        .collect()
}

fn clustered_landmarks() -> Vec<Landmark> {
    const OFFSETS: [[f64; 3]; 3] = [[0.0, 0.0, 0.0], [2.5, -2.0, 1.5], [-2.0, 2.5, -1.0]];
    let sizes = [3, 2, 3, 2, 3, 2, 3, 2];
    cluster_centers()
        .into_iter()
        .zip(sizes)
        .flat_map(|(c, n)| {
            OFFSETS[..n].iter().map(move |o| Landmark {
                position: [c[0] + o[0], c[1] + o[1], c[2] + o[2]],
            })
        })
        .collect()
}

fn base_config(p: Preset) -> ScenarioConfig {
    let mut q = Q_LOW;
    if p.high_process_noise() {
        q.iter_mut().for_each(|v| *v *= 8.0);
    }
    let mut cfg = ScenarioConfig {
        bs_position: [0.0, 0.0, 40.0],
        landmarks: clustered_landmarks(),
        steps: 40,
        p_d: 0.9,
        fov_radius: 50.0,
        clutter_rate: if p.high_clutter() { 5.0 } else { 1.0 },
        meas_cov: [[0.0; 5]; 5],
        process_cov: [[0.0; 5]; 5],
        speed: 0.0,
        turn_rate: 0.0,
        env_box: AxisBox {
            min: [-100.0, -100.0, -10.0],
            max: [100.0, 100.0, 50.0],
        },
        lambda_rate: 1.5e-5,
        s0_mean: [0.0; 5],
        s0_cov: [[0.0; 5]; 5],
        birth_cov: [[0.0; 3]; 3],
        line_of_sight: true,
    };
    cfg.set_meas_cov_diag([0.01, 1e-4, 1e-4, 1e-4, 1e-4]);
    cfg.set_process_cov_diag(q);
    cfg.s0_cov = super::diag5([0.01, 0.01, 1e-4, 1e-6, 0.01]);
    cfg.set_birth_std(100.0);
    cfg
}

/// Full-size configuration: 20 scattering points in 8 clusters, K = 40, one
/// loop of radius 40 m around the base station.
pub(super) fn preset(p: Preset) -> ScenarioConfig {
    let mut cfg = base_config(p);
    cfg.set_orbit(ORBIT_RADIUS, 40.0);
    cfg
}

/// Reduced configuration for quick experiments: one scattering point per
/// cluster and K = 20 covering the same loop.
pub(super) fn desk_preset(p: Preset) -> ScenarioConfig {
    let mut cfg = base_config(p);
    cfg.landmarks = cluster_centers()
        .into_iter()
        .map(|position| Landmark { position })
        .collect();
    cfg.steps = 20;
    cfg.set_orbit(ORBIT_RADIUS, 20.0);
    cfg
}

/// Simulation record used to score an estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// `s_0 .. s_K`.
    pub trajectory: Vec<SensorState>,
    pub landmarks: Vec<Landmark>,
    /// Source landmark per flat measurement id, `None` for clutter.
    pub origins: Vec<Option<usize>>,
    /// True partition; every clutter measurement is its own cell.
    pub associations: Partition,
}

impl GroundTruth {
    /// Landmarks that produced at least one measurement.
    pub fn detected_landmarks(&self) -> Vec<Landmark> {
        let mut seen = vec![false; self.landmarks.len()];
        for o in self.origins.iter().flatten() {
            seen[*o] = true;
        }
        self.landmarks
            .iter()
            .zip(seen)
            .filter_map(|(l, s)| s.then_some(*l))
            .collect()
    }
}

fn noisy(mean: Vector5, factor: &super::Matrix5, rng: &mut (impl Rng + ?Sized)) -> Vector5 {
    let mut z = mean + sample_gaussian5(factor, rng);
    for i in super::MEAS_ANGLE_COMPONENTS {
        z[i] = wrap_angle(z[i]);
    }
    z
}

fn clutter_measurement(
    s: &SensorState,
    cfg: &ScenarioConfig,
    rng: &mut (impl Rng + ?Sized),
) -> Vector5 {
    let direct = (cfg.bs() - s.position).norm();
    let mut az = || wrap_angle(rng.random_range(-PI..PI));
    let a1 = az();
    let a2 = az();
    let mut el = || rng.random_range(-PI / 2.0..=PI / 2.0);
    let e1 = el();
    let e2 = el();
    let range = direct + s.clock_bias + rng.random_range(0.0..2.0 * cfg.fov_radius);
    Vector5::new(range, a1, e1, a2, e2)
}

/// Simulates a trajectory from the prior mean, landmark detections and clutter.
///
/// Scans are shuffled so that within-scan order carries no origin information.
pub fn generate_scenario<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> (GroundTruth, MeasurementBatch) {
    let r_factor = noise_factor(&cfg.meas_cov());
    let clutter = Poisson::new(cfg.clutter_rate.max(f64::MIN_POSITIVE)).ok();
    let mut traj = Vec::with_capacity(cfg.steps + 1);
    traj.push(cfg.s0());
    let mut scans = Vec::with_capacity(cfg.steps);
    let mut los = Vec::with_capacity(cfg.steps);
    let mut origins = Vec::new();

    for k in 1..=cfg.steps {
        let s = motion_sample(&traj[k - 1], cfg, rng);
        traj.push(s);
        let mut scan: Vec<(Vector5, Option<usize>)> = Vec::new();
        for (i, lm) in cfg.landmarks.iter().enumerate() {
            let x = lm.pos();
            let pd = detection_prob(&x, &s, cfg);
            if pd > 0.0 && rng.random::<f64>() < pd {
                if let Ok(mean) = measurement_mean(&x, &s, cfg) {
                    scan.push((noisy(mean, &r_factor, rng), Some(i)));
                }
            }
        }
        let n_clutter = match (&clutter, cfg.clutter_rate > 0.0) {
            (Some(p), true) => p.sample(rng) as usize,
            _ => 0,
        };
        for _ in 0..n_clutter {
            scan.push((clutter_measurement(&s, cfg, rng), None));
        }
        scan.shuffle(rng);
        origins.extend(scan.iter().map(|(_, o)| *o));
        scans.push(scan.into_iter().map(|(z, _)| z).collect());
        los.push(if cfg.line_of_sight {
            los_mean(&s, cfg).ok().map(|m| noisy(m, &r_factor, rng))
        } else {
            None
        });
    }

    let batch = MeasurementBatch::new(scans, los);
    let associations = Partition::from_labels(&origins);
    (
        GroundTruth {
            trajectory: traj,
            landmarks: cfg.landmarks.clone(),
            origins,
            associations,
        },
        batch,
    )
}
