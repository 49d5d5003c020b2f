//! Bistatic radio models and synthetic scenarios.
//!
//! The sensor (UE) state is `[x, y, z, heading, clock_bias]`; landmarks are
//! 3-D scattering points; every measurement is the 5-vector
//! `[bistatic range, AOD azimuth, AOD elevation, AOA azimuth, AOA elevation]`
//! with the range in meters and the angles in radians.

mod geometry;
mod scenario;

pub use geometry::{
    detection_prob, inverse_measurement, los_jacobian, los_mean, measurement_jacobians,
    measurement_mean, motion_jacobian, motion_mean, motion_sample, back_project, wrap_angle,
};
pub use scenario::{generate_scenario, GroundTruth, Preset};

use crate::rfs::{AxisBox, FovDetection, UniformPoissonIntensity};
use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Sensor state dimension.
pub const SENSOR_DIM: usize = 5;
/// Landmark state dimension.
pub const LANDMARK_DIM: usize = 3;
/// Measurement dimension.
pub const MEAS_DIM: usize = 5;

pub type Vector5 = SVector<f64, 5>;
pub type Matrix5 = SMatrix<f64, 5, 5>;
pub type Matrix5x3 = SMatrix<f64, 5, 3>;

/// Indices of angular measurement components that wrap (azimuths).
pub const MEAS_ANGLE_COMPONENTS: [usize; 4] = [1, 2, 3, 4];
/// Index of the heading inside a flattened sensor state.
pub const HEADING: usize = 3;
/// Index of the clock bias inside a flattened sensor state.
pub const CLOCK_BIAS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("landmark coincides with the {0} position; angles are undefined")]
    Coincident(&'static str),
    #[error("measurement has no positive-range solution (range residual {residual:.3} m)")]
    Infeasible { residual: f64 },
    #[error("invalid scenario configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorState {
    pub position: Vector3<f64>,
    /// Radians in (-pi, pi].
    pub heading: f64,
    /// Meters.
    pub clock_bias: f64,
}

impl SensorState {
    pub fn new(position: Vector3<f64>, heading: f64, clock_bias: f64) -> Self {
        Self {
            position,
            heading: wrap_angle(heading),
            clock_bias,
        }
    }

    pub fn to_vector(&self) -> Vector5 {
        Vector5::new(
            self.position.x,
            self.position.y,
            self.position.z,
            self.heading,
            self.clock_bias,
        )
    }

    /// Heading is wrapped on the way in.
    pub fn from_slice(v: &[f64]) -> Self {
        Self::new(Vector3::new(v[0], v[1], v[2]), v[3], v[4])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub position: [f64; 3],
}

impl Landmark {
    pub fn pos(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }
}

/// `(k, alpha)`, both one-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MeasurementIndex {
    pub k: usize,
    pub alpha: usize,
}

impl std::fmt::Display for MeasurementIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.k, self.alpha)
    }
}

/// All measurements of a batch, scan by scan.
///
/// Measurements are also addressed by a flat id in lexicographic `(k, alpha)`
/// order; the association module works exclusively with flat ids.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementBatch {
    /// `scans[k-1]` holds the measurements of step `k`.
    pub scans: Vec<Vec<Vector5>>,
    /// Line-of-sight measurement of the known base station per step, when present.
    pub los: Vec<Option<Vector5>>,
    offsets: Vec<usize>,
}

impl MeasurementBatch {
    pub fn new(scans: Vec<Vec<Vector5>>, los: Vec<Option<Vector5>>) -> Self {
        assert_eq!(scans.len(), los.len(), "one line-of-sight slot per scan");
        let mut offsets = Vec::with_capacity(scans.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for s in &scans {
            acc += s.len();
            offsets.push(acc);
        }
        Self {
            scans,
            los,
            offsets,
        }
    }

    /// Batch without any line-of-sight measurements.
    pub fn from_scans(scans: Vec<Vec<Vector5>>) -> Self {
        let n = scans.len();
        Self::new(scans, vec![None; n])
    }

    /// Number of steps K.
    pub fn steps(&self) -> usize {
        self.scans.len()
    }

    /// Total number of (non line-of-sight) measurements.
    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index_set(&self) -> Vec<MeasurementIndex> {
        (0..self.len()).map(|i| self.index_of(i)).collect()
    }

    pub fn index_of(&self, flat: usize) -> MeasurementIndex {
        let k = self.offsets.partition_point(|&o| o <= flat);
        MeasurementIndex {
            k,
            alpha: flat - self.offsets[k - 1] + 1,
        }
    }

    pub fn flat_of(&self, idx: MeasurementIndex) -> Option<usize> {
        if idx.k == 0 || idx.k > self.steps() || idx.alpha == 0 {
            return None;
        }
        let flat = self.offsets[idx.k - 1] + idx.alpha - 1;
        (flat < self.offsets[idx.k]).then_some(flat)
    }

    /// One-based time step of a flat id.
    pub fn time_of(&self, flat: usize) -> usize {
        self.offsets.partition_point(|&o| o <= flat)
    }

    pub fn z(&self, flat: usize) -> &Vector5 {
        let k = self.time_of(flat);
        &self.scans[k - 1][flat - self.offsets[k - 1]]
    }

    pub fn get(&self, idx: MeasurementIndex) -> Option<&Vector5> {
        self.scans.get(idx.k.checked_sub(1)?)?.get(idx.alpha.checked_sub(1)?)
    }

    /// Time step of every flat id.
    pub fn times(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.time_of(i)).collect()
    }
}

fn diag5(d: [f64; 5]) -> [[f64; 5]; 5] {
    let mut m = [[0.0; 5]; 5];
    for i in 0..5 {
        m[i][i] = d[i];
    }
    m
}

fn diag3(d: [f64; 3]) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        m[i][i] = d[i];
    }
    m
}

/// Everything needed to simulate and to evaluate model likelihoods.
///
/// Matrices are given row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Base station position (m).
    pub bs_position: [f64; 3],
    /// Ground-truth scattering points.
    pub landmarks: Vec<Landmark>,
    /// Number of steps K.
    pub steps: usize,
    pub p_d: f64,
    /// Detection radius around the UE (m).
    pub fov_radius: f64,
    /// Expected clutter measurements per step.
    pub clutter_rate: f64,
    /// Measurement noise covariance R.
    pub meas_cov: [[f64; 5]; 5],
    /// Process noise covariance Q on `[x, y, z, heading, bias]`.
    pub process_cov: [[f64; 5]; 5],
    /// Distance per step (m).
    pub speed: f64,
    /// Heading change per step (rad).
    pub turn_rate: f64,
    /// Support of the undetected-landmark intensity.
    pub env_box: AxisBox,
    /// Undetected landmarks per cubic meter.
    pub lambda_rate: f64,
    pub s0_mean: [f64; 5],
    pub s0_cov: [[f64; 5]; 5],
    /// Covariance of the Gaussian landmark birth (m^2).
    pub birth_cov: [[f64; 3]; 3],
    /// Whether the known base station produces a line-of-sight measurement every step.
    #[serde(default = "default_true")]
    pub line_of_sight: bool,
}

fn default_true() -> bool {
    true
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if !(self.p_d > 0.0 && self.p_d <= 1.0) {
            return bad("p_d must lie in (0, 1]");
        }
        if !(self.clutter_rate >= 0.0) {
            return bad("clutter_rate must be non-negative");
        }
        if !(self.fov_radius > 0.0) {
            return bad("fov_radius must be positive");
        }
        if !(self.lambda_rate >= 0.0) {
            return bad("lambda_rate must be non-negative");
        }
        if self.steps == 0 {
            return bad("steps must be at least 1");
        }
        if self.env_box.volume() <= 0.0 {
            return bad("env_box must have positive volume");
        }
        for (name, m) in [
            ("meas_cov", self.meas_cov_dyn()),
            ("process_cov", self.process_cov_dyn()),
            ("s0_cov", self.s0_cov_dyn()),
            ("birth_cov", self.birth_cov_dyn()),
        ] {
            let g = crate::rfs::GaussianDensity {
                mean: DVector::zeros(m.nrows()),
                cov: m,
            };
            if let Err(e) = g.validate() {
                return Err(ModelError::InvalidConfig(format!("{name}: {e}")));
            }
        }
        Ok(())
    }

    pub fn meas_cov(&self) -> Matrix5 {
        Matrix5::from_fn(|i, j| self.meas_cov[i][j])
    }

    pub fn process_cov(&self) -> Matrix5 {
        Matrix5::from_fn(|i, j| self.process_cov[i][j])
    }

    pub fn s0_cov(&self) -> Matrix5 {
        Matrix5::from_fn(|i, j| self.s0_cov[i][j])
    }

    pub fn birth_cov(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.birth_cov[i][j])
    }

    pub fn meas_cov_dyn(&self) -> DMatrix<f64> {
        DMatrix::from_fn(5, 5, |i, j| self.meas_cov[i][j])
    }

    pub fn process_cov_dyn(&self) -> DMatrix<f64> {
        DMatrix::from_fn(5, 5, |i, j| self.process_cov[i][j])
    }

    pub fn s0_cov_dyn(&self) -> DMatrix<f64> {
        DMatrix::from_fn(5, 5, |i, j| self.s0_cov[i][j])
    }

    pub fn birth_cov_dyn(&self) -> DMatrix<f64> {
        DMatrix::from_fn(3, 3, |i, j| self.birth_cov[i][j])
    }

    pub fn s0(&self) -> SensorState {
        SensorState::from_slice(&self.s0_mean)
    }

    pub fn bs(&self) -> Vector3<f64> {
        Vector3::from(self.bs_position)
    }

    pub fn detection(&self) -> FovDetection {
        FovDetection {
            p_d: self.p_d,
            fov_radius: self.fov_radius,
        }
    }

    pub fn birth_intensity(&self) -> UniformPoissonIntensity {
        UniformPoissonIntensity {
            rate_density: self.lambda_rate,
            region: self.env_box,
        }
    }

    /// Volume of the measurement-space clutter box: a `2 * fov_radius` range
    /// window times the full azimuth / elevation spans at both ends.
    pub fn clutter_volume(&self) -> f64 {
        2.0 * self.fov_radius * (2.0 * PI * PI).powi(2)
    }

    /// Constant clutter intensity `c = clutter_rate / clutter_volume`.
    pub fn clutter_intensity(&self) -> f64 {
        self.clutter_rate / self.clutter_volume()
    }

    pub fn set_meas_cov_diag(&mut self, d: [f64; 5]) {
        self.meas_cov = diag5(d);
    }

    pub fn set_process_cov_diag(&mut self, d: [f64; 5]) {
        self.process_cov = diag5(d);
    }

    pub fn set_birth_std(&mut self, std: f64) {
        self.birth_cov = diag3([std * std; 3]);
    }

    /// Places the UE on a counterclockwise circular orbit of `radius` around
    /// the base station's ground point, completing one loop in `steps_per_loop`.
    pub fn set_orbit(&mut self, radius: f64, steps_per_loop: f64) {
        let turn = 2.0 * PI / steps_per_loop;
        self.turn_rate = turn;
        self.speed = 2.0 * radius * (turn / 2.0).sin();
        self.s0_mean[0] = self.bs_position[0] + radius;
        self.s0_mean[1] = self.bs_position[1];
        self.s0_mean[2] = 0.0;
        self.s0_mean[3] = wrap_angle(PI / 2.0 - turn / 2.0);
    }

    /// Full-size preset: 20 scattering points, K = 40.
    pub fn preset(p: Preset) -> Self {
        scenario::preset(p)
    }

    /// Reduced preset: 8 scattering points, K = 20.
    pub fn desk_preset(p: Preset) -> Self {
        scenario::desk_preset(p)
    }
}
