//! Small deterministic problems with a known answer.
//!
//! The association fixtures are small enough to enumerate every partition,
//! and noisy enough that the posterior spreads over several of them.

use crate::association::{ExistenceVector, Partition};
use crate::graph::{dead_reckoning, Factor, GraphProblem};
use crate::models::{
    measurement_mean, wrap_angle, MeasurementBatch, Preset, ScenarioConfig, SensorState, Vector5,
    MEAS_ANGLE_COMPONENTS,
};
use nalgebra::{DMatrix, DVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone)]
pub struct AssociationFixture {
    pub name: &'static str,
    pub cfg: ScenarioConfig,
    /// `s_0 .. s_K`, fixed.
    pub traj: Vec<SensorState>,
    pub batch: MeasurementBatch,
    /// Source of every flat measurement, `None` for clutter.
    pub origins: Vec<Option<usize>>,
}

impl AssociationFixture {
    pub fn truth(&self) -> Partition {
        Partition::from_labels(&self.origins)
    }
}

/// Scenario with coarse measurements so that nearby landmarks are confusable.
pub fn coarse_config(steps: usize, clutter_rate: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::desk_preset(Preset::I);
    cfg.steps = steps;
    cfg.clutter_rate = clutter_rate;
    cfg.set_meas_cov_diag([9.0, 1e-2, 1e-2, 1e-2, 1e-2]);
    cfg
}

/// Fixture from explicit visits. `detections[k-1]` lists the landmarks seen
/// at step `k`; `clutter[k-1]` counts extra clutter measurements at that step.
pub fn build(
    name: &'static str,
    cfg: ScenarioConfig,
    landmarks: &[Vector3<f64>],
    detections: &[&[usize]],
    clutter: &[usize],
    seed: u64,
) -> AssociationFixture {
    let traj = dead_reckoning(&cfg, cfg.steps);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = cfg.meas_cov();
    let mut scans = Vec::new();
    let mut origins = Vec::new();
    for k in 1..=cfg.steps {
        let s = &traj[k];
        let mut scan = Vec::new();
        for &i in detections[k - 1] {
            let mut z = measurement_mean(&landmarks[i], s, &cfg).expect("fixture geometry");
            for c in 0..5 {
                let e: f64 = StandardNormal.sample(&mut rng);
                z[c] += e * r[(c, c)].sqrt();
            }
            for c in MEAS_ANGLE_COMPONENTS {
                z[c] = wrap_angle(z[c]);
            }
            scan.push(z);
            origins.push(Some(i));
        }
        for _ in 0..clutter[k - 1] {
            // A clutter return that back-projects somewhere between the two
            // landmarks, so that it competes with them.
            let mid = (landmarks[0] + landmarks[landmarks.len() - 1]) / 2.0
                + Vector3::new(4.0, -3.0, 1.0);
            let z: Vector5 = measurement_mean(&mid, s, &cfg).expect("fixture geometry");
            scan.push(z);
            origins.push(None);
        }
        scans.push(scan);
    }
    let batch = MeasurementBatch::new(scans, vec![None; cfg.steps]);
    AssociationFixture {
        name,
        cfg,
        traj,
        batch,
        origins,
    }
}

fn pair() -> [Vector3<f64>; 2] {
    [Vector3::new(30.0, 25.0, 5.0), Vector3::new(32.0, 27.0, 6.0)]
}

/// Three fixtures mixing same-step and cross-step indices, 5 or 6
/// measurements each.
pub fn association_fixtures() -> Vec<AssociationFixture> {
    let lm = pair();
    vec![
        build("two-close-three-steps", coarse_config(3, 1.0), &lm, &[&[0, 1], &[0], &[0, 1]], &[0, 0, 0], 11),
        build("two-close-with-clutter", coarse_config(2, 2.0), &lm, &[&[0, 1], &[0, 1]], &[0, 1], 12),
        build("uneven-visits", coarse_config(4, 1.0), &lm, &[&[0], &[0, 1], &[0], &[0, 1]], &[0, 0, 0, 0], 13),
    ]
}

/// One landmark seen `k` times, no clutter, with a fine sensor.
pub fn single_track(k: usize) -> AssociationFixture {
    let mut cfg = coarse_config(k, 1.0);
    cfg.set_meas_cov_diag([0.01, 1e-4, 1e-4, 1e-4, 1e-4]);
    let visits: Vec<&[usize]> = vec![&[0]; k];
    build("single-track", cfg, &pair()[..1], &visits, &vec![0; k], 5)
}

/// A 1-D linear Gaussian chain `x_0 .. x_K` with a prior on `x_0`, odometry
/// between neighbours and a direct position reading at every step, together
/// with the dense stacked form `J x ≈ t` with weight `W`.
#[derive(Debug, Clone)]
pub struct LinearChain {
    pub problem: GraphProblem,
    pub jacobian: DMatrix<f64>,
    pub weight: DMatrix<f64>,
    pub target: DVector<f64>,
}

impl LinearChain {
    /// Closed-form generalized least squares solution and its covariance.
    pub fn gls(&self) -> (DVector<f64>, DMatrix<f64>) {
        let jt = self.jacobian.transpose();
        let info = &jt * &self.weight * &self.jacobian;
        let cov = info.clone().try_inverse().expect("full-rank chain");
        let mean = &cov * (&jt * &self.weight * &self.target);
        (mean, cov)
    }
}

/// Chain with the given odometry and position readings (`readings[k]` for
/// `x_k`, `k = 0..=K`).
pub fn linear_chain(odometry: &[f64], readings: &[f64]) -> LinearChain {
    let k = odometry.len();
    assert_eq!(readings.len(), k + 1);
    let (prior_var, odo_var, read_var) = (4.0, 0.25, 1.0);
    let n = k + 1;
    let rows = 1 + k + n;
    let mut jac = DMatrix::zeros(rows, n);
    let mut w = DMatrix::zeros(rows, rows);
    let mut t = DVector::zeros(rows);
    let mut prob = GraphProblem::new(vec![1; n], n, None);
    let one = |v: f64| DMatrix::from_element(1, 1, v);
    let mut row = 0;
    let mut push = |prob: &mut GraphProblem, vars: Vec<(usize, f64)>, target: f64, var: f64| {
        for &(i, c) in &vars {
            jac[(row, i)] = c;
        }
        w[(row, row)] = 1.0 / var;
        t[row] = target;
        row += 1;
        prob.add(Factor::Linear {
            vars: vars.iter().map(|v| v.0).collect(),
            jacobians: vars.iter().map(|v| one(v.1)).collect(),
            target: DVector::from_element(1, target),
            info: one(1.0 / var),
        });
    };
    push(&mut prob, vec![(0, 1.0)], 0.0, prior_var);
    for (i, u) in odometry.iter().enumerate() {
        push(&mut prob, vec![(i + 1, 1.0), (i, -1.0)], *u, odo_var);
    }
    for (i, y) in readings.iter().enumerate() {
        push(&mut prob, vec![(i, 1.0)], *y, read_var);
    }
    LinearChain {
        problem: prob,
        jacobian: jac,
        weight: w,
        target: t,
    }
}

/// Two landmarks seen together at every step by a fine sensor, with the true
/// partition and every cell flagged as existing.
pub fn shared_visibility(k: usize) -> (AssociationFixture, Partition, ExistenceVector) {
    let mut cfg = coarse_config(k, 1.0);
    cfg.set_meas_cov_diag([0.01, 1e-4, 1e-4, 1e-4, 1e-4]);
    let visits: Vec<&[usize]> = vec![&[0, 1]; k];
    let fx = build("shared-visibility", cfg, &pair(), &visits, &vec![0; k], 17);
    let p = fx.truth();
    let psi = ExistenceVector {
        psi: vec![true; p.num_cells()],
        r: vec![1.0; p.num_cells()],
    };
    (fx, p, psi)
}

/// Three landmarks inside the field of view for all five steps, no clutter,
/// certain detection and measurement noise scaled down by 1e-6.
pub fn noiseless_config() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::desk_preset(Preset::I);
    cfg.steps = 5;
    cfg.clutter_rate = 0.0;
    cfg.p_d = 1.0;
    for row in cfg.meas_cov.iter_mut() {
        for v in row.iter_mut() {
            *v *= 1e-6;
        }
    }
    cfg.landmarks = [[25.0, 25.0, 5.0], [40.0, 30.0, 8.0], [20.0, 10.0, 3.0]]
        .into_iter()
        .map(|position| crate::models::Landmark { position })
        .collect();
    cfg
}
