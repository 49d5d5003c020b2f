use crate::models::{
    back_project, measurement_jacobians, measurement_mean, wrap_angle, MeasurementBatch,
    ScenarioConfig, SensorState, MEAS_ANGLE_COMPONENTS,
};
use crate::rfs::GaussianDensity;
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use std::collections::HashMap;
use std::f64::consts::PI;

/// Smallest misdetection probability used inside logarithms.
const MISS_FLOOR: f64 = 1e-12;

/// Log-likelihood of one cell plus the landmark density it implies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellLikelihood {
    pub log_l: f64,
    /// Log of the integrated landmark term; `-inf` when infeasible.
    pub detect_term: f64,
    pub is_singleton: bool,
    /// `false` when the earliest measurement has no back-projection or the
    /// filter left the model's domain.
    pub feasible: bool,
    pub birth_mean: Vector3<f64>,
    pub birth_cov: Matrix3<f64>,
}

impl CellLikelihood {
    pub fn birth(&self) -> GaussianDensity {
        GaussianDensity {
            mean: DVector::from_column_slice(self.birth_mean.as_slice()),
            cov: DMatrix::from_column_slice(3, 3, self.birth_cov.as_slice()),
        }
    }
}

pub(crate) fn logsumexp2(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub(crate) fn logsumexp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Everything a cell likelihood depends on, with a memo table keyed by the
/// sorted cell contents. The trajectory is fixed for the model's lifetime.
pub struct CellModel<'a> {
    pub batch: &'a MeasurementBatch,
    pub traj: &'a [SensorState],
    pub cfg: &'a ScenarioConfig,
    pub times: Vec<usize>,
    /// Back-projected landmark position per measurement.
    pub points: Vec<Option<Vector3<f64>>>,
    pub log_c: f64,
    cache: HashMap<Vec<usize>, CellLikelihood>,
}

impl<'a> CellModel<'a> {
    /// `traj` holds `s_0 .. s_K`.
    pub fn new(batch: &'a MeasurementBatch, traj: &'a [SensorState], cfg: &'a ScenarioConfig) -> Self {
        assert!(
            traj.len() > batch.steps(),
            "trajectory must cover steps 0..=K"
        );
        let times = batch.times();
        let points = (0..batch.len())
            .map(|m| back_project(batch.z(m), &traj[times[m]], cfg).ok())
            .collect();
        let c = cfg.clutter_intensity();
        Self {
            batch,
            traj,
            cfg,
            times,
            points,
            log_c: if c > 0.0 { c.ln() } else { f64::NEG_INFINITY },
            cache: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Feature used for gating and for k-means++: the back-projection, or the
    /// sensor position when the measurement has none.
    pub fn feature(&self, m: usize) -> Vector3<f64> {
        self.points[m].unwrap_or(self.traj[self.times[m]].position)
    }

    pub fn cache_len(&self) -> usize {
        self.cache.len()
    }

    /// Memoized [`CellModel::evaluate`]; `cell` must be sorted.
    pub fn get(&mut self, cell: &[usize]) -> CellLikelihood {
        if let Some(l) = self.cache.get(cell) {
            return *l;
        }
        let l = self.evaluate(cell);
        self.cache.insert(cell.to_vec(), l);
        l
    }

    /// Log-likelihood of an empty cell (multiplicative identity).
    pub fn empty() -> f64 {
        0.0
    }

    /// Uncached evaluation.
    ///
    /// The landmark integral is approximated by an extended Kalman filter
    /// started at the back-projection of the earliest measurement with the
    /// configured birth covariance. The accumulated predictive densities give
    /// the integral against that Gaussian; dividing by the Gaussian at the
    /// final mean converts it to an integral against the (locally constant)
    /// birth intensity. Detection and misdetection factors are then added for
    /// every step at which the final mean lies inside the field of view.
    pub fn evaluate(&self, cell: &[usize]) -> CellLikelihood {
        debug_assert!(!cell.is_empty());
        debug_assert!(cell.windows(2).all(|w| w[0] < w[1]));
        let cfg = self.cfg;
        let is_singleton = cell.len() == 1;
        let p0 = cfg.birth_cov();
        let infeasible = |mean: Vector3<f64>| CellLikelihood {
            log_l: if is_singleton { self.log_c } else { f64::NEG_INFINITY },
            detect_term: f64::NEG_INFINITY,
            is_singleton,
            feasible: false,
            birth_mean: mean,
            birth_cov: p0,
        };

        let first = cell[0];
        let Some(x0) = self.points[first] else {
            return infeasible(self.traj[self.times[first]].position);
        };
        let r = cfg.meas_cov();
        let mut x = x0;
        let mut p = p0;
        let mut log_pred = 0.0;
        for &m in cell {
            let s = &self.traj[self.times[m]];
            let (Ok(zhat), Ok((h, _))) =
                (measurement_mean(&x, s, cfg), measurement_jacobians(&x, s, cfg))
            else {
                return infeasible(x);
            };
            let mut nu = self.batch.z(m) - zhat;
            for i in MEAS_ANGLE_COMPONENTS {
                nu[i] = wrap_angle(nu[i]);
            }
            let pht = p * h.transpose();
            let s_mat = h * pht + r;
            let Some(chol) = s_mat.cholesky() else {
                return infeasible(x);
            };
            let sinv_nu = chol.solve(&nu);
            let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
            log_pred += -0.5 * (nu.dot(&sinv_nu) + log_det + 5.0 * (2.0 * PI).ln());
            let gain = pht * chol.inverse();
            x += gain * nu;
            let ikh = Matrix3::identity() - gain * h;
            p = ikh * p * ikh.transpose() + gain * r * gain.transpose();
            p = 0.5 * (p + p.transpose());
        }

        let birth = cfg.birth_intensity();
        if !birth.region.contains(&x) || birth.rate_density <= 0.0 || !x.iter().all(|v| v.is_finite())
        {
            return CellLikelihood {
                feasible: true,
                ..infeasible(x)
            };
        }
        let log_lambda = birth.rate_density.ln();
        let dx = x - x0;
        let p0_inv = p0.try_inverse().unwrap_or_else(Matrix3::identity);
        let log_prior_at_x =
            -0.5 * (dx.dot(&(p0_inv * dx)) + p0.determinant().ln() + 3.0 * (2.0 * PI).ln());

        let detection = cfg.detection();
        let log_pd = cfg.p_d.ln();
        let log_miss = (1.0 - cfg.p_d).max(MISS_FLOOR).ln();
        let mut log_detection = 0.0;
        let mut j = 0;
        for k in 1..self.traj.len() {
            let detected = j < cell.len() && self.times[cell[j]] == k;
            if detected {
                log_detection += log_pd;
                j += 1;
            } else if detection.prob(&x, &self.traj[k].position) > 0.0 {
                log_detection += log_miss;
            }
        }

        let detect_term = log_pred + log_lambda - log_prior_at_x + log_detection;
        let log_l = if is_singleton {
            logsumexp2(self.log_c, detect_term)
        } else {
            detect_term
        };
        CellLikelihood {
            log_l,
            detect_term,
            is_singleton,
            feasible: true,
            birth_mean: x,
            birth_cov: p,
        }
    }

    /// Existence probability of the cell's landmark.
    pub fn existence_probability(&self, l: &CellLikelihood) -> f64 {
        if !l.is_singleton {
            return 1.0;
        }
        let d = self.log_c - l.detect_term;
        if d.is_nan() {
            return 0.0;
        }
        1.0 / (1.0 + d.exp())
    }
}

/// Unnormalized log weight of a partition: the sum of its cell log-likelihoods.
pub fn partition_log_weight(p: &super::Partition, model: &mut CellModel<'_>) -> f64 {
    p.cells().iter().map(|c| model.get(c).log_l).sum()
}

/// Stand-alone evaluation of one cell.
pub fn cell_log_likelihood(
    cell: &[usize],
    batch: &MeasurementBatch,
    traj: &[SensorState],
    cfg: &ScenarioConfig,
) -> CellLikelihood {
    let mut sorted = cell.to_vec();
    sorted.sort_unstable();
    CellModel::new(batch, traj, cfg).evaluate(&sorted)
}
