//! Random finite set building blocks.
//!
//! Gaussian densities, Bernoulli and multi-Bernoulli components, and the
//! uniform / thinned Poisson intensities used for undetected landmarks.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RfsError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("covariance is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error(
        "covariance is not positive definite after regularization \
         (min eigenvalue {min_eigenvalue:e}, condition {condition:e})"
    )]
    NotPositiveDefinite { min_eigenvalue: f64, condition: f64 },
}

/// Relative regularization added to a covariance diagonal before factorizing.
pub const COV_REGULARIZATION: f64 = 1e-9;

/// Adds `1e-9 * trace / dim` to the diagonal.
pub fn regularize(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let n = cov.nrows();
    if n == 0 {
        return cov.clone();
    }
    let eps = COV_REGULARIZATION * cov.trace().abs() / n as f64;
    let mut out = cov.clone();
    for i in 0..n {
        out[(i, i)] += eps;
    }
    out
}

fn condition_report(cov: &DMatrix<f64>) -> RfsError {
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let condition = if min.abs() > 0.0 {
        max.abs() / min.abs()
    } else {
        f64::INFINITY
    };
    RfsError::NotPositiveDefinite {
        min_eigenvalue: min,
        condition,
    }
}

/// Inverse of a (regularized) covariance matrix.
pub fn information_matrix(cov: &DMatrix<f64>) -> Result<DMatrix<f64>, RfsError> {
    let reg = regularize(cov);
    match reg.clone().cholesky() {
        Some(ch) => Ok(ch.inverse()),
        None => Err(condition_report(&reg)),
    }
}

/// Multivariate normal density with dynamic dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianDensity {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianDensity {
    /// Validates dimensions, symmetry and positive semi-definiteness.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self, RfsError> {
        let g = Self { mean, cov };
        g.validate()?;
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<(), RfsError> {
        let n = self.mean.len();
        if self.cov.nrows() != n || self.cov.ncols() != n {
            return Err(RfsError::DimensionMismatch {
                expected: n,
                got: self.cov.nrows().max(self.cov.ncols()),
            });
        }
        let scale = self.cov.amax().max(1.0);
        let asym = (&self.cov - self.cov.transpose()).amax();
        if asym > 1e-9 * scale {
            return Err(RfsError::NotSymmetric { asymmetry: asym });
        }
        if n > 0 {
            let eig = self.cov.clone().symmetric_eigenvalues();
            let tol = -1e-9 * self.cov.trace().abs().max(f64::MIN_POSITIVE);
            if eig.iter().any(|&e| e < tol) {
                return Err(condition_report(&self.cov));
            }
        }
        Ok(())
    }

    /// log N(x; mean, cov).
    pub fn log_eval(&self, x: &DVector<f64>) -> Result<f64, RfsError> {
        gaussian_log_eval(self, x)
    }
}

pub fn gaussian_log_eval(g: &GaussianDensity, x: &DVector<f64>) -> Result<f64, RfsError> {
    let n = g.dim();
    if x.len() != n {
        return Err(RfsError::DimensionMismatch {
            expected: n,
            got: x.len(),
        });
    }
    if g.cov.nrows() != n || g.cov.ncols() != n {
        return Err(RfsError::DimensionMismatch {
            expected: n,
            got: g.cov.nrows(),
        });
    }
    let reg = regularize(&g.cov);
    let ch = reg.clone().cholesky().ok_or_else(|| condition_report(&reg))?;
    let diff = x - &g.mean;
    let sol = ch.l().solve_lower_triangular(&diff).expect("cholesky factor is invertible");
    let maha = sol.norm_squared();
    let log_det: f64 = 2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(-0.5 * (n as f64 * (2.0 * PI).ln() + log_det + maha))
}

/// Moment-matched two-component mixture with weights `wa`, `wb` (normalized internally).
pub fn moment_match(
    a: &GaussianDensity,
    wa: f64,
    b: &GaussianDensity,
    wb: f64,
) -> GaussianDensity {
    let (wa, wb) = if wa + wb > 0.0 {
        (wa / (wa + wb), wb / (wa + wb))
    } else {
        (0.5, 0.5)
    };
    let mean = &a.mean * wa + &b.mean * wb;
    let da = &a.mean - &mean;
    let db = &b.mean - &mean;
    let cov = (&a.cov + &da * da.transpose()) * wa + (&b.cov + &db * db.transpose()) * wb;
    GaussianDensity {
        mean,
        cov: symmetrize(cov),
    }
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernoulliComponent {
    pub r: f64,
    pub density: GaussianDensity,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MultiBernoulli {
    pub components: Vec<BernoulliComponent>,
}

impl MultiBernoulli {
    pub fn new(components: Vec<BernoulliComponent>) -> Self {
        Self { components }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Expected cardinality.
    pub fn total_existence(&self) -> f64 {
        self.components.iter().map(|c| c.r).sum()
    }

    pub fn prune(&self, r_min: f64) -> Self {
        mb_prune(self, r_min)
    }

    pub fn merge_close(&self, dist_max: f64) -> Self {
        mb_merge_close(self, dist_max)
    }
}

/// Keeps components with `r >= r_min`, order preserved.
pub fn mb_prune(mb: &MultiBernoulli, r_min: f64) -> MultiBernoulli {
    MultiBernoulli {
        components: mb
            .components
            .iter()
            .filter(|c| c.r >= r_min)
            .cloned()
            .collect(),
    }
}

/// Repeatedly merges the closest pair of components whose means are closer
/// than `dist_max`, moment matching with weights proportional to existence.
pub fn mb_merge_close(mb: &MultiBernoulli, dist_max: f64) -> MultiBernoulli {
    let mut comps = mb.components.clone();
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..comps.len() {
            for j in (i + 1)..comps.len() {
                let d = (&comps[i].density.mean - &comps[j].density.mean).norm();
                if d < dist_max && best.is_none_or(|(_, _, bd)| d < bd) {
                    best = Some((i, j, d));
                }
            }
        }
        let Some((i, j, _)) = best else { break };
        let b = comps.remove(j);
        let a = &comps[i];
        let density = moment_match(&a.density, a.r, &b.density, b.r);
        let r = (a.r + b.r).min(1.0);
        comps[i] = BernoulliComponent { r, density };
    }
    MultiBernoulli { components: comps }
}

/// Axis-aligned box in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl AxisBox {
    pub fn volume(&self) -> f64 {
        (0..3).map(|i| (self.max[i] - self.min[i]).max(0.0)).product()
    }

    pub fn contains(&self, x: &Vector3<f64>) -> bool {
        (0..3).all(|i| x[i] >= self.min[i] && x[i] <= self.max[i])
    }
}

/// Constant-rate Poisson intensity over a box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformPoissonIntensity {
    /// Landmarks per cubic meter.
    pub rate_density: f64,
    pub region: AxisBox,
}

impl UniformPoissonIntensity {
    pub fn eval(&self, x: &Vector3<f64>) -> f64 {
        if self.region.contains(x) {
            self.rate_density
        } else {
            0.0
        }
    }

    pub fn expected_count(&self) -> f64 {
        self.rate_density * self.region.volume()
    }
}

/// Constant detection probability inside a sphere around the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FovDetection {
    pub p_d: f64,
    pub fov_radius: f64,
}

impl FovDetection {
    /// The boundary is closed: a point exactly `fov_radius` away is detectable.
    pub fn prob(&self, landmark: &Vector3<f64>, sensor: &Vector3<f64>) -> f64 {
        if (landmark - sensor).norm() <= self.fov_radius {
            self.p_d
        } else {
            0.0
        }
    }
}

/// Uniform intensity thinned by the probability of never being detected
/// along a sensor trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThinnedPoissonIntensity {
    pub base: UniformPoissonIntensity,
    pub detection: FovDetection,
    /// Sensor positions at steps 1..K.
    pub sensor_positions: Vec<[f64; 3]>,
}

impl ThinnedPoissonIntensity {
    /// Product of `1 - p_D` over every step; 1 where no step sees `x`.
    pub fn thinning(&self, x: &Vector3<f64>) -> f64 {
        self.sensor_positions
            .iter()
            .map(|p| 1.0 - self.detection.prob(x, &Vector3::from(*p)))
            .product()
    }

    pub fn eval(&self, x: &Vector3<f64>) -> f64 {
        self.base.eval(x) * self.thinning(x)
    }

    /// Midpoint-rule integral over the base region with `n` cells per axis.
    pub fn expected_count(&self, n: usize) -> f64 {
        let r = &self.base.region;
        let n = n.max(1);
        let h: Vec<f64> = (0..3).map(|i| (r.max[i] - r.min[i]) / n as f64).collect();
        let cell = h[0] * h[1] * h[2];
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let x = Vector3::new(
                        r.min[0] + (i as f64 + 0.5) * h[0],
                        r.min[1] + (j as f64 + 0.5) * h[1],
                        r.min[2] + (k as f64 + 0.5) * h[2],
                    );
                    total += self.eval(&x);
                }
            }
        }
        total * cell
    }
}
