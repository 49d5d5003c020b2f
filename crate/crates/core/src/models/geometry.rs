use super::{Matrix5, Matrix5x3, ModelError, ScenarioConfig, SensorState, Vector5};
use crate::rfs::GaussianDensity;
use nalgebra::{DMatrix, DVector, RowVector3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

const COINCIDENT: f64 = 1e-9;

/// Wraps to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Coordinated-turn step: rotate the heading, then advance along it.
pub fn motion_mean(s: &SensorState, cfg: &ScenarioConfig) -> SensorState {
    let heading = wrap_angle(s.heading + cfg.turn_rate);
    let position = s.position + cfg.speed * Vector3::new(heading.cos(), heading.sin(), 0.0);
    SensorState {
        position,
        heading,
        clock_bias: s.clock_bias,
    }
}

/// Jacobian of [`motion_mean`] with respect to the previous state.
pub fn motion_jacobian(s: &SensorState, cfg: &ScenarioConfig) -> Matrix5 {
    let heading = s.heading + cfg.turn_rate;
    let mut f = Matrix5::identity();
    f[(0, 3)] = -cfg.speed * heading.sin();
    f[(1, 3)] = cfg.speed * heading.cos();
    f
}

/// Square-root factor `L` with `L L^T = cov`, tolerant of singular diagonals.
pub(crate) fn noise_factor(cov: &Matrix5) -> Matrix5 {
    let off_diag = (0..5)
        .flat_map(|i| (0..5).map(move |j| (i, j)))
        .any(|(i, j)| i != j && cov[(i, j)] != 0.0);
    if !off_diag {
        return Matrix5::from_diagonal(&cov.diagonal().map(|v| v.max(0.0).sqrt()));
    }
    if let Some(ch) = cov.cholesky() {
        return ch.l();
    }
    let eig = cov.symmetric_eigen();
    eig.eigenvectors * Matrix5::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()))
}

pub(crate) fn sample_gaussian5<R: Rng + ?Sized>(factor: &Matrix5, rng: &mut R) -> Vector5 {
    let xi = Vector5::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    factor * xi
}

/// [`motion_mean`] plus Gaussian process noise.
pub fn motion_sample<R: Rng + ?Sized>(
    s: &SensorState,
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> SensorState {
    let mean = motion_mean(s, cfg).to_vector();
    let noise = sample_gaussian5(&noise_factor(&cfg.process_cov()), rng);
    SensorState::from_slice((mean + noise).as_slice())
}

fn azimuth(d: &Vector3<f64>) -> f64 {
    d.y.atan2(d.x)
}

fn elevation(d: &Vector3<f64>) -> f64 {
    d.z.atan2(d.xy().norm())
}

/// Gradients of (azimuth, elevation) of `d` with respect to `d`.
fn angle_gradients(d: &Vector3<f64>) -> Result<(RowVector3<f64>, RowVector3<f64>), ModelError> {
    let rho2 = d.x * d.x + d.y * d.y;
    let rho = rho2.sqrt();
    let r2 = rho2 + d.z * d.z;
    if rho < COINCIDENT {
        return Err(ModelError::Coincident("vertical"));
    }
    let az = RowVector3::new(-d.y / rho2, d.x / rho2, 0.0);
    let el = RowVector3::new(
        -d.z * d.x / (rho * r2),
        -d.z * d.y / (rho * r2),
        rho / r2,
    );
    Ok((az, el))
}

/// Bistatic measurement of landmark `x` seen from sensor `s`.
pub fn measurement_mean(
    x: &Vector3<f64>,
    s: &SensorState,
    cfg: &ScenarioConfig,
) -> Result<Vector5, ModelError> {
    let bs = cfg.bs();
    let d1 = x - bs;
    let d2 = x - s.position;
    let r1 = d1.norm();
    let r2 = d2.norm();
    if r1 < COINCIDENT {
        return Err(ModelError::Coincident("base station"));
    }
    if r2 < COINCIDENT {
        return Err(ModelError::Coincident("sensor"));
    }
    Ok(Vector5::new(
        r1 + r2 + s.clock_bias,
        azimuth(&d1),
        elevation(&d1),
        wrap_angle(azimuth(&d2) - s.heading),
        elevation(&d2),
    ))
}

/// `(H_L, H_S)`: Jacobians of [`measurement_mean`] with respect to the
/// landmark position and the flattened sensor state.
pub fn measurement_jacobians(
    x: &Vector3<f64>,
    s: &SensorState,
    cfg: &ScenarioConfig,
) -> Result<(Matrix5x3, Matrix5), ModelError> {
    let bs = cfg.bs();
    let d1 = x - bs;
    let d2 = x - s.position;
    let r1 = d1.norm();
    let r2 = d2.norm();
    if r1 < COINCIDENT {
        return Err(ModelError::Coincident("base station"));
    }
    if r2 < COINCIDENT {
        return Err(ModelError::Coincident("sensor"));
    }
    let (az1, el1) = angle_gradients(&d1)?;
    let (az2, el2) = angle_gradients(&d2)?;
    let u1 = (d1 / r1).transpose();
    let u2 = (d2 / r2).transpose();

    let mut hl = Matrix5x3::zeros();
    hl.set_row(0, &(u1 + u2));
    hl.set_row(1, &az1);
    hl.set_row(2, &el1);
    hl.set_row(3, &az2);
    hl.set_row(4, &el2);

    let mut hs = Matrix5::zeros();
    for (row, g) in [(0usize, -u2), (3, -az2), (4, -el2)] {
        for c in 0..3 {
            hs[(row, c)] = g[c];
        }
    }
    hs[(0, 4)] = 1.0;
    hs[(3, 3)] = -1.0;
    Ok((hl, hs))
}

/// Line-of-sight measurement of the known base station.
pub fn los_mean(s: &SensorState, cfg: &ScenarioConfig) -> Result<Vector5, ModelError> {
    let d = s.position - cfg.bs();
    let r = d.norm();
    if r < COINCIDENT {
        return Err(ModelError::Coincident("base station"));
    }
    let e = -d;
    Ok(Vector5::new(
        r + s.clock_bias,
        azimuth(&d),
        elevation(&d),
        wrap_angle(azimuth(&e) - s.heading),
        elevation(&e),
    ))
}

/// Jacobian of [`los_mean`] with respect to the flattened sensor state.
pub fn los_jacobian(s: &SensorState, cfg: &ScenarioConfig) -> Result<Matrix5, ModelError> {
    let d = s.position - cfg.bs();
    let r = d.norm();
    if r < COINCIDENT {
        return Err(ModelError::Coincident("base station"));
    }
    let (az_d, el_d) = angle_gradients(&d)?;
    let (az_e, el_e) = angle_gradients(&-d)?;
    let mut h = Matrix5::zeros();
    // d = p - bs, e = bs - p
    for (row, g) in [
        (0usize, (d / r).transpose()),
        (1, az_d),
        (2, el_d),
        (3, -az_e),
        (4, -el_e),
    ] {
        for c in 0..3 {
            h[(row, c)] = g[c];
        }
    }
    h[(0, 4)] = 1.0;
    h[(3, 3)] = -1.0;
    Ok(h)
}

/// Detection probability: `p_d` inside the closed FOV ball, 0 outside.
pub fn detection_prob(x: &Vector3<f64>, s: &SensorState, cfg: &ScenarioConfig) -> f64 {
    cfg.detection().prob(x, &s.position)
}

/// Landmark position that reproduces the range and the UE-side angles of `z`.
///
/// The direction comes from the AOA pair rotated into the global frame and
/// the distance solves the bistatic ellipse `|bs - x| + d = range - B`.
pub fn back_project(
    z: &Vector5,
    s: &SensorState,
    cfg: &ScenarioConfig,
) -> Result<Vector3<f64>, ModelError> {
    let az = z[3] + s.heading;
    let el = z[4];
    let dir = Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
    let w = cfg.bs() - s.position;
    let rho = z[0] - s.clock_bias;
    let wn = w.norm();
    if rho <= wn {
        return Err(ModelError::Infeasible { residual: rho - wn });
    }
    let d = (rho * rho - wn * wn) / (2.0 * (rho - w.dot(&dir)));
    if !(d > COINCIDENT) || !d.is_finite() {
        return Err(ModelError::Infeasible { residual: rho - wn });
    }
    Ok(s.position + d * dir)
}

/// Gaussian landmark birth from a single measurement.
pub fn inverse_measurement(
    z: &Vector5,
    s: &SensorState,
    cfg: &ScenarioConfig,
) -> Result<GaussianDensity, ModelError> {
    let mean = back_project(z, s, cfg)?;
    Ok(GaussianDensity {
        mean: DVector::from_column_slice(mean.as_slice()),
        cov: DMatrix::from_fn(3, 3, |i, j| cfg.birth_cov[i][j]),
    })
}
