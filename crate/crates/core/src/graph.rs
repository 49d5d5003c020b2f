//! Conditional MAP estimation of the trajectory and the kept landmarks.
//!
//! The joint state `q = [s_0 .. s_K, x^1 .. x^kappa]` is estimated by
//! minimizing `E(q) = sum r^T W r` over prior, motion, line-of-sight and
//! bistatic factors with Levenberg-damped Gauss-Newton steps. Residuals are
//! `predicted - observed` with angles wrapped, so the gradient of `E` is `2b`
//! with `b = J^T W r` and the undamped step is `-Omega^{-1} b`.

use crate::association::{ExistenceVector, Partition};
use crate::models::{
    inverse_measurement, los_jacobian, los_mean, measurement_jacobians, measurement_mean,
    motion_jacobian, motion_mean, wrap_angle, MeasurementBatch, ScenarioConfig, SensorState,
    HEADING, LANDMARK_DIM, MEAS_ANGLE_COMPONENTS, SENSOR_DIM,
};
use crate::rfs::{information_matrix, regularize, GaussianDensity, RfsError};
use nalgebra::{DMatrix, DVector, Vector3};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("information matrix stayed indefinite up to damping {tau:e}")]
    Degenerate { tau: f64 },
    #[error("initial state has dimension {got}, problem expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("factor evaluation failed: {0}")]
    Model(#[from] crate::models::ModelError),
    #[error(transparent)]
    Covariance(#[from] RfsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A residual term. Variables are block indices into [`GraphProblem::blocks`].
#[derive(Debug, Clone, PartialEq)]
pub enum Factor {
    /// `x_var - mean`, with the listed local components wrapped.
    Prior {
        var: usize,
        mean: DVector<f64>,
        info: DMatrix<f64>,
        wrap: Vec<usize>,
    },
    /// `s_to - v(s_from)`.
    Motion {
        from: usize,
        to: usize,
        info: DMatrix<f64>,
    },
    /// `h(x_landmark, s_pose) - z`.
    Bistatic {
        pose: usize,
        landmark: usize,
        z: DVector<f64>,
        info: DMatrix<f64>,
    },
    /// Line-of-sight measurement of the base station from `pose`.
    LineOfSight {
        pose: usize,
        z: DVector<f64>,
        info: DMatrix<f64>,
    },
    /// `sum_i J_i x_{vars[i]} - target`.
    Linear {
        vars: Vec<usize>,
        jacobians: Vec<DMatrix<f64>>,
        target: DVector<f64>,
        info: DMatrix<f64>,
    },
}

/// Variable layout plus factors.
#[derive(Debug, Clone)]
pub struct GraphProblem {
    /// Dimension of every variable block.
    pub blocks: Vec<usize>,
    /// Local components of each block that are angles.
    pub wrap: Vec<Vec<usize>>,
    pub factors: Vec<Factor>,
    /// Leading blocks that form the trajectory.
    pub num_poses: usize,
    /// Measurement model; required by nonlinear factors.
    pub model: Option<ScenarioConfig>,
    /// Cells whose landmark enters the problem, in landmark-block order.
    pub kept_cells: Vec<Vec<usize>>,
    /// Earliest measurement (flat id) of each kept cell.
    pub first_indices: Vec<usize>,
    /// Birth density of each kept landmark.
    pub births: Vec<GaussianDensity>,
    /// Cells flagged as existing but dropped because their birth was infeasible.
    pub dropped: Vec<Vec<usize>>,
    offsets: Vec<usize>,
}

/// Gauss-Newton system at one linearization point.
#[derive(Debug, Clone)]
pub struct InformationSystem {
    pub omega: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Cost at the linearization point.
    pub e: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSettings {
    pub max_iters: usize,
    pub rel_cost_tol: f64,
    pub step_tol: f64,
    pub initial_damping: f64,
    pub max_damping: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_iters: 50,
            rel_cost_tol: 1e-8,
            step_tol: 1e-9,
            initial_damping: 1e-6,
            max_damping: 1e12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GraphSlamResult {
    pub mean: DVector<f64>,
    /// Inverse of the undamped information matrix at `mean`.
    pub cov: DMatrix<f64>,
    pub blocks: Vec<usize>,
    pub num_poses: usize,
    pub converged: bool,
    pub iterations: usize,
    pub final_cost: f64,
    /// Cost after every accepted step, starting with the initial cost.
    pub cost_trace: Vec<f64>,
    pub information: DMatrix<f64>,
}

fn offsets_of(blocks: &[usize]) -> Vec<usize> {
    let mut off = Vec::with_capacity(blocks.len() + 1);
    let mut acc = 0;
    off.push(0);
    for b in blocks {
        acc += b;
        off.push(acc);
    }
    off
}

fn wrap_components(v: &mut DVector<f64>, idx: &[usize]) {
    for &i in idx {
        v[i] = wrap_angle(v[i]);
    }
}

impl GraphProblem {
    /// Problem over arbitrary blocks; factors are added with [`GraphProblem::add`].
    pub fn new(blocks: Vec<usize>, num_poses: usize, model: Option<ScenarioConfig>) -> Self {
        let offsets = offsets_of(&blocks);
        Self {
            wrap: vec![Vec::new(); blocks.len()],
            blocks,
            factors: Vec::new(),
            num_poses,
            model,
            kept_cells: Vec::new(),
            first_indices: Vec::new(),
            births: Vec::new(),
            dropped: Vec::new(),
            offsets,
        }
    }

    pub fn add(&mut self, f: Factor) {
        self.factors.push(f);
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn offset(&self, block: usize) -> usize {
        self.offsets[block]
    }

    pub fn num_landmarks(&self) -> usize {
        self.blocks.len() - self.num_poses
    }

    fn block<'q>(&self, q: &'q DVector<f64>, b: usize) -> nalgebra::DVectorView<'q, f64> {
        q.rows(self.offsets[b], self.blocks[b])
    }

    fn sensor(&self, q: &DVector<f64>, b: usize) -> SensorState {
        SensorState::from_slice(self.block(q, b).as_slice())
    }

    fn point(&self, q: &DVector<f64>, b: usize) -> Vector3<f64> {
        let v = self.block(q, b);
        Vector3::new(v[0], v[1], v[2])
    }

    fn model(&self) -> &ScenarioConfig {
        self.model
            .as_ref()
            .expect("nonlinear factor needs a measurement model")
    }

    /// Residual, per-variable Jacobians and weight of one factor.
    #[allow(clippy::type_complexity)]
    fn evaluate(
        &self,
        f: &Factor,
        q: &DVector<f64>,
        with_jacobians: bool,
    ) -> Result<(DVector<f64>, Vec<(usize, DMatrix<f64>)>, DMatrix<f64>), GraphError> {
        let as_dyn5 = |m: &crate::models::Matrix5| DMatrix::from_column_slice(5, 5, m.as_slice());
        Ok(match f {
            Factor::Prior {
                var,
                mean,
                info,
                wrap,
            } => {
                let mut r = self.block(q, *var) - mean;
                wrap_components(&mut r, wrap);
                let j = if with_jacobians {
                    vec![(*var, DMatrix::identity(mean.len(), mean.len()))]
                } else {
                    Vec::new()
                };
                (r, j, info.clone())
            }
            Factor::Motion { from, to, info } => {
                let cfg = self.model();
                let prev = self.sensor(q, *from);
                let pred = motion_mean(&prev, cfg).to_vector();
                let mut r = DVector::from_column_slice((self.block(q, *to) - pred).as_slice());
                r[HEADING] = wrap_angle(r[HEADING]);
                let j = if with_jacobians {
                    let fj = motion_jacobian(&prev, cfg);
                    vec![(*to, DMatrix::identity(5, 5)), (*from, -as_dyn5(&fj))]
                } else {
                    Vec::new()
                };
                (r, j, info.clone())
            }
            Factor::Bistatic {
                pose,
                landmark,
                z,
                info,
            } => {
                let cfg = self.model();
                let s = self.sensor(q, *pose);
                let x = self.point(q, *landmark);
                let pred = measurement_mean(&x, &s, cfg)?;
                let mut r = DVector::from_column_slice(pred.as_slice()) - z;
                wrap_components(&mut r, &MEAS_ANGLE_COMPONENTS);
                let j = if with_jacobians {
                    let (hl, hs) = measurement_jacobians(&x, &s, cfg)?;
                    vec![
                        (*pose, as_dyn5(&hs)),
                        (*landmark, DMatrix::from_column_slice(5, 3, hl.as_slice())),
                    ]
                } else {
                    Vec::new()
                };
                (r, j, info.clone())
            }
            Factor::LineOfSight { pose, z, info } => {
                let cfg = self.model();
                let s = self.sensor(q, *pose);
                let pred = los_mean(&s, cfg)?;
                let mut r = DVector::from_column_slice(pred.as_slice()) - z;
                wrap_components(&mut r, &MEAS_ANGLE_COMPONENTS);
                let j = if with_jacobians {
                    vec![(*pose, as_dyn5(&los_jacobian(&s, cfg)?))]
                } else {
                    Vec::new()
                };
                (r, j, info.clone())
            }
            Factor::Linear {
                vars,
                jacobians,
                target,
                info,
            } => {
                let mut r = -target.clone();
                for (v, jm) in vars.iter().zip(jacobians) {
                    r += jm * self.block(q, *v);
                }
                let j = if with_jacobians {
                    vars.iter().cloned().zip(jacobians.iter().cloned()).collect()
                } else {
                    Vec::new()
                };
                (r, j, info.clone())
            }
        })
    }

    /// `E(q)`; non-finite when a factor cannot be evaluated.
    pub fn cost(&self, q: &DVector<f64>) -> f64 {
        let mut e = 0.0;
        for f in &self.factors {
            match self.evaluate(f, q, false) {
                Ok((r, _, w)) => e += r.dot(&(&w * &r)),
                Err(_) => return f64::INFINITY,
            }
        }
        e
    }

    /// Accumulates `Omega = sum J^T W J` and `b = sum J^T W r` at `q`.
    pub fn linearize(&self, q: &DVector<f64>) -> Result<InformationSystem, GraphError> {
        let n = self.dim();
        let mut omega = DMatrix::zeros(n, n);
        let mut b = DVector::zeros(n);
        let mut e = 0.0;
        for f in &self.factors {
            let (r, jac, w) = self.evaluate(f, q, true)?;
            let wr = &w * &r;
            e += r.dot(&wr);
            let wj: Vec<DMatrix<f64>> = jac.iter().map(|(_, j)| &w * j).collect();
            for (va, ja) in &jac {
                let oa = self.offsets[*va];
                let jt = ja.transpose();
                let mut rows = b.rows_mut(oa, ja.ncols());
                rows += &jt * &wr;
                for ((vb, _), wjb) in jac.iter().zip(&wj) {
                    let ob = self.offsets[*vb];
                    let block = &jt * wjb;
                    let mut view = omega.view_mut((oa, ob), (block.nrows(), block.ncols()));
                    view += &block;
                }
            }
        }
        let sym = 0.5 * (&omega + omega.transpose());
        Ok(InformationSystem { omega: sym, b, e })
    }

    /// Applies an increment and re-wraps angular components.
    pub fn retract(&self, q: &DVector<f64>, delta: &DVector<f64>) -> DVector<f64> {
        let mut out = q + delta;
        for (b, w) in self.wrap.iter().enumerate() {
            for &i in w {
                let k = self.offsets[b] + i;
                out[k] = wrap_angle(out[k]);
            }
        }
        out
    }
}

/// `-(Omega + tau I)^{-1} b`, or `None` when the damped matrix is not positive definite.
pub fn solve_increment(sys: &InformationSystem, tau: f64) -> Option<DVector<f64>> {
    let n = sys.b.len();
    let mut a = sys.omega.clone();
    for i in 0..n {
        a[(i, i)] += tau;
    }
    let chol = a.cholesky()?;
    let mut d = chol.solve(&sys.b);
    d.neg_mut();
    d.iter().all(|v| v.is_finite()).then_some(d)
}

/// Damped Gauss-Newton from `q_init`.
pub fn optimize(
    prob: &GraphProblem,
    q_init: &DVector<f64>,
    settings: &OptimizerSettings,
) -> Result<GraphSlamResult, GraphError> {
    if q_init.len() != prob.dim() {
        return Err(GraphError::DimensionMismatch {
            expected: prob.dim(),
            got: q_init.len(),
        });
    }
    let mut q = prob.retract(q_init, &DVector::zeros(q_init.len()));
    let mut cost = prob.cost(&q);
    let mut trace = vec![cost];
    let mut tau = settings.initial_damping;
    let mut converged = false;
    let mut iterations = 0;

    'outer: while iterations < settings.max_iters {
        let sys = prob.linearize(&q)?;
        iterations += 1;
        loop {
            let Some(delta) = solve_increment(&sys, tau) else {
                tau *= 10.0;
                if tau > settings.max_damping {
                    return Err(GraphError::Degenerate { tau });
                }
                continue;
            };
            let q_new = prob.retract(&q, &delta);
            let c_new = prob.cost(&q_new);
            if c_new <= cost {
                let dc = cost - c_new;
                q = q_new;
                cost = c_new;
                trace.push(cost);
                tau = (tau / 10.0).max(1e-15);
                let step = delta.amax();
                if dc <= settings.rel_cost_tol * cost || step < settings.step_tol {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            tau *= 10.0;
            if tau > settings.max_damping {
                // No descent direction left at this resolution.
                converged = true;
                break 'outer;
            }
        }
    }

    let sys = prob.linearize(&q)?;
    let cov = invert_information(&sys.omega)?;
    Ok(GraphSlamResult {
        mean: q,
        cov,
        blocks: prob.blocks.clone(),
        num_poses: prob.num_poses,
        converged,
        iterations,
        final_cost: cost,
        cost_trace: trace,
        information: sys.omega,
    })
}

fn invert_information(omega: &DMatrix<f64>) -> Result<DMatrix<f64>, GraphError> {
    if let Some(ch) = omega.clone().cholesky() {
        let inv = ch.inverse();
        return Ok(0.5 * (&inv + inv.transpose()));
    }
    let reg = regularize(omega);
    match reg.cholesky() {
        Some(ch) => {
            let inv = ch.inverse();
            Ok(0.5 * (&inv + inv.transpose()))
        }
        None => Err(GraphError::Degenerate { tau: 0.0 }),
    }
}

impl GraphSlamResult {
    fn offset(&self, block: usize) -> usize {
        self.blocks[..block].iter().sum()
    }

    pub fn traj_dim(&self) -> usize {
        self.blocks[..self.num_poses].iter().sum()
    }

    pub fn num_landmarks(&self) -> usize {
        self.blocks.len() - self.num_poses
    }

    pub fn traj_mean(&self) -> DVector<f64> {
        self.mean.rows(0, self.traj_dim()).into_owned()
    }

    pub fn traj_cov(&self) -> DMatrix<f64> {
        let n = self.traj_dim();
        self.cov.view((0, 0), (n, n)).into_owned()
    }

    pub fn map_mean(&self) -> DVector<f64> {
        let n = self.traj_dim();
        self.mean.rows(n, self.mean.len() - n).into_owned()
    }

    pub fn map_cov(&self) -> DMatrix<f64> {
        let n = self.traj_dim();
        let m = self.mean.len() - n;
        self.cov.view((n, n), (m, m)).into_owned()
    }

    /// Sensor states `s_0 .. s_K` (only for 5-D pose blocks).
    pub fn trajectory(&self) -> Vec<SensorState> {
        (0..self.num_poses)
            .map(|b| SensorState::from_slice(self.mean.rows(self.offset(b), SENSOR_DIM).as_slice()))
            .collect()
    }

    /// Mean and covariance of landmark `i` (zero-based among landmarks).
    pub fn landmark(&self, i: usize) -> GaussianDensity {
        let b = self.num_poses + i;
        let o = self.offset(b);
        let d = self.blocks[b];
        GaussianDensity {
            mean: self.mean.rows(o, d).into_owned(),
            cov: self.cov.view((o, o), (d, d)).into_owned(),
        }
    }

    /// Cross-covariance between landmarks `i` and `j`.
    pub fn landmark_cross(&self, i: usize, j: usize) -> DMatrix<f64> {
        let (bi, bj) = (self.num_poses + i, self.num_poses + j);
        let (oi, oj) = (self.offset(bi), self.offset(bj));
        self.cov
            .view((oi, oj), (self.blocks[bi], self.blocks[bj]))
            .into_owned()
    }

    /// Writes the block sparsity of the information matrix and the cost trace.
    pub fn write_debug(&self, dir: &Path, tag: &str) -> Result<(), GraphError> {
        std::fs::create_dir_all(dir)?;
        let mut f = std::fs::File::create(dir.join(format!("{tag}_omega_pattern.csv")))?;
        writeln!(f, "row_block,col_block,frobenius_norm")?;
        let nb = self.blocks.len();
        for a in 0..nb {
            for b in 0..nb {
                let (oa, ob) = (self.offset(a), self.offset(b));
                let v = self
                    .information
                    .view((oa, ob), (self.blocks[a], self.blocks[b]))
                    .norm();
                if v > 0.0 {
                    writeln!(f, "{a},{b},{v:e}")?;
                }
            }
        }
        let mut f = std::fs::File::create(dir.join(format!("{tag}_cost_trace.csv")))?;
        writeln!(f, "step,cost")?;
        for (i, c) in self.cost_trace.iter().enumerate() {
            writeln!(f, "{i},{c:e}")?;
        }
        Ok(())
    }
}

fn info5(cov: DMatrix<f64>) -> Result<DMatrix<f64>, RfsError> {
    information_matrix(&cov)
}

/// Assembles the conditional problem for one sampled association.
///
/// Cells with `psi = 1` become landmarks whose birth is the back-projection of
/// their earliest measurement against `traj_init`; measurements of the other
/// cells are treated as clutter and contribute nothing.
pub fn build_graph(
    p: &Partition,
    psi: &ExistenceVector,
    traj_init: &[SensorState],
    batch: &MeasurementBatch,
    cfg: &ScenarioConfig,
) -> Result<GraphProblem, GraphError> {
    assert_eq!(psi.psi.len(), p.num_cells(), "existence flags must align with cells");
    let k = batch.steps();
    let r_info = info5(cfg.meas_cov_dyn())?;
    let q_info = info5(cfg.process_cov_dyn())?;
    let s0_info = info5(cfg.s0_cov_dyn())?;
    let birth_info = information_matrix(&cfg.birth_cov_dyn())?;

    let times = batch.times();
    let mut kept = Vec::new();
    let mut births = Vec::new();
    let mut dropped = Vec::new();
    let mut cells: Vec<&Vec<usize>> = p
        .cells()
        .iter()
        .zip(&psi.psi)
        .filter_map(|(c, &on)| on.then_some(c))
        .collect();
    cells.sort_by_key(|c| c[0]);
    for cell in cells {
        let first = cell[0];
        match inverse_measurement(batch.z(first), &traj_init[times[first]], cfg) {
            Ok(g) => {
                kept.push(cell.clone());
                births.push(g);
            }
            Err(_) => dropped.push(cell.clone()),
        }
    }

    let mut blocks = vec![SENSOR_DIM; k + 1];
    blocks.extend(std::iter::repeat_n(LANDMARK_DIM, kept.len()));
    let mut prob = GraphProblem::new(blocks, k + 1, Some(cfg.clone()));
    for b in 0..=k {
        prob.wrap[b] = vec![HEADING];
    }
    prob.add(Factor::Prior {
        var: 0,
        mean: DVector::from_column_slice(&cfg.s0_mean),
        info: s0_info,
        wrap: vec![HEADING],
    });
    for step in 1..=k {
        prob.add(Factor::Motion {
            from: step - 1,
            to: step,
            info: q_info.clone(),
        });
        if let Some(z) = batch.los[step - 1] {
            prob.add(Factor::LineOfSight {
                pose: step,
                z: DVector::from_column_slice(z.as_slice()),
                info: r_info.clone(),
            });
        }
    }
    for (i, (cell, birth)) in kept.iter().zip(&births).enumerate() {
        let lm = k + 1 + i;
        prob.add(Factor::Prior {
            var: lm,
            mean: birth.mean.clone(),
            info: birth_info.clone(),
            wrap: Vec::new(),
        });
        for &m in cell {
            prob.add(Factor::Bistatic {
                pose: times[m],
                landmark: lm,
                z: DVector::from_column_slice(batch.z(m).as_slice()),
                info: r_info.clone(),
            });
        }
    }
    prob.first_indices = kept.iter().map(|c| c[0]).collect();
    prob.kept_cells = kept;
    prob.births = births;
    prob.dropped = dropped;
    Ok(prob)
}

impl GraphProblem {
    /// Stacks a trajectory and landmark positions into `q`. Landmarks without
    /// an entry in `landmarks` start at their birth mean.
    pub fn initial_state(
        &self,
        traj: &[SensorState],
        landmarks: &[Option<Vector3<f64>>],
    ) -> DVector<f64> {
        let mut q = DVector::zeros(self.dim());
        for (b, s) in traj.iter().enumerate().take(self.num_poses) {
            q.rows_mut(self.offsets[b], SENSOR_DIM)
                .copy_from_slice(s.to_vector().as_slice());
        }
        for i in 0..self.num_landmarks() {
            let o = self.offsets[self.num_poses + i];
            let x = landmarks
                .get(i)
                .copied()
                .flatten()
                .unwrap_or_else(|| Vector3::from_column_slice(self.births[i].mean.as_slice()));
            q.rows_mut(o, LANDMARK_DIM).copy_from_slice(x.as_slice());
        }
        q
    }
}

/// Prior chain `s_0 = E[s_0]`, `s_k = v(s_{k-1})`.
pub fn dead_reckoning(cfg: &ScenarioConfig, steps: usize) -> Vec<SensorState> {
    let mut traj = Vec::with_capacity(steps + 1);
    traj.push(cfg.s0());
    for k in 1..=steps {
        traj.push(motion_mean(&traj[k - 1], cfg));
    }
    traj
}
