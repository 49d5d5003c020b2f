//! Fusion of the kept GraphSLAM samples into one trajectory density, one
//! multi-Bernoulli map and the thinned intensity of undetected landmarks.

use crate::association::{ExistenceVector, Partition};
use crate::graph::{GraphProblem, GraphSlamResult};
use crate::models::{wrap_angle, ScenarioConfig, SensorState, HEADING, SENSOR_DIM};
use crate::rfs::{
    symmetrize, BernoulliComponent, GaussianDensity, MultiBernoulli, ThinnedPoissonIntensity,
};
use nalgebra::{DMatrix, DVector, Vector3};
use std::collections::BTreeMap;

/// What one outer iteration contributes to the final posterior.
#[derive(Debug, Clone)]
pub struct SampleRecord {
    pub partition: Partition,
    pub psi: ExistenceVector,
    pub traj: GaussianDensity,
    /// One density per kept landmark, aligned with `first_indices`.
    pub landmarks: Vec<GaussianDensity>,
    /// Earliest measurement (flat id) of each kept cell.
    pub first_indices: Vec<usize>,
}

impl SampleRecord {
    pub fn new(
        partition: Partition,
        psi: ExistenceVector,
        prob: &GraphProblem,
        result: &GraphSlamResult,
    ) -> Self {
        Self {
            partition,
            psi,
            traj: GaussianDensity {
                mean: result.traj_mean(),
                cov: result.traj_cov(),
            },
            landmarks: (0..result.num_landmarks()).map(|i| result.landmark(i)).collect(),
            first_indices: prob.first_indices.clone(),
        }
    }
}

/// Unique first-measurement ids across samples and per-sample indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkRegistry {
    /// Sorted unique first-measurement ids; position is the registry index.
    pub keys: Vec<usize>,
    /// `present[t][i]`: sample `t` kept the landmark with key `keys[i]`.
    pub present: Vec<Vec<bool>>,
}

impl LandmarkRegistry {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn index_of(&self, key: usize) -> Option<usize> {
        self.keys.binary_search(&key).ok()
    }
}

/// Moment-matched equal-weight mixture. Components listed in `wrap` are
/// averaged as angles relative to the first density.
pub fn merge_gaussians(items: &[&GaussianDensity], wrap: &[usize]) -> GaussianDensity {
    assert!(!items.is_empty(), "cannot merge an empty set of densities");
    let n = items[0].mean.len();
    for g in items {
        assert_eq!(g.mean.len(), n, "dimension mismatch between merged densities");
    }
    let reference = &items[0].mean;
    let devs: Vec<DVector<f64>> = items
        .iter()
        .map(|g| {
            let mut d = &g.mean - reference;
            for &i in wrap {
                d[i] = wrap_angle(d[i]);
            }
            d
        })
        .collect();
    let w = 1.0 / items.len() as f64;
    let mean_dev = devs.iter().fold(DVector::zeros(n), |acc, d| acc + d) * w;
    let mut cov = DMatrix::zeros(n, n);
    for (g, d) in items.iter().zip(&devs) {
        let e = d - &mean_dev;
        cov += &g.cov + &e * e.transpose();
    }
    let mut mean = if items.len() == 1 {
        reference.clone()
    } else {
        items.iter().fold(DVector::zeros(n), |acc, g| acc + &g.mean) * w
    };
    if !wrap.is_empty() {
        mean = reference + &mean_dev;
        for &i in wrap {
            mean[i] = wrap_angle(mean[i]);
        }
    }
    GaussianDensity {
        mean,
        cov: symmetrize(cov * w),
    }
}

fn heading_components(dim: usize) -> Vec<usize> {
    (0..dim / SENSOR_DIM).map(|b| b * SENSOR_DIM + HEADING).collect()
}

/// Sample mean of the trajectories with spread-corrected covariance.
pub fn merge_trajectories(samples: &[SampleRecord]) -> GaussianDensity {
    let items: Vec<&GaussianDensity> = samples.iter().map(|s| &s.traj).collect();
    let wrap = heading_components(items[0].mean.len());
    merge_gaussians(&items, &wrap)
}

pub fn register_landmarks(samples: &[SampleRecord]) -> LandmarkRegistry {
    let mut keys: Vec<usize> = samples
        .iter()
        .flat_map(|s| s.first_indices.iter().copied())
        .collect();
    keys.sort_unstable();
    keys.dedup();
    let present = samples
        .iter()
        .map(|s| {
            let mut v = vec![false; keys.len()];
            for f in &s.first_indices {
                v[keys.binary_search(f).unwrap()] = true;
            }
            v
        })
        .collect();
    LandmarkRegistry { keys, present }
}

/// One Bernoulli per registry entry: `r` is the fraction of samples that kept
/// the landmark, the density is the mixture over those samples.
pub fn merge_landmarks_raw(samples: &[SampleRecord], registry: &LandmarkRegistry) -> MultiBernoulli {
    let gamma = samples.len() as f64;
    let mut comps = Vec::with_capacity(registry.len());
    for (i, key) in registry.keys.iter().enumerate() {
        let items: Vec<&GaussianDensity> = samples
            .iter()
            .filter_map(|s| {
                s.first_indices
                    .iter()
                    .position(|f| f == key)
                    .map(|j| &s.landmarks[j])
            })
            .collect();
        debug_assert_eq!(
            items.len(),
            registry.present.iter().filter(|p| p[i]).count()
        );
        comps.push(BernoulliComponent {
            r: items.len() as f64 / gamma,
            density: merge_gaussians(&items, &[]),
        });
    }
    MultiBernoulli::new(comps)
}

/// [`merge_landmarks_raw`] followed by pruning and merging of close components.
pub fn merge_landmarks(
    samples: &[SampleRecord],
    registry: &LandmarkRegistry,
    r_min: f64,
    dist_max: f64,
) -> MultiBernoulli {
    merge_landmarks_raw(samples, registry)
        .prune(r_min)
        .merge_close(dist_max)
}

/// Birth intensity thinned by the misdetection probability along `traj`
/// (`s_0 .. s_K`; `s_0` takes no measurement).
pub fn update_undetected_intensity(
    traj: &[SensorState],
    cfg: &ScenarioConfig,
) -> ThinnedPoissonIntensity {
    ThinnedPoissonIntensity {
        base: cfg.birth_intensity(),
        detection: cfg.detection(),
        sensor_positions: traj
            .iter()
            .skip(1)
            .map(|s| [s.position.x, s.position.y, s.position.z])
            .collect(),
    }
}

/// Means of the components with `r >= r_report`.
pub fn extract_map_estimate(mb: &MultiBernoulli, r_report: f64) -> Vec<Vector3<f64>> {
    mb.components
        .iter()
        .filter(|c| c.r >= r_report)
        .map(|c| Vector3::from_column_slice(c.density.mean.as_slice()))
        .collect()
}

#[derive(Debug, Clone)]
pub struct MergedPosterior {
    pub traj: GaussianDensity,
    pub map: MultiBernoulli,
    pub undetected: ThinnedPoissonIntensity,
    pub registry: LandmarkRegistry,
}

impl MergedPosterior {
    /// Mean trajectory as sensor states.
    pub fn trajectory(&self) -> Vec<SensorState> {
        self.traj
            .mean
            .as_slice()
            .chunks(SENSOR_DIM)
            .map(SensorState::from_slice)
            .collect()
    }

    /// Marginal standard deviation of every trajectory component.
    pub fn trajectory_std(&self) -> Vec<[f64; SENSOR_DIM]> {
        let d = self.traj.cov.diagonal();
        d.as_slice()
            .chunks(SENSOR_DIM)
            .map(|c| {
                let mut out = [0.0; SENSOR_DIM];
                for (o, v) in out.iter_mut().zip(c) {
                    *o = v.max(0.0).sqrt();
                }
                out
            })
            .collect()
    }
}

/// Full fusion of the kept samples.
pub fn merge_samples(
    samples: &[SampleRecord],
    cfg: &ScenarioConfig,
    r_min: f64,
    dist_max: f64,
) -> MergedPosterior {
    let traj = merge_trajectories(samples);
    let registry = register_landmarks(samples);
    let map = merge_landmarks(samples, &registry, r_min, dist_max);
    let states: Vec<SensorState> = traj
        .mean
        .as_slice()
        .chunks(SENSOR_DIM)
        .map(SensorState::from_slice)
        .collect();
    let undetected = update_undetected_intensity(&states, cfg);
    MergedPosterior {
        traj,
        map,
        undetected,
        registry,
    }
}

/// Registry index to sample-count map, handy for reporting.
pub fn registry_counts(registry: &LandmarkRegistry) -> BTreeMap<usize, usize> {
    registry
        .keys
        .iter()
        .enumerate()
        .map(|(i, k)| (*k, registry.present.iter().filter(|p| p[i]).count()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Preset;
    use proptest::prelude::*;

    fn g(mean: &[f64], cov: DMatrix<f64>) -> GaussianDensity {
        GaussianDensity {
            mean: DVector::from_column_slice(mean),
            cov,
        }
    }

    fn record(traj: GaussianDensity, lms: Vec<(usize, GaussianDensity)>) -> SampleRecord {
        SampleRecord {
            partition: Partition::singletons(0),
            psi: ExistenceVector {
                psi: Vec::new(),
                r: Vec::new(),
            },
            traj,
            first_indices: lms.iter().map(|(k, _)| *k).collect(),
            landmarks: lms.into_iter().map(|(_, g)| g).collect(),
        }
    }

    fn traj(offset: f64, p: f64) -> GaussianDensity {
        let mean: Vec<f64> = (0..10)
            .map(|i| {
                let v = i as f64 * 0.3 + offset;
                if i % SENSOR_DIM == HEADING {
                    wrap_angle(v)
                } else {
                    v
                }
            })
            .collect();
        g(&mean, DMatrix::identity(10, 10) * p)
    }

    #[test]
    fn single_sample_is_identity() {
        let t = traj(0.0, 0.2);
        let m = merge_trajectories(&[record(t.clone(), vec![])]);
        assert_eq!(m, t);
    }

    #[test]
    fn two_point_mixture() {
        let d = 0.8;
        let a = traj(-d / 2.0, 0.5);
        let b = traj(d / 2.0, 0.5);
        let m = merge_trajectories(&[record(a.clone(), vec![]), record(b, vec![])]);
        let half = DVector::from_element(10, d / 2.0);
        let expected_mean = &a.mean + &half;
        let expected_cov = &a.cov + &half * half.transpose();
        assert!((m.mean - expected_mean).amax() < 1e-12);
        assert!((m.cov - expected_cov).amax() < 1e-12);
    }

    #[test]
    fn heading_average_respects_wrap() {
        let mut a = traj(0.0, 0.1);
        let mut b = traj(0.0, 0.1);
        a.mean[3] = std::f64::consts::PI - 0.05;
        b.mean[3] = -std::f64::consts::PI + 0.05;
        let m = merge_trajectories(&[record(a, vec![]), record(b, vec![])]);
        assert!((m.mean[3].abs() - std::f64::consts::PI).abs() < 1e-12);
        assert!((m.cov[(3, 3)] - (0.1 + 0.0025)).abs() < 1e-12);
    }

    #[test]
    fn registry_examples() {
        let lm = g(&[1.0, 2.0, 3.0], DMatrix::identity(3, 3));
        let same: Vec<_> = (0..4)
            .map(|_| record(traj(0.0, 1.0), vec![(3, lm.clone()), (7, lm.clone())]))
            .collect();
        let reg = register_landmarks(&same);
        assert_eq!(reg.keys, vec![3, 7]);
        assert!(reg.present.iter().all(|p| p.iter().all(|&x| x)));
        let mb = merge_landmarks_raw(&same, &reg);
        assert!(mb.components.iter().all(|c| c.r == 1.0 && c.density == lm));

        let disjoint = vec![
            record(traj(0.0, 1.0), vec![(1, lm.clone()), (2, lm.clone())]),
            record(
                traj(0.0, 1.0),
                vec![(4, lm.clone()), (5, lm.clone()), (6, lm.clone())],
            ),
        ];
        let reg = register_landmarks(&disjoint);
        assert_eq!(reg.len(), 5);
        for (s, p) in disjoint.iter().zip(&reg.present) {
            assert_eq!(p.iter().filter(|&&x| x).count(), s.first_indices.len());
        }
    }

    #[test]
    fn existence_is_sample_fraction() {
        let lm = g(&[0.0, 0.0, 0.0], DMatrix::identity(3, 3));
        let samples: Vec<_> = (0..100)
            .map(|t| {
                let lms = if t < 37 { vec![(0, lm.clone())] } else { vec![] };
                record(traj(0.0, 1.0), lms)
            })
            .collect();
        let reg = register_landmarks(&samples);
        let mb = merge_landmarks_raw(&samples, &reg);
        assert_eq!(mb.components[0].r, 0.37);
    }

    #[test]
    fn thinning_examples() {
        let mut cfg = crate::models::ScenarioConfig::desk_preset(Preset::I);
        cfg.steps = 3;
        let s = SensorState::new(Vector3::new(0.0, 0.0, 0.0), 0.0, 0.0);
        let intensity = update_undetected_intensity(&[s; 4], &cfg);
        let near = Vector3::new(5.0, 0.0, 0.0);
        let far = Vector3::new(90.0, 90.0, 0.0);
        assert_eq!(intensity.eval(&far), cfg.lambda_rate);
        assert!((intensity.eval(&near) - cfg.lambda_rate * 0.1f64.powi(3)).abs() < 1e-20);
    }

    #[test]
    fn undetected_count_decreases_with_detection_probability() {
        let cfg0 = crate::models::ScenarioConfig::desk_preset(Preset::I);
        let traj = crate::graph::dead_reckoning(&cfg0, cfg0.steps);
        let mut last = f64::INFINITY;
        for pd in [0.1, 0.5, 0.9, 1.0] {
            let mut cfg = cfg0.clone();
            cfg.p_d = pd;
            let n = update_undetected_intensity(&traj, &cfg).expected_count(24);
            // Oracle: the same midpoint grid evaluated directly.
            let r = cfg.env_box;
            let h: Vec<f64> = (0..3).map(|i| (r.max[i] - r.min[i]) / 24.0).collect();
            let mut direct = 0.0;
            for i in 0..24 {
                for j in 0..24 {
                    for k in 0..24 {
                        let x = Vector3::new(
                            r.min[0] + (i as f64 + 0.5) * h[0],
                            r.min[1] + (j as f64 + 0.5) * h[1],
                            r.min[2] + (k as f64 + 0.5) * h[2],
                        );
                        let seen = traj[1..]
                            .iter()
                            .filter(|s| (x - s.position).norm() <= cfg.fov_radius)
                            .count();
                        direct += cfg.lambda_rate * (1.0 - pd).powi(seen as i32);
                    }
                }
            }
            direct *= h[0] * h[1] * h[2];
            assert!((n - direct).abs() < 1e-9 * direct.max(1.0));
            assert!(n < last);
            last = n;
        }
    }

    #[test]
    fn extract_examples() {
        let c = |r| BernoulliComponent {
            r,
            density: g(&[r, 0.0, 0.0], DMatrix::identity(3, 3)),
        };
        let mb = MultiBernoulli::new(vec![c(0.9), c(0.4)]);
        assert_eq!(extract_map_estimate(&mb, 0.5).len(), 1);
        assert_eq!(extract_map_estimate(&mb, 0.0).len(), 2);
        assert!(extract_map_estimate(&MultiBernoulli::default(), 0.5).is_empty());
    }

    proptest! {
        #[test]
        fn spread_term_is_psd(
            means in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 4), 1..6),
            scale in 0.01f64..3.0,
        ) {
            let items: Vec<GaussianDensity> = means
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    let a = DMatrix::from_fn(4, 4, |r, c| ((r * 7 + c * 3 + i) % 5) as f64 * 0.1);
                    g(m, &a * a.transpose() + DMatrix::identity(4, 4) * scale)
                })
                .collect();
            let refs: Vec<&GaussianDensity> = items.iter().collect();
            let merged = merge_gaussians(&refs, &[]);
            let avg = refs.iter().fold(DMatrix::zeros(4, 4), |acc, g| acc + &g.cov) / refs.len() as f64;
            let spread = &merged.cov - avg;
            let min_eig = spread.symmetric_eigen().eigenvalues.min();
            prop_assert!(min_eig > -1e-9);
            prop_assert!(merged.cov.clone().symmetric_eigen().eigenvalues.min() > 0.0);
        }

        #[test]
        fn identical_samples_merge_to_themselves(n in 1usize..8, off in -3.0f64..3.0) {
            let t = traj(off, 0.3);
            let lm = g(&[off, 1.0, 2.0], DMatrix::identity(3, 3) * 0.2);
            let samples: Vec<_> = (0..n).map(|_| record(t.clone(), vec![(5, lm.clone())])).collect();
            let m = merge_trajectories(&samples);
            prop_assert!((m.mean - &t.mean).amax() < 1e-12);
            prop_assert!((m.cov - &t.cov).amax() < 1e-12);
            let reg = register_landmarks(&samples);
            let mb = merge_landmarks_raw(&samples, &reg);
            prop_assert_eq!(mb.components[0].r, 1.0);
            prop_assert!((&mb.components[0].density.mean - &lm.mean).amax() < 1e-12);
        }
    }
}
