//! End-to-end acceptance checks. Runs as a plain program so that every
//! criterion prints its own PASS/FAIL line. Pass criterion numbers as
//! arguments to run a subset.

use nalgebra::{DMatrix, DVector, Vector3};
use pmbm_slam::association::{
    da_round, exact_posterior, gibbs_candidates, sample_existence, CellModel, GibbsMove, Partition,
    SamplerMode, SamplerParams,
};
use pmbm_slam::fixtures::{association_fixtures, linear_chain, noiseless_config, shared_visibility};
use pmbm_slam::graph::{build_graph, dead_reckoning, optimize, OptimizerSettings};
use pmbm_slam::harness::{
    run_monte_carlo, run_oracle_suite, OracleConfig, PresetScale, RunConfig, RunReport,
};
use pmbm_slam::merge::{merge_landmarks_raw, merge_trajectories, register_landmarks, SampleRecord};
use pmbm_slam::metrics::{gospa, GospaParams};
use pmbm_slam::models::{
    generate_scenario, los_mean, measurement_jacobians, measurement_mean, motion_jacobian, motion_mean,
    wrap_angle, los_jacobian, Preset, ScenarioConfig, SensorState, Vector5,
};
use pmbm_slam::association::ExistenceVector;
use pmbm_slam::rfs::GaussianDensity;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::process::Command;
use std::time::Instant;

type Outcome = (bool, String);

fn main() {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let all: [(usize, &str, fn() -> Outcome); 13] = [
        (1, "exact association posterior recovery", c01_exact_posterior),
        (2, "Gibbs ratio consistency", c02_gibbs_ratio),
        (3, "sampler-combination NMI ordering", c03_nmi_ordering),
        (4, "sampler-combination GOSPA ordering", c04_gospa_ordering),
        (5, "linear GraphSLAM exactness", c05_linear_chain),
        (6, "Jacobian and gradient checks", c06_jacobians),
        (7, "cost monotonicity", c07_cost_monotone),
        (8, "GOSPA oracle", c08_gospa),
        (9, "noiseless identifiability", c09_noiseless),
        (10, "existence sampling law", c10_existence),
        (11, "marginalization moments", c11_merge_moments),
        (12, "determinism", c12_determinism),
        (13, "scenario difficulty trend", c13_difficulty),
    ];
    let mut failed = Vec::new();
    for (n, name, f) in all {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = f();
        println!(
            "criterion {n:>2} {:<4} {name}: {detail} [{:.1} s]",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        if !ok {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

fn c01_exact_posterior() -> Outcome {
    let cfg = OracleConfig {
        samples: 100_000,
        seed: 2024,
        ..OracleConfig::default()
    };
    let res = run_oracle_suite(&cfg).expect("fixtures enumerate");
    let ok = res.len() >= 3
        && res.iter().all(|r| r.pass && r.tv <= 0.05 && r.seconds <= 120.0 && r.measurements <= 6);
    let detail = res
        .iter()
        .map(|r| format!("{} tv {:.4} ({:.1} s)", r.fixture, r.tv, r.seconds))
        .collect::<Vec<_>>()
        .join(", ");
    (ok, detail)
}

fn apply(p: &Partition, m: usize, mv: GibbsMove) -> Partition {
    let mut q = p.clone();
    match mv {
        GibbsMove::Stay => {}
        GibbsMove::NewCell => q.move_index(m, None),
        GibbsMove::Join(g) => q.move_index(m, Some(p.cell(g)[0])),
        GibbsMove::Swap { other, .. } => q.swap_indices(m, other),
    }
    q
}

/// Partition log weight recomputed from scratch with compensated summation.
fn full_weight(p: &Partition, model: &mut CellModel<'_>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for cell in p.cells() {
        let x = model.get(cell).log_l;
        let t = sum + x;
        if !t.is_finite() {
            return t;
        }
        comp += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    sum + comp
}

fn c02_gibbs_ratio() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut checked, mut worst) = (0usize, 0.0f64);
    let mut check = |model: &mut CellModel<'_>, params: &SamplerParams, rounds: usize, per_round: usize, rng: &mut ChaCha8Rng| {
        let mut p = Partition::singletons(model.len());
        for _ in 0..rounds {
            da_round(&mut p, model, params, rng);
            for _ in 0..per_round {
                let m = rng.random_range(0..p.num_indices());
                let cands: Vec<_> = gibbs_candidates(&p, m, model, params.gate_distance)
                    .into_iter()
                    .filter(|c| c.mv != GibbsMove::Stay)
                    .collect();
                if cands.is_empty() {
                    continue;
                }
                let c = cands[rng.random_range(0..cands.len())];
                let full = full_weight(&apply(&p, m, c.mv), model) - full_weight(&p, model);
                if c.log_w.is_finite() || full.is_finite() {
                    worst = worst.max((c.log_w - full).abs());
                    checked += 1;
                }
            }
        }
    };
    for fx in association_fixtures() {
        let mut model = CellModel::new(&fx.batch, &fx.traj, &fx.cfg);
        check(&mut model, &SamplerParams::exact(), 50, 4, &mut rng);
    }
    for preset in [Preset::I, Preset::II, Preset::IV] {
        let cfg = ScenarioConfig::desk_preset(preset);
        let (_, batch) = generate_scenario(&cfg, &mut rng);
        let traj = dead_reckoning(&cfg, cfg.steps);
        let mut model = CellModel::new(&batch, &traj, &cfg);
        check(&mut model, &SamplerParams::default(), 10, 20, &mut rng);
    }
    (checked >= 1000 && worst < 1e-10, format!("{checked} moves, max |delta| {worst:.2e}"))
}

fn desk(preset: Preset, mode: SamplerMode, seed: u64) -> Vec<RunReport> {
    let mut cfg = RunConfig {
        preset,
        scale: PresetScale::Desk,
        runs: 25,
        seed,
        ..RunConfig::default()
    };
    cfg.sampler.mode = mode;
    run_monte_carlo(&cfg)
        .runs
        .into_iter()
        .map(|r| r.expect("desk run"))
        .collect()
}

fn desk_iv() -> &'static [Vec<RunReport>; 3] {
    static CELL: std::sync::OnceLock<[Vec<RunReport>; 3]> = std::sync::OnceLock::new();
    CELL.get_or_init(|| {
        [SamplerMode::Combined, SamplerMode::GibbsOnly, SamplerMode::MhOnly].map(|m| desk(Preset::IV, m, 500))
    })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// One-sided sign test p-value for "b tends to exceed a" over paired
/// samples, ties dropped.
fn sign_test(a: &[f64], b: &[f64]) -> (usize, usize, f64) {
    let wins_b = a.iter().zip(b).filter(|(x, y)| y > x).count();
    let wins_a = a.iter().zip(b).filter(|(x, y)| x > y).count();
    let n = wins_a + wins_b;
    let mut p = 0.0;
    for k in wins_b..=n {
        p += binom(n, k) * 0.5f64.powi(n as i32);
    }
    (wins_a, wins_b, if n == 0 { 1.0 } else { p })
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Combined must score at least as well as each competitor on average, and
/// no competitor may be significantly better under a paired sign test.
fn ordering(metric: impl Fn(&RunReport) -> f64, higher_is_better: bool) -> Outcome {
    let runs = desk_iv();
    let vals: Vec<Vec<f64>> = runs
        .iter()
        .map(|rs| rs.iter().map(|r| if higher_is_better { metric(r) } else { -metric(r) }).collect())
        .collect();
    let mut ok = true;
    let mut parts = vec![format!("combined {:.4}", mean(runs[0].iter().map(&metric)))];
    for (i, name) in [(1, "gibbs-only"), (2, "mh-only")] {
        let m = mean(runs[i].iter().map(&metric));
        let (w_comb, w_other, p_other) = sign_test(&vals[0], &vals[i]);
        let (_, _, p_comb) = sign_test(&vals[i], &vals[0]);
        // Values are sign-flipped for lower-is-better metrics.
        let mean_ok = mean(vals[0].iter().copied()) >= mean(vals[i].iter().copied());
        ok &= mean_ok && p_other >= 0.05;
        parts.push(format!(
            "{name} {m:.4} (combined better {w_comb}, worse {w_other}; p(combined better) {p_comb:.3}, p({name} better) {p_other:.3})"
        ));
    }
    (ok, parts.join("; "))
}

fn c03_nmi_ordering() -> Outcome {
    ordering(|r| r.nmi_tail, true)
}

fn c04_gospa_ordering() -> Outcome {
    ordering(|r| r.gospa.total, false)
}

fn c05_linear_chain() -> Outcome {
    let mut worst = (0.0f64, 0.0f64, 0usize);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 1..8 {
        let odo: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..=k).map(|_| rng.random_range(-3.0..3.0)).collect();
        let chain = linear_chain(&odo, &y);
        let (mean, cov) = chain.gls();
        let res = optimize(&chain.problem, &DVector::zeros(k + 1), &OptimizerSettings::default()).unwrap();
        let em = (&res.mean - &mean).amax() / mean.amax();
        let ec = (&res.cov - &cov).amax() / cov.amax();
        worst = (worst.0.max(em), worst.1.max(ec), worst.2.max(res.iterations));
    }
    (
        worst.0 < 1e-8 && worst.1 < 1e-8 && worst.2 <= 2,
        format!("mean rel {:.1e}, cov rel {:.1e}, max {} iterations", worst.0, worst.1, worst.2),
    )
}

fn numeric(f: impl Fn(&[f64]) -> Vector5, at: &[f64]) -> DMatrix<f64> {
    let h = 1e-5;
    DMatrix::from_fn(5, at.len(), |r, c| {
        let mut p = at.to_vec();
        let mut m = at.to_vec();
        p[c] += h;
        m[c] -= h;
        let mut d = f(&p)[r] - f(&m)[r];
        if r >= 1 {
            d = wrap_angle(d);
        }
        d / (2.0 * h)
    })
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-12)
}

fn dyn_of<const R: usize, const C: usize>(m: &nalgebra::SMatrix<f64, R, C>) -> DMatrix<f64> {
    DMatrix::from_column_slice(R, C, m.as_slice())
}

fn c06_jacobians() -> Outcome {
    let cfg = ScenarioConfig::desk_preset(Preset::III);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    let mut states = 0;
    while states < 100 {
        let x = Vector3::new(rng.random_range(-60.0..60.0), rng.random_range(-60.0..60.0), rng.random_range(0.0..20.0));
        let s = SensorState::new(
            Vector3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-1.0..1.0)),
            rng.random_range(-3.1..3.1),
            rng.random_range(-5.0..5.0),
        );
        if (x - s.position).xy().norm() < 1.0 || (x - cfg.bs()).xy().norm() < 1.0 {
            continue;
        }
        states += 1;
        let sv: Vec<f64> = s.to_vector().iter().copied().collect();
        let (hl, hs) = measurement_jacobians(&x, &s, &cfg).unwrap();
        let nl = numeric(|v| measurement_mean(&Vector3::new(v[0], v[1], v[2]), &s, &cfg).unwrap(), x.as_slice());
        let ns = numeric(|v| measurement_mean(&x, &SensorState::from_slice(v), &cfg).unwrap(), &sv);
        let nlos = numeric(|v| los_mean(&SensorState::from_slice(v), &cfg).unwrap(), &sv);
        let nf = numeric(|v| motion_mean(&SensorState::from_slice(v), &cfg).to_vector(), &sv);
        for (a, b) in [
            (dyn_of(&hl), nl),
            (dyn_of(&hs), ns),
            (dyn_of(&los_jacobian(&s, &cfg).unwrap()), nlos),
            (dyn_of(&motion_jacobian(&s, &cfg)), nf),
        ] {
            worst = worst.max(rel(&a, &b));
        }
    }

    let mut grad_worst: f64 = 0.0;
    for seed in 0..3 {
        let sc = ScenarioConfig::desk_preset(Preset::II);
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (truth, batch) = generate_scenario(&sc, &mut r);
        let p = truth.associations.clone();
        let psi = ExistenceVector {
            psi: p.cells().iter().map(|c| c.len() > 1).collect(),
            r: vec![1.0; p.num_cells()],
        };
        let traj = dead_reckoning(&sc, sc.steps);
        let prob = build_graph(&p, &psi, &traj, &batch, &sc).unwrap();
        let q0 = prob.initial_state(&traj, &[]);
        let opt = optimize(&prob, &q0, &OptimizerSettings::default()).unwrap();
        let mut q = opt.mean.clone();
        for v in q.iter_mut() {
            *v += 0.05 * r.random_range(-1.0..1.0);
        }
        let sys = prob.linearize(&q).unwrap();
        let fd = DVector::from_fn(q.len(), |i, _| {
            let h = 1e-6;
            let mut a = q.clone();
            let mut b = q.clone();
            a[i] += h;
            b[i] -= h;
            (prob.cost(&a) - prob.cost(&b)) / (2.0 * h)
        });
        let two_b = 2.0 * &sys.b;
        grad_worst = grad_worst.max((&fd - &two_b).norm() / two_b.norm());
    }
    (
        worst < 1e-5 && grad_worst < 1e-6,
        format!("{states} states, Jacobian rel {worst:.1e}; b vs half gradient rel {grad_worst:.1e}"),
    )
}

fn c07_cost_monotone() -> Outcome {
    let mut traces = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for k in 1..6 {
        let odo: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..=k).map(|_| rng.random_range(-3.0..3.0)).collect();
        let chain = linear_chain(&odo, &y);
        let q0 = DVector::from_fn(k + 1, |_, _| rng.random_range(-10.0..10.0));
        traces.push(optimize(&chain.problem, &q0, &OptimizerSettings::default()).unwrap().cost_trace);
    }
    for k in 2..6 {
        let (fx, p, psi) = shared_visibility(k);
        let prob = build_graph(&p, &psi, &fx.traj, &fx.batch, &fx.cfg).unwrap();
        let q0 = prob.initial_state(&fx.traj, &[]);
        traces.push(optimize(&prob, &q0, &OptimizerSettings::default()).unwrap().cost_trace);
    }
    for preset in [Preset::I, Preset::II, Preset::III, Preset::IV] {
        for seed in 0..3 {
            let sc = ScenarioConfig::desk_preset(preset);
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let (truth, batch) = generate_scenario(&sc, &mut r);
            let p = truth.associations.clone();
            let psi = ExistenceVector {
                psi: p.cells().iter().map(|c| c.len() > 1 || r.random_bool(0.5)).collect(),
                r: vec![1.0; p.num_cells()],
            };
            let traj = dead_reckoning(&sc, sc.steps);
            let prob = build_graph(&p, &psi, &traj, &batch, &sc).unwrap();
            let q0 = prob.initial_state(&traj, &[]);
            traces.push(optimize(&prob, &q0, &OptimizerSettings::default()).unwrap().cost_trace);
        }
    }
    let steps: usize = traces.iter().map(|t| t.len().saturating_sub(1)).sum();
    let violations: usize = traces.iter().map(|t| t.windows(2).filter(|w| w[1] > w[0]).count()).sum();
    (violations == 0, format!("{} optimizations, {steps} accepted steps, {violations} increases", traces.len()))
}

/// GOSPA with alpha = 2 by enumerating every partial matching.
fn brute_gospa(x: &[Vector3<f64>], y: &[Vector3<f64>], c: f64, p: f64) -> f64 {
    fn rec(x: &[Vector3<f64>], y: &[Vector3<f64>], i: usize, used: &mut Vec<bool>, c: f64, p: f64) -> f64 {
        if i == x.len() {
            let unmatched_y = used.iter().filter(|u| !**u).count();
            return unmatched_y as f64 * c.powf(p) / 2.0;
        }
        let mut best = c.powf(p) / 2.0 + rec(x, y, i + 1, used, c, p);
        for j in 0..y.len() {
            if !used[j] {
                used[j] = true;
                let d = (x[i] - y[j]).norm();
                if d < c {
                    best = best.min(d.powf(p) + rec(x, y, i + 1, used, c, p));
                }
                used[j] = false;
            }
        }
        best
    }
    rec(x, y, 0, &mut vec![false; y.len()], c, p).powf(1.0 / p)
}

fn c08_gospa() -> Outcome {
    let params = GospaParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    let pt = |rng: &mut ChaCha8Rng| Vector3::new(rng.random_range(0.0..8.0), rng.random_range(0.0..8.0), rng.random_range(0.0..3.0));
    for _ in 0..500 {
        let nx = rng.random_range(0..=4);
        let ny = rng.random_range(0..=4);
        let x: Vec<_> = (0..nx).map(|_| pt(&mut rng)).collect();
        let y: Vec<_> = (0..ny).map(|_| pt(&mut rng)).collect();
        let a = gospa(&x, &y, params).total;
        let b = brute_gospa(&x, &y, params.c, params.p);
        worst = worst.max((a - b).abs() / b.max(1.0));
    }
    let mut missed_worst: f64 = 0.0;
    for n in 1..=4 {
        let x: Vec<_> = (0..n).map(|_| pt(&mut rng)).collect();
        let expected = (params.c * params.c / params.alpha * n as f64).sqrt();
        missed_worst = missed_worst.max((gospa(&x, &[], params).total - expected).abs());
    }
    (
        worst < 1e-12 && missed_worst < 1e-12,
        format!("500 instances, max rel diff {worst:.1e}; missed-only max diff {missed_worst:.1e}"),
    )
}

fn c09_noiseless() -> Outcome {
    let cfg = RunConfig {
        scenario: Some(noiseless_config()),
        runs: 25,
        seed: 900,
        ..RunConfig::default()
    };
    let mc = run_monte_carlo(&cfg);
    let good = mc
        .runs
        .iter()
        .filter(|r| matches!(r, Ok(r) if r.nmi_final == 1.0 && r.gospa.total < 0.05))
        .count();
    let worst = mc
        .runs
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .map(|r| r.gospa.total)
        .fold(0.0, f64::max);
    (good >= 24, format!("{good}/25 runs identified, worst GOSPA {worst:.2e} m"))
}

fn c10_existence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let n = 100_000;
    let mut cells_checked = 0;
    let mut worst_z: f64 = 0.0;
    let mut multi_ok = true;
    for fx in association_fixtures() {
        let mut model = CellModel::new(&fx.batch, &fx.traj, &fx.cfg);
        let post = exact_posterior(&mut model).unwrap();
        // The most probable partition that mixes singletons and larger cells.
        let p = post
            .iter()
            .filter(|(p, _)| p.cells().iter().any(|c| c.len() > 1) && p.cells().iter().any(|c| c.len() == 1))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0
            .clone();
        let mut hits = vec![0usize; p.num_cells()];
        for _ in 0..n {
            let e = sample_existence(&p, &mut model, 0.0, &mut rng);
            for (h, &on) in hits.iter_mut().zip(&e.psi) {
                *h += on as usize;
            }
        }
        for (i, cell) in p.cells().iter().enumerate() {
            if cell.len() > 1 {
                multi_ok &= hits[i] == n;
                continue;
            }
            let d = model.get(cell).detect_term;
            let r = d.exp() / (d.exp() + model.log_c.exp());
            let sd = (r * (1.0 - r) / n as f64).sqrt();
            let f = hits[i] as f64 / n as f64;
            worst_z = worst_z.max(if sd > 0.0 { (f - r).abs() / sd } else if f == r { 0.0 } else { f64::INFINITY });
            cells_checked += 1;
        }
    }
    (
        multi_ok && worst_z <= 3.0 && cells_checked > 0,
        format!("{cells_checked} singleton cells, worst |z| {worst_z:.2}; multi-index cells always exist: {multi_ok}"),
    )
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> GaussianDensity {
    let mean = DVector::from_fn(n, |_, _| rng.random_range(-scale..scale));
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    GaussianDensity { mean, cov: &a * a.transpose() }
}

fn record(traj: GaussianDensity, landmarks: Vec<(usize, GaussianDensity)>) -> SampleRecord {
    SampleRecord {
        partition: Partition::singletons(0),
        psi: ExistenceVector { psi: vec![], r: vec![] },
        traj,
        first_indices: landmarks.iter().map(|l| l.0).collect(),
        landmarks: landmarks.into_iter().map(|l| l.1).collect(),
    }
}

fn c11_merge_moments() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    let two_point = |a: &GaussianDensity, b: &GaussianDensity| {
        let d = &a.mean - &b.mean;
        ((&a.mean + &b.mean) / 2.0, (&a.cov + &b.cov) / 2.0 + &d * d.transpose() / 4.0)
    };
    for _ in 0..50 {
        // Headings kept small so that no wrapping is involved.
        let mut ta = gaussian(&mut rng, 15, 5.0);
        let mut tb = gaussian(&mut rng, 15, 5.0);
        for k in 0..3 {
            ta.mean[5 * k + 3] *= 0.1;
            tb.mean[5 * k + 3] *= 0.1;
        }
        let la = gaussian(&mut rng, 3, 50.0);
        let lb = gaussian(&mut rng, 3, 50.0);
        let samples = [record(ta.clone(), vec![(4, la.clone())]), record(tb.clone(), vec![(4, lb.clone())])];
        let t = merge_trajectories(&samples);
        let (m, c) = two_point(&ta, &tb);
        worst = worst.max((&t.mean - m).amax()).max((&t.cov - c).amax() / t.cov.amax());
        let mb = merge_landmarks_raw(&samples, &register_landmarks(&samples));
        let (m, c) = two_point(&la, &lb);
        let comp = &mb.components[0];
        worst = worst.max((&comp.density.mean - m).amax() / 50.0).max((&comp.density.cov - &c).amax() / c.amax());
        worst = worst.max((comp.r - 1.0).abs());
    }
    let mut multiples = true;
    for gamma in [3usize, 7, 10, 100] {
        let samples: Vec<SampleRecord> = (0..gamma)
            .map(|_| {
                let keep: Vec<usize> = (0..5).filter(|_| rng.random_bool(0.6)).collect();
                let lms = keep.into_iter().map(|k| (k, gaussian(&mut rng, 3, 10.0))).collect();
                record(gaussian(&mut rng, 5, 1.0), lms)
            })
            .collect();
        let reg = register_landmarks(&samples);
        let mb = merge_landmarks_raw(&samples, &reg);
        for (i, comp) in mb.components.iter().enumerate() {
            let count = reg.present.iter().filter(|p| p[i]).count();
            multiples &= comp.r == count as f64 / gamma as f64;
        }
    }
    (
        worst < 1e-12 && multiples,
        format!("max rel deviation {worst:.1e}; r exact multiples of 1/gamma: {multiples}"),
    )
}

fn c12_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    std::fs::write(
        &config,
        r#"{"preset": "IV", "scale": "desk", "outer_iters": 40, "gamma": 20, "runs": 6, "seed": 12}"#,
    )
    .unwrap();
    let mut files = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("out{threads}"));
        let status = Command::new(env!("CARGO_BIN_EXE_slam"))
            .args(["run", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .env("RAYON_NUM_THREADS", threads)
            .output()
            .expect("slam binary");
        if !status.status.success() {
            return (false, String::from_utf8_lossy(&status.stderr).into_owned());
        }
        files.push(std::fs::read(out.join("runs.csv")).unwrap());
    }
    let same = files[0] == files[1];
    (same && !files[0].is_empty(), format!("runs.csv {} bytes, identical with 1 and 4 worker threads: {same}", files[0].len()))
}

fn c13_difficulty() -> Outcome {
    let easy = desk(Preset::I, SamplerMode::Combined, 1300);
    let hard = &desk_iv()[0];
    let rmse = |rs: &[RunReport]| mean(rs.iter().map(|r| r.rmse_position * r.rmse_position)).sqrt();
    let g = |rs: &[RunReport]| mean(rs.iter().map(|r| r.gospa.total));
    let (r1, r4, g1, g4) = (rmse(&easy), rmse(hard), g(&easy), g(hard));
    (
        r1 <= r4 && g1 <= g4,
        format!("position RMSE I {r1:.3} m vs IV {r4:.3} m; GOSPA I {g1:.3} m vs IV {g4:.3} m"),
    )
}
