//! Data-association sampling over measurement partitions.
//!
//! A [`Partition`] groups flat measurement ids into cells, one per source.
//! [`CellModel`] scores cells against a fixed trajectory, and the sweeps in
//! this module move the partition around: Gibbs moves relocate or swap one
//! index, split/merge moves act on whole cells.

mod kmeans;
mod likelihood;
mod partition;

pub use kmeans::{kmeans_pp_split, seeded_split, split_probability};
pub use likelihood::{cell_log_likelihood, partition_log_weight, CellLikelihood, CellModel};
pub use partition::{enumerate_partitions, Partition, PartitionError, ENUMERATION_LIMIT};

pub(crate) use likelihood::logsumexp;
use partition::shares_step;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Which sweeps one sampling round runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    /// Gibbs sweep followed by a split/merge sweep.
    #[default]
    Combined,
    GibbsOnly,
    MhOnly,
}

impl std::str::FromStr for SamplerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "combined" => Ok(Self::Combined),
            "gibbs_only" | "gibbs" => Ok(Self::GibbsOnly),
            "mh_only" | "mh" => Ok(Self::MhOnly),
            other => Err(format!("unknown sampler mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerParams {
    pub mode: SamplerMode,
    /// Moves whose candidate cell lies farther than this (m) from the moved
    /// measurement are skipped. `None` disables gating.
    pub gate_distance: Option<f64>,
    /// Singletons with existence probability below this are declared clutter
    /// without drawing.
    pub psi_floor: f64,
    /// Corrects Gibbs swaps and k-means++ splits for their asymmetric
    /// proposals so that every move leaves the partition posterior invariant.
    pub hastings_correction: bool,
    /// Random subset of ordered pairs per split/merge sweep; `None` runs the
    /// full double loop.
    pub max_mh_proposals: Option<usize>,
}

impl Default for SamplerParams {
    fn default() -> Self {
        Self {
            mode: SamplerMode::Combined,
            gate_distance: Some(30.0),
            psi_floor: 1e-4,
            hastings_correction: true,
            max_mh_proposals: None,
        }
    }
}

impl SamplerParams {
    /// No gating, no proposal cap.
    pub fn exact() -> Self {
        Self {
            gate_distance: None,
            ..Self::default()
        }
    }
}

/// One candidate action for a single index in a Gibbs step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GibbsMove {
    Stay,
    NewCell,
    /// Join the cell at this position.
    Join(usize),
    /// Trade places with `other`, the same-step index of cell `cell`.
    Swap { cell: usize, other: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsCandidate {
    pub mv: GibbsMove,
    /// Log of the posterior ratio between the moved and the current partition.
    pub log_w: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    let r = num - den;
    if r.is_nan() {
        f64::NEG_INFINITY
    } else {
        r
    }
}

fn gated(model: &mut CellModel<'_>, cell: &[usize], at: &Vector3<f64>, gate: Option<f64>) -> bool {
    match gate {
        Some(g) => (model.get(cell).birth_mean - at).norm() > g,
        None => false,
    }
}

fn same_step_member(cell: &[usize], k: usize, times: &[usize]) -> Option<usize> {
    let pos = cell.partition_point(|&x| times[x] < k);
    (pos < cell.len() && times[cell[pos]] == k).then(|| cell[pos])
}

fn with_inserted(cell: &[usize], m: usize) -> Vec<usize> {
    let mut v = Vec::with_capacity(cell.len() + 1);
    let pos = cell.partition_point(|&x| x < m);
    v.extend_from_slice(&cell[..pos]);
    v.push(m);
    v.extend_from_slice(&cell[pos..]);
    v
}

fn without(cell: &[usize], m: usize) -> Vec<usize> {
    cell.iter().copied().filter(|&x| x != m).collect()
}

/// All moves of index `m` with their unnormalized log weights, following the
/// ratio form: only the two touched cells enter each weight. Moves that
/// reproduce the current partition a second time, and gated moves, are left
/// out.
pub fn gibbs_candidates(
    p: &Partition,
    m: usize,
    model: &mut CellModel<'_>,
    gate: Option<f64>,
) -> Vec<GibbsCandidate> {
    let beta = p.owner(m);
    let cell_b = p.cell(beta).to_vec();
    let singleton = cell_b.len() == 1;
    let k = model.times[m];
    let at = model.feature(m);
    let lb = model.get(&cell_b).log_l;
    let beta_minus = without(&cell_b, m);
    let lbm = if singleton {
        CellModel::empty()
    } else {
        model.get(&beta_minus).log_l
    };

    let mut out = Vec::with_capacity(p.num_cells() + 1);
    out.push(GibbsCandidate {
        mv: GibbsMove::Stay,
        log_w: 0.0,
    });
    if !singleton {
        let lm = model.get(&[m]).log_l;
        out.push(GibbsCandidate {
            mv: GibbsMove::NewCell,
            log_w: ratio(lbm + lm, lb),
        });
    }
    for gamma in 0..p.num_cells() {
        if gamma == beta {
            continue;
        }
        let cell_g = p.cell(gamma);
        if gated(model, cell_g, &at, gate) {
            continue;
        }
        let lg = model.get(cell_g).log_l;
        match same_step_member(cell_g, k, &model.times) {
            None => {
                let joined = with_inserted(cell_g, m);
                let lj = model.get(&joined).log_l;
                out.push(GibbsCandidate {
                    mv: GibbsMove::Join(gamma),
                    log_w: ratio(lbm + lj, lb + lg),
                });
            }
            Some(other) => {
                if singleton && cell_g.len() == 1 {
                    continue;
                }
                let b_new = with_inserted(&beta_minus, other);
                let g_new = with_inserted(&without(cell_g, other), m);
                let l_b = model.get(&b_new).log_l;
                let l_g = model.get(&g_new).log_l;
                out.push(GibbsCandidate {
                    mv: GibbsMove::Swap { cell: gamma, other },
                    log_w: ratio(l_b + l_g, lb + lg),
                });
            }
        }
    }
    out
}

/// Draws an index with probability proportional to `exp(log_w)`.
fn sample_log_weights<R: Rng + ?Sized>(log_w: &[f64], rng: &mut R) -> Option<usize> {
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    if max == f64::INFINITY {
        let inf: Vec<usize> = (0..log_w.len()).filter(|&i| log_w[i] == max).collect();
        return Some(inf[rng.random_range(0..inf.len())]);
    }
    let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, wi) in w.iter().enumerate() {
        if u < *wi {
            return Some(i);
        }
        u -= wi;
    }
    w.iter().rposition(|&x| x > 0.0)
}

fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    if log_ratio.is_nan() || log_ratio == f64::NEG_INFINITY {
        return false;
    }
    rng.random::<f64>().ln() < log_ratio
}

enum Reverse {
    NewCell,
    Join(usize),
    Swap(usize),
}

/// One Gibbs step for index `m`. Returns `true` when the partition changed.
pub fn gibbs_step<R: Rng + ?Sized>(
    p: &mut Partition,
    m: usize,
    model: &mut CellModel<'_>,
    params: &SamplerParams,
    rng: &mut R,
) -> bool {
    let cands = gibbs_candidates(p, m, model, params.gate_distance);
    let log_w: Vec<f64> = cands.iter().map(|c| c.log_w).collect();
    let Some(idx) = sample_log_weights(&log_w, rng) else {
        return false;
    };
    let chosen = cands[idx];
    let beta_cell = p.cell(p.owner(m)).to_vec();
    let singleton = beta_cell.len() == 1;
    let anchor = beta_cell.iter().copied().find(|&x| x != m);
    let reverse = match chosen.mv {
        GibbsMove::Stay => return false,
        GibbsMove::NewCell => {
            p.move_index(m, None);
            Reverse::Join(anchor.expect("non-singleton cell"))
        }
        GibbsMove::Join(gamma) => {
            let target = p.cell(gamma)[0];
            p.move_index(m, Some(target));
            if singleton {
                Reverse::NewCell
            } else {
                Reverse::Join(anchor.unwrap())
            }
        }
        GibbsMove::Swap { other, .. } => {
            p.swap_indices(m, other);
            Reverse::Swap(other)
        }
    };
    if !params.hastings_correction {
        return true;
    }

    let back = gibbs_candidates(p, m, model, params.gate_distance);
    let reverse_ok = back.iter().any(|c| {
        c.log_w > f64::NEG_INFINITY
            && match (&reverse, c.mv) {
                (Reverse::NewCell, GibbsMove::NewCell) => true,
                (Reverse::Join(a), GibbsMove::Join(g)) => p.owner(*a) == g,
                (Reverse::Swap(o), GibbsMove::Swap { other, .. }) => *o == other,
                _ => false,
            }
    });
    let back_w: Vec<f64> = back.iter().map(|c| c.log_w).collect();
    let log_acc = logsumexp(&log_w) - logsumexp(&back_w) - chosen.log_w;
    if reverse_ok && accept(log_acc, rng) {
        return true;
    }
    match reverse {
        Reverse::NewCell => p.move_index(m, None),
        Reverse::Join(a) => p.move_index(m, Some(a)),
        Reverse::Swap(o) => p.swap_indices(m, o),
    }
    false
}

/// One pass of Gibbs steps over every index in flat `(k, alpha)` order.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    p: &mut Partition,
    model: &mut CellModel<'_>,
    params: &SamplerParams,
    rng: &mut R,
) {
    for m in 0..p.num_indices() {
        gibbs_step(p, m, model, params, rng);
    }
    debug_assert!(p.is_valid(&model.times));
}

fn features(model: &CellModel<'_>, cell: &[usize]) -> Vec<Vector3<f64>> {
    cell.iter().map(|&m| model.feature(m)).collect()
}

/// Split/merge proposal for the ordered pair `(a, b)`.
pub fn mh_step<R: Rng + ?Sized>(
    p: &mut Partition,
    a: usize,
    b: usize,
    model: &mut CellModel<'_>,
    params: &SamplerParams,
    rng: &mut R,
) -> bool {
    let (ca, cb) = (p.owner(a), p.owner(b));
    if ca == cb {
        let cell = p.cell(ca).to_vec();
        let pts = features(model, &cell);
        let assign = kmeans_pp_split(&pts, rng);
        let ia = cell.binary_search(&a).unwrap();
        let ib = cell.binary_search(&b).unwrap();
        if params.hastings_correction && assign[ia] == assign[ib] {
            return false;
        }
        let mut first = Vec::new();
        let mut second = Vec::new();
        for (&m, &s) in cell.iter().zip(&assign) {
            if s {
                second.push(m);
            } else {
                first.push(m);
            }
        }
        let l1 = model.get(&first);
        let l2 = model.get(&second);
        let lc = model.get(&cell).log_l;
        let mut log_ratio = ratio(l1.log_l + l2.log_l, lc);
        if params.hastings_correction {
            if let Some(g) = params.gate_distance {
                if (l1.birth_mean - l2.birth_mean).norm() > g {
                    return false;
                }
            }
            log_ratio -= split_probability(&pts, &assign).ln();
        }
        if accept(log_ratio, rng) {
            p.split_cell(ca, first, second);
            return true;
        }
        false
    } else {
        let (cell_a, cell_b) = (p.cell(ca).to_vec(), p.cell(cb).to_vec());
        if shares_step(&cell_a, &cell_b, &model.times) {
            return false;
        }
        let la = model.get(&cell_a);
        let lb = model.get(&cell_b);
        if let Some(g) = params.gate_distance {
            if (la.birth_mean - lb.birth_mean).norm() > g {
                return false;
            }
        }
        let mut merged = [cell_a.as_slice(), cell_b.as_slice()].concat();
        merged.sort_unstable();
        let lm = model.get(&merged).log_l;
        let mut log_ratio = ratio(lm, la.log_l + lb.log_l);
        if params.hastings_correction {
            let pts = features(model, &merged);
            let target: Vec<bool> = merged.iter().map(|x| cell_b.binary_search(x).is_ok()).collect();
            log_ratio += split_probability(&pts, &target).ln();
        }
        if accept(log_ratio, rng) {
            p.merge_cells(a, b);
            return true;
        }
        false
    }
}

/// Split/merge proposals over every ordered pair of distinct indices (or a
/// random subset when capped).
pub fn mh_sweep<R: Rng + ?Sized>(
    p: &mut Partition,
    model: &mut CellModel<'_>,
    params: &SamplerParams,
    rng: &mut R,
) {
    let n = p.num_indices();
    if n < 2 {
        return;
    }
    match params.max_mh_proposals {
        Some(cap) => {
            for _ in 0..cap {
                let a = rng.random_range(0..n);
                let mut b = rng.random_range(0..n - 1);
                if b >= a {
                    b += 1;
                }
                mh_step(p, a, b, model, params, rng);
            }
        }
        None => {
            for a in 0..n {
                for b in 0..n {
                    if a != b {
                        mh_step(p, a, b, model, params, rng);
                    }
                }
            }
        }
    }
    debug_assert!(p.is_valid(&model.times));
}

/// Runs `n_rounds` sampling rounds from `init` and returns the last sample.
pub fn da_sample<R: Rng + ?Sized>(
    init: &Partition,
    model: &mut CellModel<'_>,
    params: &SamplerParams,
    n_rounds: usize,
    rng: &mut R,
) -> Partition {
    let mut p = init.clone();
    for _ in 0..n_rounds {
        da_round(&mut p, model, params, rng);
    }
    p
}

/// One round of the configured sweeps, in place.
pub fn da_round<R: Rng + ?Sized>(
    p: &mut Partition,
    model: &mut CellModel<'_>,
    params: &SamplerParams,
    rng: &mut R,
) {
    match params.mode {
        SamplerMode::Combined => {
            gibbs_sweep(p, model, params, rng);
            mh_sweep(p, model, params, rng);
        }
        SamplerMode::GibbsOnly => gibbs_sweep(p, model, params, rng),
        SamplerMode::MhOnly => mh_sweep(p, model, params, rng),
    }
}

/// Per-cell existence flags aligned with `Partition::cells`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExistenceVector {
    pub psi: Vec<bool>,
    /// Existence probability used for each draw.
    pub r: Vec<f64>,
}

impl ExistenceVector {
    pub fn count(&self) -> usize {
        self.psi.iter().filter(|&&x| x).count()
    }
}

/// Draws whether each cell's landmark exists. Multi-index cells always
/// exist; singletons exist with their landmark-versus-clutter odds.
pub fn sample_existence<R: Rng + ?Sized>(
    p: &Partition,
    model: &mut CellModel<'_>,
    psi_floor: f64,
    rng: &mut R,
) -> ExistenceVector {
    let mut psi = Vec::with_capacity(p.num_cells());
    let mut rs = Vec::with_capacity(p.num_cells());
    for cell in p.cells() {
        let l = model.get(cell);
        let r = model.existence_probability(&l);
        rs.push(r);
        psi.push(if cell.len() > 1 {
            true
        } else if r < psi_floor {
            false
        } else {
            rng.random::<f64>() < r
        });
    }
    ExistenceVector { psi, r: rs }
}

/// Every valid partition with its normalized posterior probability.
pub fn exact_posterior(model: &mut CellModel<'_>) -> Result<Vec<(Partition, f64)>, PartitionError> {
    let parts = enumerate_partitions(&model.times)?;
    let logw: Vec<f64> = parts.iter().map(|p| partition_log_weight(p, model)).collect();
    let z = logsumexp(&logw);
    Ok(parts
        .into_iter()
        .zip(logw)
        .map(|(p, w)| (p, (w - z).exp()))
        .collect())
}

/// Visit counts of the canonical partitions seen over `n` rounds after
/// `burn_in` discarded rounds.
pub fn sample_histogram<R: Rng + ?Sized>(
    init: &Partition,
    model: &mut CellModel<'_>,
    params: &SamplerParams,
    burn_in: usize,
    n: usize,
    rng: &mut R,
) -> HashMap<Vec<Vec<usize>>, usize> {
    let mut p = init.clone();
    for _ in 0..burn_in {
        da_round(&mut p, model, params, rng);
    }
    let mut counts = HashMap::new();
    for _ in 0..n {
        da_round(&mut p, model, params, rng);
        *counts.entry(p.canonical()).or_insert(0) += 1;
    }
    counts
}

/// Total-variation distance between an exact distribution and visit counts.
pub fn total_variation(exact: &[(Partition, f64)], counts: &HashMap<Vec<Vec<usize>>, usize>) -> f64 {
    let n: usize = counts.values().sum();
    let mut seen = 0usize;
    let mut tv = 0.0;
    for (p, q) in exact {
        let c = counts.get(&p.canonical()).copied().unwrap_or(0);
        seen += c;
        tv += (c as f64 / n as f64 - q).abs();
    }
    // Visits to partitions outside the enumeration count in full.
    tv += (n - seen) as f64 / n as f64;
    0.5 * tv
}
