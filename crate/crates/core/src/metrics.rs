//! GOSPA, NMI and RMSE.

use crate::association::Partition;
use crate::models::{wrap_angle, SensorState};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// GOSPA and its parts, each in meters. The parts are p-th roots of their
/// contributions, so `total^p = localization^p + missed^p + false_alarm^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct GospaBreakdown {
    pub total: f64,
    pub localization: f64,
    pub missed: f64,
    pub false_alarm: f64,
    /// `(truth, estimate)` pairs closer than the cut-off.
    pub assignment: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GospaParams {
    pub c: f64,
    pub p: f64,
    pub alpha: f64,
}

impl Default for GospaParams {
    fn default() -> Self {
        Self {
            c: 5.0,
            p: 2.0,
            alpha: 2.0,
        }
    }
}

/// Minimum-cost assignment of every row of `cost` (rows ≤ columns) to a
/// distinct column. Returns the column chosen for each row.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(n <= m, "more rows than columns");
    // Shortest augmenting path with potentials; 1-based with a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut row_of = vec![0usize; m + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=m {
        if row_of[j] != 0 {
            out[row_of[j] - 1] = j - 1;
        }
    }
    out
}

/// GOSPA between two point sets. Pairs at or beyond the cut-off count as one
/// miss plus one false alarm.
pub fn gospa(truth: &[Vector3<f64>], est: &[Vector3<f64>], params: GospaParams) -> GospaBreakdown {
    let GospaParams { c, p, alpha } = params;
    assert!(c > 0.0 && p >= 1.0 && alpha > 0.0 && alpha <= 2.0);
    let cp = c.powf(p);
    let transpose = truth.len() > est.len();
    let (rows, cols) = if transpose { (est, truth) } else { (truth, est) };
    let cost: Vec<Vec<f64>> = rows
        .iter()
        .map(|a| cols.iter().map(|b| (a - b).norm().min(c).powf(p)).collect())
        .collect();
    let cols_of = min_cost_assignment(&cost);

    let mut assignment = Vec::new();
    let mut loc = 0.0;
    for (r, &col) in cols_of.iter().enumerate() {
        let d = (rows[r] - cols[col]).norm();
        if d < c {
            loc += d.powf(p);
            assignment.push(if transpose { (col, r) } else { (r, col) });
        }
    }
    assignment.sort_unstable();
    let n_missed = truth.len() - assignment.len();
    let n_false = est.len() - assignment.len();
    let missed = cp / alpha * n_missed as f64;
    let false_alarm = cp / alpha * n_false as f64;
    GospaBreakdown {
        total: (loc + missed + false_alarm).powf(1.0 / p),
        localization: loc.powf(1.0 / p),
        missed: missed.powf(1.0 / p),
        false_alarm: false_alarm.powf(1.0 / p),
        assignment,
    }
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let q = c as f64 / n;
            -q * q.ln()
        })
        .sum()
}

/// Cell-overlap counts between two partitions of the same index set.
pub fn contingency(a: &Partition, b: &Partition) -> BTreeMap<(usize, usize), usize> {
    assert_eq!(a.num_indices(), b.num_indices(), "partitions of different index sets");
    let mut table = BTreeMap::new();
    for m in 0..a.num_indices() {
        *table.entry((a.owner(m), b.owner(m))).or_insert(0) += 1;
    }
    table
}

/// Normalized mutual information `2 I / (H_a + H_b)`; two single-cell
/// partitions score 1.
pub fn nmi(a: &Partition, b: &Partition) -> f64 {
    let n = a.num_indices();
    if n == 0 {
        return 1.0;
    }
    let nf = n as f64;
    let table = contingency(a, b);
    let ha = entropy(a.cells().iter().map(Vec::len), nf);
    let hb = entropy(b.cells().iter().map(Vec::len), nf);
    if ha + hb == 0.0 {
        return 1.0;
    }
    let mut mi = 0.0;
    for (&(i, j), &nij) in &table {
        let pij = nij as f64 / nf;
        let pi = a.cell(i).len() as f64 / nf;
        let pj = b.cell(j).len() as f64 / nf;
        mi += pij * (pij / (pi * pj)).ln();
    }
    (2.0 * mi / (ha + hb)).clamp(0.0, 1.0)
}

/// Which part of the sensor state an RMSE is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateSelector {
    /// Euclidean position error (m).
    Position,
    /// Wrapped heading error (rad).
    Heading,
    /// Clock bias error (m).
    ClockBias,
}

impl StateSelector {
    pub fn squared_error(self, truth: &SensorState, est: &SensorState) -> f64 {
        match self {
            Self::Position => (truth.position - est.position).norm_squared(),
            Self::Heading => wrap_angle(truth.heading - est.heading).powi(2),
            Self::ClockBias => (truth.clock_bias - est.clock_bias).powi(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rmse {
    pub per_step: Vec<f64>,
    pub aggregate: f64,
}

/// Per-step RMSE across runs and the RMS over steps.
pub fn rmse(truths: &[Vec<SensorState>], estimates: &[Vec<SensorState>], sel: StateSelector) -> Rmse {
    assert_eq!(truths.len(), estimates.len(), "run count mismatch");
    assert!(!truths.is_empty());
    let steps = truths[0].len();
    let mut acc = vec![0.0; steps];
    for (t, e) in truths.iter().zip(estimates) {
        assert_eq!(t.len(), steps, "trajectory length mismatch");
        assert_eq!(e.len(), steps, "trajectory length mismatch");
        for (k, (a, b)) in t.iter().zip(e).enumerate() {
            acc[k] += sel.squared_error(a, b);
        }
    }
    let runs = truths.len() as f64;
    let per_step: Vec<f64> = acc.iter().map(|s| (s / runs).sqrt()).collect();
    let aggregate = (acc.iter().sum::<f64>() / (runs * steps as f64)).sqrt();
    Rmse { per_step, aggregate }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for i in 0..=p.len() {
                let mut q = p.clone();
                q.insert(i, n - 1);
                out.push(q);
            }
        }
        out
    }

    /// Every partial injective matching of truth into estimates.
    fn brute_gospa(x: &[Vector3<f64>], y: &[Vector3<f64>], c: f64, p: f64, alpha: f64) -> f64 {
        let n = x.len();
        let m = y.len();
        // Pad both sides to n + m so "unmatched" is a dummy partner.
        let size = n + m;
        let mut best = f64::INFINITY;
        for perm in permutations(size) {
            let mut cost = 0.0;
            let mut ok = true;
            for (i, &j) in perm.iter().enumerate() {
                match (i < n, j < m) {
                    (true, true) => {
                        let d = (x[i] - y[j]).norm();
                        if d >= c {
                            ok = false;
                        }
                        cost += d.powf(p);
                    }
                    (true, false) | (false, true) => cost += c.powf(p) / alpha,
                    (false, false) => {}
                }
            }
            if ok {
                best = best.min(cost);
            }
        }
        best.powf(1.0 / p)
    }

    #[test]
    fn identical_sets() {
        let x = vec![v(1.0, 2.0, 3.0), v(-4.0, 0.0, 1.0)];
        let g = gospa(&x, &x, GospaParams::default());
        assert_eq!(g.total, 0.0);
        assert_eq!(g.assignment, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn missed_only_closed_form() {
        for n in 1..6 {
            let x: Vec<_> = (0..n).map(|i| v(i as f64 * 10.0, 0.0, 0.0)).collect();
            let g = gospa(&x, &[], GospaParams::default());
            assert!((g.total - (25.0 / 2.0 * n as f64).sqrt()).abs() < 1e-12);
            assert_eq!(g.total, g.missed);
        }
        let g = gospa(&[v(0.0, 0.0, 0.0)], &[], GospaParams::default());
        assert!((g.total - 3.5355339059327378).abs() < 1e-12);
    }

    #[test]
    fn far_pair_is_miss_plus_false() {
        let g = gospa(&[v(0.0, 0.0, 0.0)], &[v(9.0, 0.0, 0.0)], GospaParams::default());
        assert!(g.assignment.is_empty());
        assert!((g.total - 5.0).abs() < 1e-12);
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let n = rng.random_range(0..=4);
            let m = rng.random_range(0..=4);
            let pt = |rng: &mut ChaCha8Rng| {
                v(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0), rng.random_range(-1.0..1.0))
            };
            let x: Vec<_> = (0..n).map(|_| pt(&mut rng)).collect();
            let y: Vec<_> = (0..m).map(|_| pt(&mut rng)).collect();
            let g = gospa(&x, &y, GospaParams::default());
            let b = brute_gospa(&x, &y, 5.0, 2.0, 2.0);
            assert!((g.total - b).abs() < 1e-12 * b.max(1.0), "{} vs {}", g.total, b);
            let parts = g.localization.powi(2) + g.missed.powi(2) + g.false_alarm.powi(2);
            assert!((g.total.powi(2) - parts).abs() < 1e-9);
        }
    }

    #[test]
    fn assignment_solver_is_optimal_on_square_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.random_range(1..=5);
            let cost: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..n).map(|_| rng.random_range(0.0..10.0)).collect())
                .collect();
            let sol = min_cost_assignment(&cost);
            let got: f64 = sol.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
            let best = permutations(n)
                .iter()
                .map(|p| p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            assert!((got - best).abs() < 1e-9);
        }
    }

    fn part(labels: &[usize]) -> Partition {
        Partition::from_labels(&labels.iter().map(|&l| Some(l)).collect::<Vec<_>>())
    }

    #[test]
    fn nmi_examples() {
        let a = part(&[0, 0, 1, 1]);
        assert_eq!(nmi(&a, &a), 1.0);
        assert_eq!(nmi(&Partition::singletons(5), &Partition::singletons(5)), 1.0);
        assert_eq!(nmi(&part(&[0, 0, 0]), &part(&[0, 0, 0])), 1.0);

        // {0,1}{2,3} against {0,1,2}{3}, computed by hand.
        let b = part(&[0, 0, 0, 1]);
        let ln = f64::ln;
        let ha = ln(2.0);
        let hb = -(0.75 * ln(0.75) + 0.25 * ln(0.25));
        let mi = 0.5 * ln(0.5 / (0.5 * 0.75)) + 0.25 * ln(0.25 / (0.5 * 0.75)) + 0.25 * ln(0.25 / (0.5 * 0.25));
        let expected = 2.0 * mi / (ha + hb);
        assert!((nmi(&a, &b) - expected).abs() < 1e-14);
    }

    #[test]
    fn rmse_examples() {
        let t: Vec<SensorState> = (0..4)
            .map(|k| SensorState::new(v(k as f64, 0.0, 0.0), 0.1, 1.0))
            .collect();
        let r = rmse(&[t.clone()], &[t.clone()], StateSelector::Position);
        assert!(r.per_step.iter().all(|&x| x == 0.0));

        let shifted: Vec<SensorState> = t
            .iter()
            .map(|s| SensorState::new(s.position + v(1.0, 0.0, 0.0), s.heading, s.clock_bias))
            .collect();
        let r = rmse(&[t.clone(), t.clone()], &[shifted.clone(), shifted], StateSelector::Position);
        assert!(r.per_step.iter().all(|&x| (x - 1.0).abs() < 1e-15));
        assert!((r.aggregate - 1.0).abs() < 1e-15);

        let a = SensorState::new(v(0.0, 0.0, 0.0), 0.0, 0.0);
        let b = SensorState::new(v(0.0, 0.0, 0.0), 2.0 * std::f64::consts::PI - 0.1, 0.0);
        let e = StateSelector::Heading.squared_error(&a, &b).sqrt();
        assert!((e - 0.1).abs() < 1e-12);
    }

    fn arb_labels() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
        (1usize..12).prop_flat_map(|n| {
            (
                proptest::collection::vec(0usize..4, n),
                proptest::collection::vec(0usize..4, n),
            )
        })
    }

    fn arb_points() -> impl Strategy<Value = Vec<Vector3<f64>>> {
        proptest::collection::vec((-8.0f64..8.0, -8.0f64..8.0, -2.0f64..2.0), 0..5)
            .prop_map(|v| v.into_iter().map(|(x, y, z)| Vector3::new(x, y, z)).collect())
    }

    proptest! {
        #[test]
        fn nmi_symmetric_and_bounded((la, lb) in arb_labels()) {
            let (a, b) = (part(&la), part(&lb));
            let x = nmi(&a, &b);
            prop_assert!((x - nmi(&b, &a)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&x));
        }

        #[test]
        fn nmi_relabel_invariant((la, lb) in arb_labels(), shift in 1usize..7) {
            let relabeled: Vec<usize> = la.iter().map(|l| (l + shift) * 3).collect();
            let x = nmi(&part(&la), &part(&lb));
            let y = nmi(&part(&relabeled), &part(&lb));
            prop_assert!((x - y).abs() < 1e-12);
        }

        #[test]
        fn gospa_symmetry(x in arb_points(), y in arb_points()) {
            let p = GospaParams::default();
            let a = gospa(&x, &y, p);
            let b = gospa(&y, &x, p);
            prop_assert!((a.total - b.total).abs() < 1e-9);
            prop_assert!((a.localization - b.localization).abs() < 1e-9);
            prop_assert!((a.missed - b.false_alarm).abs() < 1e-9);
            prop_assert!((a.false_alarm - b.missed).abs() < 1e-9);
        }

        #[test]
        fn gospa_triangle(x in arb_points(), y in arb_points(), z in arb_points()) {
            let p = GospaParams::default();
            let xz = gospa(&x, &z, p).total;
            let xy = gospa(&x, &y, p).total;
            let yz = gospa(&y, &z, p).total;
            prop_assert!(xz <= xy + yz + 1e-9);
        }
    }
}
