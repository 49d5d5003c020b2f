use nalgebra::Vector3;
use rand::Rng;

fn nearer_second(p: &Vector3<f64>, c0: &Vector3<f64>, c1: &Vector3<f64>) -> bool {
    (p - c1).norm_squared() < (p - c0).norm_squared()
}

/// Two-cluster assignment from seeds `i` and `j` followed by one Lloyd
/// iteration. `true` marks the cluster of seed `j`. If the Lloyd step empties a
/// cluster the seed assignment is kept.
pub fn seeded_split(pts: &[Vector3<f64>], i: usize, j: usize) -> Vec<bool> {
    let mut a: Vec<bool> = pts
        .iter()
        .map(|p| nearer_second(p, &pts[i], &pts[j]))
        .collect();
    a[i] = false;
    a[j] = true;
    let mut sums = [Vector3::zeros(); 2];
    let mut counts = [0usize; 2];
    for (p, &s) in pts.iter().zip(&a) {
        sums[s as usize] += p;
        counts[s as usize] += 1;
    }
    let c0 = sums[0] / counts[0] as f64;
    let c1 = sums[1] / counts[1] as f64;
    let b: Vec<bool> = pts.iter().map(|p| nearer_second(p, &c0, &c1)).collect();
    if b.iter().all(|&x| x) || b.iter().all(|&x| !x) {
        a
    } else {
        b
    }
}

fn second_seed_weights(pts: &[Vector3<f64>], i: usize) -> Vec<f64> {
    let mut w: Vec<f64> = pts.iter().map(|p| (p - pts[i]).norm_squared()).collect();
    w[i] = 0.0;
    let total: f64 = w.iter().sum();
    if total > 0.0 && total.is_finite() {
        w.iter_mut().for_each(|x| *x /= total);
    } else {
        let n = pts.len() as f64 - 1.0;
        w.iter_mut().enumerate().for_each(|(k, x)| *x = if k == i { 0.0 } else { 1.0 / n });
    }
    w
}

/// k-means++ seeding (uniform first seed, squared-distance second seed) and
/// one Lloyd iteration. Needs at least two points.
pub fn kmeans_pp_split<R: Rng + ?Sized>(pts: &[Vector3<f64>], rng: &mut R) -> Vec<bool> {
    assert!(pts.len() >= 2, "cannot split fewer than two points");
    let i = rng.random_range(0..pts.len());
    let w = second_seed_weights(pts, i);
    let mut u = rng.random::<f64>();
    let mut j = pts.len();
    for (k, wk) in w.iter().enumerate() {
        if *wk > 0.0 {
            j = k;
            if u < *wk {
                break;
            }
            u -= wk;
        }
    }
    seeded_split(pts, i, j)
}

fn same_split(a: &[bool], b: &[bool]) -> bool {
    a == b || a.iter().zip(b).all(|(x, y)| x != y)
}

/// Probability that [`kmeans_pp_split`] returns `target` (up to swapping the
/// two labels), summed over all seed pairs.
pub fn split_probability(pts: &[Vector3<f64>], target: &[bool]) -> f64 {
    let n = pts.len();
    let mut total = 0.0;
    for i in 0..n {
        let w = second_seed_weights(pts, i);
        for j in 0..n {
            if w[j] > 0.0 && same_split(&seeded_split(pts, i, j), target) {
                total += w[j] / n as f64;
            }
        }
    }
    total
}
