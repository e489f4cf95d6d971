//! Lloyd's k-means with k-means++ seeding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::linalg::Matrix;

pub const DEFAULT_MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Matrix,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after each assignment step.
    pub inertia_history: Vec<f64>,
    pub empty_cluster_repairs: usize,
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_pp(x: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let m = x.rows();
    let mut chosen = vec![rng.random_range(0..m)];
    let mut d2: Vec<f64> = x.row_iter().map(|r| sq_dist(r, x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = m - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..m)
        };
        chosen.push(next);
        for (i, row) in x.row_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(row, x.row(next)));
        }
    }
    x.select_rows(&chosen).expect("indices are in range")
}

/// Clusters the rows of `x` into `k` groups. Deterministic for a given seed.
///
/// Ties in the assignment step keep a point's current cluster, otherwise the
/// lowest cluster index wins. A cluster left empty after an update receives
/// the point farthest from its own centroid (taken from a cluster with at
/// least two members).
pub fn kmeans(x: &Matrix, k: usize, seed: u64, max_iter: usize) -> Result<KMeansResult> {
    let m = x.rows();
    if k == 0 || k > m {
        return invalid(format!("k = {k} must be in 1..={m}"));
    }
    if max_iter == 0 {
        return invalid("max_iter must be positive");
    }
    let d = x.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp(x, k, &mut rng);
    let mut labels = vec![usize::MAX; m];
    let mut history = Vec::new();
    let mut repairs = 0;
    let mut iterations = 0;

    for _ in 0..max_iter {
        iterations += 1;
        let mut changed = false;
        let mut inertia = 0.0;
        for (i, row) in x.row_iter().enumerate() {
            let cur = labels[i];
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let dist = sq_dist(row, centroids.row(c));
                if dist < best_d {
                    best_d = dist;
                    best = c;
                }
            }
            if cur != usize::MAX && cur != best && sq_dist(row, centroids.row(cur)) == best_d {
                best = cur;
            }
            if best != cur {
                labels[i] = best;
                changed = true;
            }
            inertia += best_d;
        }
        history.push(inertia);
        if !changed {
            break;
        }

        update_centroids(x, &labels, &mut centroids);
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        while let Some(empty) = counts.iter().position(|&c| c == 0) {
            let (far, _) = x
                .row_iter()
                .enumerate()
                .filter(|(i, _)| counts[labels[*i]] > 1)
                .map(|(i, r)| (i, sq_dist(r, centroids.row(labels[i]))))
                .fold((usize::MAX, -1.0), |acc, (i, dd)| if dd > acc.1 { (i, dd) } else { acc });
            let from = labels[far];
            counts[from] -= 1;
            counts[empty] += 1;
            labels[far] = empty;
            repairs += 1;
            update_centroids(x, &labels, &mut centroids);
        }
    }

    let inertia = x
        .row_iter()
        .zip(&labels)
        .map(|(r, &l)| sq_dist(r, centroids.row(l)))
        .sum();
    debug_assert_eq!(centroids.cols(), d);
    Ok(KMeansResult {
        labels,
        centroids,
        inertia,
        iterations,
        inertia_history: history,
        empty_cluster_repairs: repairs,
    })
}

/// Mean of each cluster's members; clusters without members keep their
/// previous centroid.
fn update_centroids(x: &Matrix, labels: &[usize], centroids: &mut Matrix) {
    let (k, d) = centroids.shape();
    let mut sums = vec![0.0; k * d];
    let mut counts = vec![0usize; k];
    for (row, &l) in x.row_iter().zip(labels) {
        counts[l] += 1;
        sums[l * d..(l + 1) * d]
            .iter_mut()
            .zip(row)
            .for_each(|(s, v)| *s += v);
    }
    for c in 0..k {
        if counts[c] > 0 {
            let n = counts[c] as f64;
            for (dst, s) in centroids.row_mut(c).iter_mut().zip(&sums[c * d..(c + 1) * d]) {
                *dst = s / n;
            }
        }
    }
}
