//! Lloyd's k-means with greedy k-means++ seeding and restarts, and the
//! cluster-count estimator built on top of it.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math;
use crate::numeric::matrix::DenseMatrix;
use crate::rng::{derive_seed, rng_from_seed, ChaCha8Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub assignments: Vec<usize>,
    pub centroids: DenseMatrix,
    pub inertia: f64,
    pub iterations_run: usize,
    /// Inertia after seeding and after every Lloyd iteration of the kept run.
    pub inertia_history: Vec<f64>,
}

impl ClusteringResult {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.rows()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iters: usize,
    /// Independent seedings; the run with the lowest inertia is kept.
    pub n_init: usize,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            max_iters: 300,
            n_init: 10,
            seed,
        }
    }
}

/// k-means with the default restart count.
pub fn kmeans(x: &DenseMatrix, k: usize, max_iters: usize, seed: u64) -> Result<ClusteringResult> {
    kmeans_with(
        x,
        &KMeansConfig {
            max_iters,
            ..KMeansConfig::new(k, seed)
        },
    )
}

pub fn kmeans_with(x: &DenseMatrix, config: &KMeansConfig) -> Result<ClusteringResult> {
    let n = x.rows();
    if config.k == 0 {
        return Err(Error::config("k-means needs k >= 1"));
    }
    if config.k > n {
        return Err(Error::config(format!(
            "k-means with k = {} on {n} samples",
            config.k
        )));
    }
    let mut best: Option<ClusteringResult> = None;
    for run in 0..config.n_init.max(1) {
        let mut rng = rng_from_seed(derive_seed(config.seed, &[run as u64]));
        let init = greedy_kmeans_pp(x, config.k, &mut rng);
        let result = lloyd(x, init, config.max_iters);
        // strict improvement keeps the earliest run on ties
        if best.as_ref().is_none_or(|b| result.inertia < b.inertia) {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one run"))
}

fn nearest(x: &[f64], centroids: &DenseMatrix) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for c in 0..centroids.rows() {
        let d = math::squared_distance(x, centroids.row(c));
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    (best, best_d)
}

/// k-means++ where each new center is the best of `2 + ln k` candidates
/// sampled proportionally to squared distance.
fn greedy_kmeans_pp(x: &DenseMatrix, k: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let n = x.rows();
    let trials = 2 + math::ln(k as f64) as usize;
    let mut centers = DenseMatrix::empty(x.cols());
    let first = rng.random_range(0..n);
    centers.push_row(x.row(first)).expect("same width");
    let mut closest: Vec<f64> = (0..n)
        .map(|i| math::squared_distance(x.row(i), x.row(first)))
        .collect();
    for _ in 1..k {
        let total: f64 = closest.iter().sum();
        let mut best_cand = 0;
        let mut best_pot = f64::INFINITY;
        let mut best_dists = Vec::new();
        for _ in 0..trials {
            let cand = if total > 0.0 {
                let target = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut pick = n - 1;
                for (i, &d) in closest.iter().enumerate() {
                    acc += d;
                    if acc > target {
                        pick = i;
                        break;
                    }
                }
                pick
            } else {
                rng.random_range(0..n)
            };
            let dists: Vec<f64> = (0..n)
                .map(|i| closest[i].min(math::squared_distance(x.row(i), x.row(cand))))
                .collect();
            let pot: f64 = dists.iter().sum();
            if pot < best_pot {
                best_pot = pot;
                best_cand = cand;
                best_dists = dists;
            }
        }
        centers.push_row(x.row(best_cand)).expect("same width");
        closest = best_dists;
    }
    centers
}

fn assign(x: &DenseMatrix, centroids: &DenseMatrix) -> (Vec<usize>, Vec<f64>) {
    (0..x.rows()).map(|i| nearest(x.row(i), centroids)).unzip()
}

fn lloyd(x: &DenseMatrix, mut centroids: DenseMatrix, max_iters: usize) -> ClusteringResult {
    let k = centroids.rows();
    let (mut assignments, mut dists) = assign(x, &centroids);
    let mut history = vec![dists.iter().sum::<f64>()];
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        reseed_empty(&mut assignments, &mut dists, k);
        centroids = means(x, &assignments, &centroids);
        let (next, next_d) = assign(x, &centroids);
        history.push(next_d.iter().sum());
        let converged = next == assignments;
        assignments = next;
        dists = next_d;
        if converged {
            break;
        }
    }
    ClusteringResult {
        inertia: dists.iter().sum(),
        assignments,
        centroids,
        iterations_run: iterations,
        inertia_history: history,
    }
}

/// Moves the point farthest from its centroid into each empty cluster. Only
/// points at positive distance in clusters with at least two members qualify,
/// so a move never empties another cluster and never increases inertia.
fn reseed_empty(assignments: &mut [usize], dists: &mut [f64], k: usize) {
    let mut sizes = vec![0usize; k];
    for &a in assignments.iter() {
        sizes[a] += 1;
    }
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        let mut far = None;
        for (i, &d) in dists.iter().enumerate() {
            if d > 0.0 && sizes[assignments[i]] >= 2 && far.is_none_or(|(_, fd)| d > fd) {
                far = Some((i, d));
            }
        }
        if let Some((i, _)) = far {
            sizes[assignments[i]] -= 1;
            sizes[c] = 1;
            assignments[i] = c;
            dists[i] = 0.0;
        }
    }
}

fn means(x: &DenseMatrix, assignments: &[usize], previous: &DenseMatrix) -> DenseMatrix {
    let k = previous.rows();
    let mut sums = DenseMatrix::zeros(k, x.cols());
    let mut counts = vec![0usize; k];
    for (i, &a) in assignments.iter().enumerate() {
        counts[a] += 1;
        for (s, v) in sums.row_mut(a).iter_mut().zip(x.row(i)) {
            *s += v;
        }
    }
    for c in 0..k {
        if counts[c] == 0 {
            // nothing to reseed with (all points coincide with their centroids)
            sums.row_mut(c).copy_from_slice(previous.row(c));
        } else {
            let inv = 1.0 / counts[c] as f64;
            sums.row_mut(c).iter_mut().for_each(|s| *s *= inv);
        }
    }
    sums
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KEstimate {
    pub k: usize,
    pub k_prime: usize,
    /// Size threshold `N / K'`.
    pub threshold: f64,
    pub cluster_sizes: Vec<usize>,
}

/// Clusters with `K'` centroids and counts the clusters whose size reaches
/// the mean cluster size `N / K'`.
pub fn estimate_num_classes(x: &DenseMatrix, k_prime: usize, seed: u64) -> Result<KEstimate> {
    let result = kmeans_with(x, &KMeansConfig::new(k_prime, seed))?;
    let n = x.rows();
    let sizes = result.cluster_sizes();
    // |S| >= N / K'  <=>  |S| * K' >= N, exact in integers
    let k = sizes.iter().filter(|&&s| s * k_prime >= n).count();
    Ok(KEstimate {
        k,
        k_prime,
        threshold: n as f64 / k_prime as f64,
        cluster_sizes: sizes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points(rows: &[[f64; 2]]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn two_pairs_match_exhaustive_partition() {
        let x = points(&[[0.0, 0.0], [0.0, 1.0], [10.0, 10.0], [10.0, 11.0]]);
        let r = kmeans(&x, 2, 100, 1).unwrap();
        // exhaustive oracle over all 2-partitions of 4 points
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << 4) - 1 {
            let mut cost = 0.0;
            for side in [true, false] {
                let members: Vec<usize> = (0..4).filter(|&i| ((mask >> i) & 1 == 1) == side).collect();
                let mut mean = [0.0; 2];
                for &i in &members {
                    mean[0] += x.get(i, 0) / members.len() as f64;
                    mean[1] += x.get(i, 1) / members.len() as f64;
                }
                cost += members
                    .iter()
                    .map(|&i| math::squared_distance(x.row(i), &mean))
                    .sum::<f64>();
            }
            best = best.min(cost);
        }
        assert!((r.inertia - best).abs() < 1e-12);
        assert!((r.inertia - 1.0).abs() < 1e-12);
        assert_eq!(r.assignments[0], r.assignments[1]);
        assert_eq!(r.assignments[2], r.assignments[3]);
        assert_ne!(r.assignments[0], r.assignments[2]);
    }

    #[test]
    fn k_equal_n_gives_zero_inertia() {
        let x = points(&[[0.0, 0.0], [1.0, 5.0], [3.0, -2.0], [7.0, 7.0], [0.5, 0.5]]);
        let r = kmeans(&x, 5, 10, 3).unwrap();
        assert_eq!(r.inertia, 0.0);
    }

    #[test]
    fn deterministic_and_monotone() {
        let x = points(&[
            [0.0, 0.0],
            [0.3, 0.1],
            [5.0, 5.0],
            [5.2, 4.9],
            [9.0, 0.0],
            [8.7, 0.4],
            [4.0, 2.0],
        ]);
        let a = kmeans(&x, 3, 50, 42).unwrap();
        let b = kmeans(&x, 3, 50, 42).unwrap();
        assert_eq!(a, b);
        for w in a.inertia_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn too_many_clusters_is_config_error() {
        let x = points(&[[0.0, 0.0]]);
        assert!(matches!(kmeans(&x, 2, 10, 0), Err(Error::Config(_))));
    }

    #[test]
    fn estimate_on_point_masses() {
        // four tight clusters of 25: duplicate centroids stay empty
        let mut rows = Vec::new();
        for c in 0..4 {
            for _ in 0..25 {
                rows.push([c as f64 * 10.0, (c % 2) as f64 * 7.0]);
            }
        }
        let x = points(&rows);
        let est = estimate_num_classes(&x, 10, 5).unwrap();
        assert_eq!(est.threshold, 10.0);
        assert_eq!(est.k, 4);
    }

    #[test]
    fn estimate_degenerate_cases() {
        let x = points(&[[1.0, 1.0]; 12]);
        assert_eq!(estimate_num_classes(&x, 5, 0).unwrap().k, 1);
        let y = points(&[[0.0, 0.0], [1.0, 0.0], [9.0, 9.0]]);
        assert_eq!(estimate_num_classes(&y, 1, 0).unwrap().k, 1);
    }
}
