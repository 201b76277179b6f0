//! Independent oracles for alignment, Sinkhorn marginals, metric formulas
//! and class-count estimation.

use cgid_core::cluster::{estimate_num_classes, hungarian_align, sinkhorn_trace, PassKind};
use cgid_core::data::{generate_mixture_corpus, MixtureConfig, SampleCounts, SplitTag};
use cgid_core::metrics::{cgid_accuracy, cgid_forgetting, loss_gain, AccuracyMatrix};
use cgid_core::rng::rng_from_seed;
use cgid_core::DenseMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// Best matched count over every partial injection of rows into columns.
pub fn exhaustive_matches(counts: &[Vec<usize>]) -> usize {
    fn go(counts: &[Vec<usize>], row: usize, used: &mut Vec<bool>) -> usize {
        if row == counts.len() {
            return 0;
        }
        let mut best = go(counts, row + 1, used);
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                best = best.max(counts[row][c] + go(counts, row + 1, used));
                used[c] = false;
            }
        }
        best
    }
    let cols = counts.first().map_or(0, Vec::len);
    go(counts, 0, &mut vec![false; cols])
}

/// Random contingency tables up to 7x7 expanded into label vectors; returns
/// how many alignments matched the exhaustive optimum.
pub fn hungarian_agreement(trials: usize, seed: u64) -> usize {
    let mut rng = rng_from_seed(seed);
    let mut agree = 0;
    for _ in 0..trials {
        let rows = rng.random_range(1..=7);
        let cols = rng.random_range(1..=7);
        let mut counts: Vec<Vec<usize>> = (0..rows)
            .map(|_| (0..cols).map(|_| rng.random_range(0..12)).collect())
            .collect();
        counts[rows - 1][cols - 1] += 1;
        let (mut pred, mut truth) = (Vec::new(), Vec::new());
        for (p, row) in counts.iter().enumerate() {
            for (t, &n) in row.iter().enumerate() {
                pred.extend(std::iter::repeat_n(p, n));
                truth.extend(std::iter::repeat_n(t, n));
            }
        }
        let (map, matched) = hungarian_align(&pred, &truth).unwrap();
        let recount = pred.iter().zip(&truth).filter(|(&p, &t)| map.get(p) == Some(t)).count();
        if matched == exhaustive_matches(&counts) && recount == matched && map.is_injective() {
            agree += 1;
        }
    }
    agree
}

/// Worst deviation of the final row sums from 1 and of the last column pass
/// from `batch / K`, over random logit matrices.
pub fn sinkhorn_marginal_errors(trials: usize, seed: u64) -> (f64, f64) {
    let mut rng = rng_from_seed(seed);
    let (mut row_err, mut col_err) = (0.0f64, 0.0f64);
    for _ in 0..trials {
        let b = rng.random_range(2..=64);
        let k = rng.random_range(2..=12);
        let scale = rng.random_range(0.1..3.0);
        let data = (0..b * k).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let logits = DenseMatrix::new(b, k, data).unwrap();
        let epsilon = [0.05, 0.1, 0.5, 1.0][rng.random_range(0..4)];
        let iterations = rng.random_range(1..=5);
        let (q, trace) = sinkhorn_trace(&logits, epsilon, iterations).unwrap();
        for r in q.row_iter() {
            row_err = row_err.max((r.iter().sum::<f64>() - 1.0).abs());
        }
        let last_col = trace.iter().rev().find(|p| p.kind == PassKind::Column).unwrap();
        let target = b as f64 / k as f64;
        for s in &last_col.sums {
            col_err = col_err.max((s - target).abs());
        }
    }
    (row_err, col_err)
}

/// Worst error against hand-computed values on small worked matrices.
pub fn worked_metric_error() -> f64 {
    let mut err = 0.0f64;
    let mut check = |got: f64, want: f64| err = err.max((got - want).abs());
    // |Y_0| = 2, |Y_1| = 1
    let a = AccuracyMatrix::from_rows(vec![2, 1], vec![vec![0.9], vec![0.8, 0.7]]).unwrap();
    let acc = cgid_accuracy(&a, 1).unwrap();
    check(acc.ind, 0.8);
    check(acc.ood, 0.7);
    check(acc.all, 2.3 / 3.0);
    let f = cgid_forgetting(&a, 1).unwrap();
    check(f.ind, 0.1);
    check(f.ood, 0.0);
    check(f.all, 0.2 / 3.0);
    let (loss, gain) = loss_gain(&a, 1).unwrap();
    check(loss, -0.1 / 0.9);
    check(gain, 2.3 / 1.8 - 1.0);
    // 17 in-domain classes, six stages of ten, perfect throughout
    let mut sizes = vec![17];
    sizes.extend([10; 6]);
    let rows = (0..7).map(|t| vec![1.0; t + 1]).collect();
    let perfect = AccuracyMatrix::from_rows(sizes, rows).unwrap();
    let (loss, gain) = loss_gain(&perfect, 6).unwrap();
    check(loss, 0.0);
    check(gain, 77.0 / 17.0 - 1.0);
    err
}

/// Worst violation of `A_ALL = (|Y_0| A_IND + |Y_1..t| A_OOD) / |Y_all|` over
/// random matrices.
pub fn blend_identity_error(trials: usize, seed: u64) -> f64 {
    let mut rng = rng_from_seed(seed);
    let mut err = 0.0f64;
    for _ in 0..trials {
        let stages = rng.random_range(2..=7);
        let sizes: Vec<usize> = (0..stages).map(|_| rng.random_range(1..=30)).collect();
        let rows = (0..stages).map(|t| (0..=t).map(|_| rng.random::<f64>()).collect()).collect();
        let a = AccuracyMatrix::from_rows(sizes.clone(), rows).unwrap();
        for t in 1..stages {
            let acc = cgid_accuracy(&a, t).unwrap();
            let ood: usize = sizes[1..=t].iter().sum();
            let all = ood + sizes[0];
            let blend = (sizes[0] as f64 * acc.ind + ood as f64 * acc.ood) / all as f64;
            err = err.max((acc.all - blend).abs());
        }
    }
    err
}

/// Estimates on Gaussian mixtures (true K in 3..=8, K' = 2K, means 10
/// standard deviations apart), tallied as `[exact, over, under]`.
pub fn k_estimation_tally(trials: u64) -> [usize; 3] {
    let mut tally = [0; 3];
    for seed in 0..trials {
        let k = 3 + (seed % 6) as usize;
        let corpus = generate_mixture_corpus(&MixtureConfig {
            num_classes: k,
            dim: 16,
            samples_per_class: SampleCounts {
                train: 40,
                validation: 1,
                test: 1,
            },
            per_class: None,
            class_separation: 10.0,
            within_class_std: 1.0,
            seed,
        })
        .unwrap();
        let train: Vec<usize> = (0..corpus.len())
            .filter(|&i| corpus.splits()[i] == SplitTag::Train)
            .collect();
        let x = corpus.features().select_rows(&train);
        let est = estimate_num_classes(&x, 2 * k, seed).unwrap().k;
        tally[match est.cmp(&k) {
            std::cmp::Ordering::Equal => 0,
            std::cmp::Ordering::Greater => 1,
            std::cmp::Ordering::Less => 2,
        }] += 1;
    }
    tally
}
