use cgid_core::cluster::{hungarian_align, kmeans_with, sinkhorn_trace, KMeansConfig, PassKind};
use cgid_core::metrics::{cgid_accuracy, cgid_forgetting, compactness, evaluate_predictions, AccuracyMatrix, AlignmentScope};
use cgid_core::numeric::normalize_rows;
use cgid_core::plrd::{memory_select, PrototypeBank, SelectionStrategy};
use cgid_core::DenseMatrix;
use proptest::prelude::*;

fn matrix(rows: std::ops::RangeInclusive<usize>, cols: std::ops::RangeInclusive<usize>, scale: f64) -> impl Strategy<Value = DenseMatrix> {
    (rows, cols).prop_flat_map(move |(r, c)| {
        prop::collection::vec(-scale..scale, r * c).prop_map(move |v| DenseMatrix::new(r, c, v).unwrap())
    })
}

fn label_pairs() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1usize..60).prop_flat_map(|n| (prop::collection::vec(0usize..6, n), prop::collection::vec(0usize..6, n)))
}

fn accuracy_matrix() -> impl Strategy<Value = AccuracyMatrix> {
    (2usize..6).prop_flat_map(|stages| {
        let sizes = prop::collection::vec(1usize..20, stages);
        let rows = prop::collection::vec(prop::collection::vec(0.0..=1.0f64, stages), stages);
        (sizes, rows).prop_map(|(sizes, rows)| {
            let rows = rows.into_iter().enumerate().map(|(t, r)| r[..=t].to_vec()).collect();
            AccuracyMatrix::from_rows(sizes, rows).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn sinkhorn_passes_hit_their_marginals(
        logits in matrix(1..=24, 1..=8, 4.0),
        epsilon in prop::sample::select(vec![0.05, 0.2, 1.0]),
        iterations in 1usize..5,
    ) {
        let (b, k) = logits.shape();
        let (q, trace) = sinkhorn_trace(&logits, epsilon, iterations).unwrap();
        for pass in &trace {
            let target = match pass.kind {
                PassKind::Column => b as f64 / k as f64,
                PassKind::Row => 1.0,
            };
            for s in &pass.sums {
                prop_assert!((s - target).abs() < 1e-9, "{:?} sum {} target {}", pass.kind, s, target);
            }
        }
        prop_assert!(q.as_slice().iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)));
    }

    #[test]
    fn alignment_dominates_raw_agreement((pred, truth) in label_pairs()) {
        let (map, matched) = hungarian_align(&pred, &truth).unwrap();
        prop_assert!(map.is_injective());
        let raw = pred.iter().zip(&truth).filter(|(p, t)| p == t).count();
        let recount = pred.iter().zip(&truth).filter(|(&p, &t)| map.get(p) == Some(t)).count();
        prop_assert_eq!(recount, matched);
        prop_assert!(matched >= raw);
    }

    #[test]
    fn aligned_accuracy_at_least_unaligned(
        (ind_pred, ind_truth) in (1usize..20).prop_flat_map(|n| (prop::collection::vec(0usize..7, n), prop::collection::vec(0usize..3, n))),
        (ood_pred, ood_truth) in (1usize..30).prop_flat_map(|n| (prop::collection::vec(0usize..7, n), prop::collection::vec(3usize..7, n))),
    ) {
        let s = evaluate_predictions(
            &[ind_pred, ood_pred],
            &[ind_truth, ood_truth],
            &[3, 4],
            &[3, 4],
            AlignmentScope::Joint,
        ).unwrap();
        for (a, u) in s.row.iter().zip(&s.unaligned_row) {
            prop_assert!(a >= u);
        }
    }

    #[test]
    fn overall_accuracy_is_size_weighted_blend(a in accuracy_matrix()) {
        for t in 1..a.stages() {
            let acc = cgid_accuracy(&a, t).unwrap();
            let ind = a.sizes[0] as f64;
            let ood = a.ood_classes(t) as f64;
            let blend = (ind * acc.ind + ood * acc.ood) / (ind + ood);
            prop_assert!((acc.all - blend).abs() < 1e-12);
        }
    }

    #[test]
    fn no_forgetting_when_accuracies_hold(sizes in prop::collection::vec(1usize..20, 2..6), diag in prop::collection::vec(0.0..=1.0f64, 6)) {
        let rows = (0..sizes.len()).map(|t| diag[..=t].to_vec()).collect();
        let a = AccuracyMatrix::from_rows(sizes.clone(), rows).unwrap();
        for t in 1..sizes.len() {
            let f = cgid_forgetting(&a, t).unwrap();
            prop_assert!(f.ind.abs() < 1e-12 && f.ood.abs() < 1e-12 && f.all.abs() < 1e-12);
        }
    }

    #[test]
    fn prototypes_stay_unit_norm(
        z in matrix(1..=12, 3..=3, 2.0),
        q in matrix(12..=12, 4..=4, 1.0),
        gamma in 0.0..1.0f64,
    ) {
        let mut bank = PrototypeBank::new(gamma, 3);
        bank.push_random(4, 9);
        let (zn, _) = normalize_rows(&z);
        bank.update(&zn, &q);
        prop_assert!(bank.all_unit_norm(1e-9));
    }

    #[test]
    fn memory_selection_respects_capacity(labels in prop::collection::vec(0usize..5, 1..80), n in 0usize..8, seed: u64) {
        let picked = memory_select(&labels, n, SelectionStrategy::Random, None, seed).unwrap();
        for (class, idx) in picked {
            prop_assert!(idx.len() <= n);
            prop_assert!(idx.iter().all(|&i| labels[i] == class));
            let mut sorted = idx.clone();
            sorted.sort_unstable();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), idx.len());
        }
    }

    #[test]
    fn compactness_is_rotation_invariant(x in matrix(8..=8, 2..=2, 5.0), angle in 0.0..std::f64::consts::TAU) {
        let labels = [0, 0, 0, 1, 1, 1, 2, 2];
        let (s, c) = angle.sin_cos();
        let mut rotated = x.clone();
        for r in 0..x.rows() {
            let (a, b) = (x.get(r, 0), x.get(r, 1));
            rotated.set(r, 0, c * a - s * b);
            rotated.set(r, 1, s * a + c * b);
        }
        let before = compactness(&x, &labels, &[0, 1, 2]).unwrap();
        let after = compactness(&rotated, &labels, &[0, 1, 2]).unwrap();
        prop_assert!((before - after).abs() <= 1e-9 * before.abs().max(1.0));
    }

    #[test]
    fn more_restarts_never_raise_inertia(x in matrix(6..=30, 2..=3, 10.0), k in 1usize..5, seed: u64) {
        let few = kmeans_with(&x, &KMeansConfig { n_init: 2, ..KMeansConfig::new(k, seed) }).unwrap();
        let many = kmeans_with(&x, &KMeansConfig { n_init: 6, ..KMeansConfig::new(k, seed) }).unwrap();
        prop_assert!(many.inertia <= few.inertia);
    }
}
