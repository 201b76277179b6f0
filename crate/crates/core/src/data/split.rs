//! Staged class splits: one labeled in-domain stage followed by `T`
//! unlabeled out-of-domain stages.
//!
//! Classes are relabeled into "split space": in-domain classes take ids
//! `0..|Y_0|`, stage `t` classes follow contiguously after stage `t-1`.
//! Ground truth for the unlabeled stages and every test label live in
//! [`SealedLabels`], which only the evaluation module can open.

use alloc::format;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::SliceRandom;

use super::corpus::{LabeledCorpus, SplitTag};
use crate::math;
use crate::metrics::EvalKey;
use crate::numeric::matrix::DenseMatrix;
use crate::rng::rng_from_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub features: DenseMatrix,
    pub labels: Vec<usize>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// The labeled in-domain stage (t = 0).
#[derive(Debug, Clone, PartialEq)]
pub struct IndStage {
    pub num_classes: usize,
    pub train: LabeledSet,
    pub validation: LabeledSet,
}

/// An unlabeled out-of-domain stage. Only the class count is public.
#[derive(Debug, Clone, PartialEq)]
pub struct OodStage {
    /// Stage index `t >= 1`.
    pub stage: usize,
    /// `|Y_t|`.
    pub num_classes: usize,
    pub train: DenseMatrix,
    pub validation: DenseMatrix,
}

#[derive(Debug)]
pub struct SealedLabels {
    ood_train: Vec<Vec<usize>>,
    ood_validation: Vec<Vec<usize>>,
    test: Vec<LabeledSet>,
    corpus_classes: Vec<Vec<usize>>,
    opened: AtomicUsize,
}

impl Clone for SealedLabels {
    fn clone(&self) -> Self {
        Self {
            ood_train: self.ood_train.clone(),
            ood_validation: self.ood_validation.clone(),
            test: self.test.clone(),
            corpus_classes: self.corpus_classes.clone(),
            opened: AtomicUsize::new(self.opened.load(Ordering::Relaxed)),
        }
    }
}

/// Read access to the sealed ground truth.
#[derive(Debug, Clone, Copy)]
pub struct SealedView<'a> {
    /// Split-space labels of each unlabeled stage's training rows (index `t - 1`).
    pub ood_train_labels: &'a [Vec<usize>],
    pub ood_validation_labels: &'a [Vec<usize>],
    /// Test samples of class set `Y_i`, for `i = 0..=T`.
    pub test: &'a [LabeledSet],
    /// Original corpus class ids of each class set.
    pub corpus_classes: &'a [Vec<usize>],
}

impl SealedLabels {
    /// Opens the compartment. Every call is counted; see
    /// [`StagedSplit::sealed_open_count`].
    ///
    /// ```compile_fail
    /// // Only the evaluation module can mint a key.
    /// let key = cgid_core::metrics::EvalKey { _private: () };
    /// ```
    pub fn open(&self, _key: &EvalKey) -> SealedView<'_> {
        self.opened.fetch_add(1, Ordering::Relaxed);
        SealedView {
            ood_train_labels: &self.ood_train,
            ood_validation_labels: &self.ood_validation,
            test: &self.test,
            corpus_classes: &self.corpus_classes,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StagedSplit {
    pub ind: IndStage,
    pub ood: Vec<OodStage>,
    stage_sizes: Vec<usize>,
    sealed: SealedLabels,
}

impl StagedSplit {
    /// Number of unlabeled stages `T`.
    pub fn num_stages(&self) -> usize {
        self.ood.len()
    }

    /// `|Y_0|, |Y_1|, ..., |Y_T|`.
    pub fn stage_sizes(&self) -> &[usize] {
        &self.stage_sizes
    }

    /// `|Y^all_t|`.
    pub fn cumulative_classes(&self, t: usize) -> usize {
        self.stage_sizes[..=t].iter().sum()
    }

    /// Split-space class ids of `Y_t`.
    pub fn class_range(&self, t: usize) -> core::ops::Range<usize> {
        let start = self.stage_sizes[..t].iter().sum();
        start..start + self.stage_sizes[t]
    }

    pub fn sealed(&self) -> &SealedLabels {
        &self.sealed
    }

    /// How many times the sealed compartment has been opened.
    pub fn sealed_open_count(&self) -> usize {
        self.sealed.opened.load(Ordering::Relaxed)
    }

    pub fn input_dim(&self) -> usize {
        self.ind.train.features.cols()
    }

    /// Stable hash over every sample and label, public and sealed.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::new();
        for s in &self.stage_sizes {
            h.write_u64(*s as u64);
        }
        for set in [&self.ind.train, &self.ind.validation]
            .into_iter()
            .chain(self.sealed.test.iter())
        {
            h.write_matrix(&set.features);
            set.labels.iter().for_each(|&l| h.write_u64(l as u64));
        }
        for stage in &self.ood {
            h.write_matrix(&stage.train);
            h.write_matrix(&stage.validation);
        }
        for labels in self.sealed.ood_train.iter().chain(&self.sealed.ood_validation) {
            labels.iter().for_each(|&l| h.write_u64(l as u64));
        }
        h.finish()
    }
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    fn write_u64(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    fn write_matrix(&mut self, m: &DenseMatrix) {
        self.write_u64(m.rows() as u64);
        self.write_u64(m.cols() as u64);
        m.as_slice().iter().for_each(|x| self.write_u64(x.to_bits()));
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

/// Class counts per stage: `[|Y_0|, |Y_1|, ..., |Y_T|]`.
///
/// Each unlabeled stage receives `floor(ood_ratio * C / T)` classes and the
/// in-domain stage keeps the rest. This reproduces the published stage layouts
/// (77 classes at 60% -> 32/15/15/15, 150 classes at 80% -> 30/40/40/40).
pub fn stage_class_counts(num_classes: usize, ood_ratio: f64, num_stages: usize) -> Result<Vec<usize>> {
    if !(ood_ratio > 0.0 && ood_ratio < 1.0) {
        return Err(Error::config(format!("ood_ratio must lie in (0, 1), got {ood_ratio}")));
    }
    if num_stages == 0 {
        return Err(Error::config("num_stages must be at least 1"));
    }
    let per_stage = math::floor(ood_ratio * num_classes as f64 / num_stages as f64 + 1e-9) as usize;
    if per_stage == 0 {
        return Err(Error::config(format!(
            "{num_classes} classes at ratio {ood_ratio} leave no class for each of {num_stages} stages"
        )));
    }
    let ood_total = per_stage * num_stages;
    if ood_total >= num_classes {
        return Err(Error::config("no in-domain class left"));
    }
    let mut sizes = Vec::with_capacity(num_stages + 1);
    sizes.push(num_classes - ood_total);
    sizes.extend(core::iter::repeat_n(per_stage, num_stages));
    Ok(sizes)
}

pub fn build_cgid_split(
    corpus: &LabeledCorpus,
    ood_ratio: f64,
    num_stages: usize,
    seed: u64,
) -> Result<StagedSplit> {
    let sizes = stage_class_counts(corpus.num_classes(), ood_ratio, num_stages)?;
    let mut rng = rng_from_seed(seed);
    let mut order: Vec<usize> = (0..corpus.num_classes()).collect();
    order.shuffle(&mut rng);

    let mut corpus_classes = Vec::with_capacity(sizes.len());
    let mut offset = 0;
    for &s in &sizes {
        let mut set = order[offset..offset + s].to_vec();
        set.sort_unstable();
        corpus_classes.push(set);
        offset += s;
    }
    // corpus class id -> split-space id
    let mut to_split = alloc::vec![usize::MAX; corpus.num_classes()];
    let mut next = 0;
    for set in &corpus_classes {
        for &c in set {
            to_split[c] = next;
            next += 1;
        }
    }

    let gather = |classes: &[usize], tag: SplitTag, shuffle: bool, rng: &mut rand_chacha::ChaCha8Rng| {
        let mut idx: Vec<usize> = (0..corpus.len())
            .filter(|&i| corpus.splits()[i] == tag && classes.contains(&corpus.labels()[i]))
            .collect();
        if shuffle {
            idx.shuffle(rng);
        }
        let labels = idx.iter().map(|&i| to_split[corpus.labels()[i]]).collect();
        LabeledSet {
            features: corpus.features().select_rows(&idx),
            labels,
        }
    };

    let ind = IndStage {
        num_classes: sizes[0],
        train: gather(&corpus_classes[0], SplitTag::Train, true, &mut rng),
        validation: gather(&corpus_classes[0], SplitTag::Validation, false, &mut rng),
    };
    let mut ood = Vec::with_capacity(num_stages);
    let mut ood_train = Vec::with_capacity(num_stages);
    let mut ood_validation = Vec::with_capacity(num_stages);
    for t in 1..=num_stages {
        let train = gather(&corpus_classes[t], SplitTag::Train, true, &mut rng);
        let validation = gather(&corpus_classes[t], SplitTag::Validation, true, &mut rng);
        ood.push(OodStage {
            stage: t,
            num_classes: sizes[t],
            train: train.features,
            validation: validation.features,
        });
        ood_train.push(train.labels);
        ood_validation.push(validation.labels);
    }
    let test = corpus_classes
        .iter()
        .map(|set| gather(set, SplitTag::Test, false, &mut rng))
        .collect();

    Ok(StagedSplit {
        ind,
        ood,
        stage_sizes: sizes,
        sealed: SealedLabels {
            ood_train,
            ood_validation,
            test,
            corpus_classes,
            opened: AtomicUsize::new(0),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_mixture_corpus, MixtureConfig, SampleCounts};
    use alloc::vec;

    #[test]
    fn published_stage_layouts() {
        assert_eq!(stage_class_counts(77, 0.6, 3).unwrap(), vec![32, 15, 15, 15]);
        assert_eq!(stage_class_counts(77, 0.4, 3).unwrap(), vec![47, 10, 10, 10]);
        assert_eq!(stage_class_counts(77, 0.8, 3).unwrap(), vec![17, 20, 20, 20]);
        assert_eq!(stage_class_counts(150, 0.4, 3).unwrap(), vec![90, 20, 20, 20]);
        assert_eq!(stage_class_counts(150, 0.6, 3).unwrap(), vec![60, 30, 30, 30]);
        assert_eq!(stage_class_counts(150, 0.8, 3).unwrap(), vec![30, 40, 40, 40]);
    }

    #[test]
    fn small_split_by_hand() {
        // floor(0.4 * 10 / 2) = 2 per stage, 6 in-domain
        assert_eq!(stage_class_counts(10, 0.4, 2).unwrap(), vec![6, 2, 2]);
    }

    #[test]
    fn ratio_bounds() {
        assert!(matches!(stage_class_counts(10, 0.0, 2), Err(Error::Config(_))));
        assert!(matches!(stage_class_counts(10, 1.0, 2), Err(Error::Config(_))));
        assert!(matches!(stage_class_counts(10, 0.1, 3), Err(Error::Config(_))));
    }

    #[test]
    fn split_contents() {
        let corpus = generate_mixture_corpus(&MixtureConfig {
            num_classes: 10,
            dim: 4,
            samples_per_class: SampleCounts {
                train: 6,
                validation: 2,
                test: 3,
            },
            per_class: None,
            class_separation: 5.0,
            within_class_std: 1.0,
            seed: 4,
        })
        .unwrap();
        let split = build_cgid_split(&corpus, 0.4, 2, 8).unwrap();
        assert_eq!(split.stage_sizes(), &[6, 2, 2]);
        assert_eq!(split.ind.train.len(), 36);
        assert!(split.ind.train.labels.iter().all(|&l| l < 6));
        assert_eq!(split.ood[0].train.rows(), 12);
        assert_eq!(split.class_range(2), 8..10);
        assert_eq!(split.sealed_open_count(), 0);
        assert_eq!(split.fingerprint(), build_cgid_split(&corpus, 0.4, 2, 8).unwrap().fingerprint());
        assert_ne!(split.fingerprint(), build_cgid_split(&corpus, 0.4, 2, 9).unwrap().fingerprint());
    }
}
