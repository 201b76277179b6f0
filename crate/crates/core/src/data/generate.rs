//! Synthetic Gaussian mixture corpora standing in for encoded utterances.

use alloc::format;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::corpus::{LabeledCorpus, SplitTag};
use crate::math;
use crate::numeric::matrix::DenseMatrix;
use crate::rng::rng_from_seed;
use crate::{Error, Result};

/// Samples per class in each split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl SampleCounts {
    pub fn total(&self) -> usize {
        self.train + self.validation + self.test
    }

    fn get(&self, tag: SplitTag) -> usize {
        match tag {
            SplitTag::Train => self.train,
            SplitTag::Validation => self.validation,
            SplitTag::Test => self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureConfig {
    pub num_classes: usize,
    pub dim: usize,
    pub samples_per_class: SampleCounts,
    /// Optional per-class override of `samples_per_class` (class-imbalanced corpora).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_class: Option<Vec<SampleCounts>>,
    /// Minimum distance between class means, in units of `within_class_std`.
    pub class_separation: f64,
    pub within_class_std: f64,
    pub seed: u64,
}

const PLACEMENT_ATTEMPTS: usize = 20_000;

/// Draws class means on a sphere of radius `separation * std`, rejecting
/// candidates closer than `separation * std` to an accepted mean, then draws
/// isotropic Gaussian samples around each mean.
pub fn generate_mixture_corpus(config: &MixtureConfig) -> Result<LabeledCorpus> {
    let MixtureConfig {
        num_classes,
        dim,
        class_separation,
        within_class_std,
        ..
    } = *config;
    if num_classes < 2 {
        return Err(Error::config("mixture needs at least 2 classes"));
    }
    if dim < 2 {
        return Err(Error::config("mixture needs dimension >= 2"));
    }
    if !(class_separation > 0.0 && class_separation.is_finite()) {
        return Err(Error::config("class_separation must be positive"));
    }
    if !(within_class_std >= 0.0 && within_class_std.is_finite()) {
        return Err(Error::config("within_class_std must be non-negative"));
    }
    let counts: Vec<SampleCounts> = match &config.per_class {
        Some(pc) if pc.len() != num_classes => {
            return Err(Error::config(format!(
                "per_class lists {} entries for {num_classes} classes",
                pc.len()
            )))
        }
        Some(pc) => pc.clone(),
        None => alloc::vec![config.samples_per_class; num_classes],
    };
    if counts
        .iter()
        .any(|c| c.train == 0 || c.validation == 0 || c.test == 0)
    {
        return Err(Error::config("every class needs at least one sample per split"));
    }

    let mut rng = rng_from_seed(config.seed);
    // with std = 0 the separation is measured in absolute units
    let scale = if within_class_std > 0.0 { within_class_std } else { 1.0 };
    let min_dist = class_separation * scale;
    let radius = min_dist;
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(num_classes);
    let mut attempts = 0;
    while means.len() < num_classes {
        attempts += 1;
        if attempts > PLACEMENT_ATTEMPTS {
            return Err(Error::config(format!(
                "cannot place {num_classes} class means with separation {class_separation} in dimension {dim}"
            )));
        }
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = math::sqrt(math::dot(&v, &v));
        if norm == 0.0 {
            continue;
        }
        let cand: Vec<f64> = v.iter().map(|x| x * radius / norm).collect();
        let ok = means
            .iter()
            .all(|m| math::squared_distance(m, &cand) >= min_dist * min_dist);
        if ok {
            means.push(cand);
        }
    }

    let total: usize = counts.iter().map(SampleCounts::total).sum();
    let mut data = Vec::with_capacity(total * dim);
    let mut labels = Vec::with_capacity(total);
    let mut splits = Vec::with_capacity(total);
    for (class, mean) in means.iter().enumerate() {
        for tag in SplitTag::ALL {
            for _ in 0..counts[class].get(tag) {
                for &mu in mean {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    data.push(mu + within_class_std * noise);
                }
                labels.push(class);
                splits.push(tag);
            }
        }
    }
    let features = DenseMatrix::new(total, dim, data)?;
    LabeledCorpus::new(features, labels, splits)
}
