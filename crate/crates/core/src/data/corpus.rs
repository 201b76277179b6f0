use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::numeric::matrix::DenseMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Validation,
    Test,
}

impl SplitTag {
    pub const ALL: [SplitTag; 3] = [SplitTag::Train, SplitTag::Validation, SplitTag::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Validation => "validation",
            SplitTag::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(SplitTag::Train),
            "validation" | "val" | "valid" | "dev" => Some(SplitTag::Validation),
            "test" => Some(SplitTag::Test),
            _ => None,
        }
    }
}

/// Feature vectors with class labels `0..C` and a split tag per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCorpus {
    features: DenseMatrix,
    labels: Vec<usize>,
    splits: Vec<SplitTag>,
    num_classes: usize,
}

impl LabeledCorpus {
    /// Validates that labels are contiguous `0..C` and that every class
    /// appears in every split.
    pub fn new(features: DenseMatrix, labels: Vec<usize>, splits: Vec<SplitTag>) -> Result<Self> {
        if labels.len() != features.rows() || splits.len() != features.rows() {
            return Err(Error::shape(
                "LabeledCorpus::new",
                format!("{} labels and split tags", features.rows()),
                format!("{} labels, {} tags", labels.len(), splits.len()),
            ));
        }
        if !features.is_finite() {
            return Err(Error::contract("corpus features must be finite"));
        }
        let num_classes = labels.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![[false; 3]; num_classes];
        for (&l, &s) in labels.iter().zip(&splits) {
            seen[l][s as usize] = true;
        }
        for (class, flags) in seen.iter().enumerate() {
            for tag in SplitTag::ALL {
                if !flags[tag as usize] {
                    return Err(Error::contract(format!(
                        "class {class} has no samples in the {} split",
                        tag.as_str()
                    )));
                }
            }
        }
        Ok(Self {
            features,
            labels,
            splits,
            num_classes,
        })
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn splits(&self) -> &[SplitTag] {
        &self.splits
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Row indices of `class` in `split`, in corpus order.
    pub fn indices(&self, class: usize, split: SplitTag) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.labels[i] == class && self.splits[i] == split)
            .collect()
    }

    pub fn count(&self, split: SplitTag) -> usize {
        self.splits.iter().filter(|&&s| s == split).count()
    }
}
