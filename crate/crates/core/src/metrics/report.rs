use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::accuracy::{cgid_accuracy, cgid_forgetting, loss_gain, AccuracyMatrix};
use crate::{Error, Result};

/// The tabular metrics of one stage. Out-of-domain and forgetting values are
/// `None` at stage 0, Loss/Gain are `None` when the stage-0 in-domain accuracy
/// is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageMetrics {
    #[serde(rename = "A_IND")]
    pub a_ind: f64,
    #[serde(rename = "F_IND")]
    pub f_ind: Option<f64>,
    #[serde(rename = "A_OOD")]
    pub a_ood: Option<f64>,
    #[serde(rename = "F_OOD")]
    pub f_ood: Option<f64>,
    #[serde(rename = "A_ALL")]
    pub a_all: f64,
    #[serde(rename = "F_ALL")]
    pub f_all: Option<f64>,
    #[serde(rename = "Loss")]
    pub loss: Option<f64>,
    #[serde(rename = "Gain")]
    pub gain: Option<f64>,
}

impl StageMetrics {
    /// Every metric of stage `t`, computed from the matrix alone.
    pub fn from_matrix(a: &AccuracyMatrix, t: usize) -> Result<Self> {
        let (a_ood, f) = if t == 0 {
            (None, None)
        } else {
            (Some(cgid_accuracy(a, t)?.ood), Some(cgid_forgetting(a, t)?))
        };
        let (loss, gain) = match loss_gain(a, t) {
            Ok((l, g)) => (Some(l), Some(g)),
            Err(Error::UndefinedMetric(_)) => (None, None),
            Err(e) => return Err(e),
        };
        Ok(Self {
            a_ind: a.a_ind(t)?,
            f_ind: f.map(|f| f.ind),
            a_ood,
            f_ood: f.map(|f| f.ood),
            a_all: a.a_all(t)?,
            f_all: f.map(|f| f.all),
            loss,
            gain,
        })
    }
}

/// Everything recorded about one stage of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub method: String,
    pub ood_ratio: f64,
    pub stage: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub metrics: StageMetrics,
    /// `a[t][0..=t]`.
    pub accuracy_row: Vec<f64>,
    pub unaligned_row: Vec<f64>,
    /// `|Y_0|, ..., |Y_t|`.
    pub class_sizes: Vec<usize>,
    /// Output count of each merged head block.
    pub head_sizes: Vec<usize>,
    pub compactness: Vec<Option<f64>>,
    /// Class count used for this stage's head (stage 0: in-domain count).
    pub k_used: usize,
    pub k_true: usize,
    pub k_estimated: Option<usize>,
    pub invariant_violations: usize,
    pub split_fingerprint: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_ms: Option<u64>,
}

impl StageReport {
    /// Reassembles the accuracy matrix from a run's reports (in stage order).
    pub fn accuracy_matrix(reports: &[StageReport]) -> Result<AccuracyMatrix> {
        let sizes = reports
            .last()
            .map(|r| r.class_sizes.clone())
            .unwrap_or_default();
        AccuracyMatrix::from_rows(sizes, reports.iter().map(|r| r.accuracy_row.clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn metrics_follow_the_matrix() {
        let a = AccuracyMatrix::from_rows(vec![2, 1], vec![vec![0.9], vec![0.8, 0.7]]).unwrap();
        let m0 = StageMetrics::from_matrix(&a, 0).unwrap();
        assert_eq!(m0.a_ood, None);
        assert_eq!(m0.loss, Some(0.0));
        assert_eq!(m0.gain, Some(0.0));
        let m1 = StageMetrics::from_matrix(&a, 1).unwrap();
        assert_eq!(m1.a_ood, Some(0.7));
        assert!((m1.loss.unwrap() + 0.1 / 0.9).abs() < 1e-12);
    }
}
