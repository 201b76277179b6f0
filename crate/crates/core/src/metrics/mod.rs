//! Evaluation: the accuracy matrix, accuracy/forgetting metrics, Loss/Gain,
//! compactness and per-stage reports.
//!
//! This is the only module that can open the sealed ground truth of a
//! [`StagedSplit`](crate::data::StagedSplit).

mod accuracy;
mod compactness;
mod evaluate;
mod report;

pub use accuracy::{cgid_accuracy, cgid_forgetting, loss_gain, AccuracyMatrix, StageAccuracy, StageForgetting};
pub use compactness::compactness;
pub use evaluate::{evaluate_predictions, evaluate_stage, AlignmentScope, FeatureDump, PredictionScore, StageEvaluation};
pub use report::{StageMetrics, StageReport};

/// Capability required to open sealed labels. Only this module mints it.
#[derive(Debug)]
pub struct EvalKey {
    _private: (),
}

fn eval_key() -> EvalKey {
    EvalKey { _private: () }
}
