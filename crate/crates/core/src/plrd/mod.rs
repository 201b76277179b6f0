//! Prototype-guided learning with replay and feature distillation.

mod ind;
pub mod losses;
mod memory;
mod model;
mod prototypes;
mod q;
mod train;
mod trainer;

pub use ind::{train_ind_stage, IndOutcome};
pub use memory::{assemble_batch, memory_select, MixedBatch, Origin, ReplayMemory, SelectionStrategy};
pub use model::{ClassifierGrads, JointModel};
pub use prototypes::PrototypeBank;
pub use q::{compute_q, compute_q_batch};
pub use train::{accuracy, apply_update, ce_gradients, embed, OptimConfig, StageSchedule};
pub use trainer::{
    ensure_old_prototypes, plrd_batch_loss, train_ood_stage, BatchLoss, BatchTargets, InstanceRows, LossComponents,
    LossWeights,
    PlrdConfig, StageLog,
};
