//! Run configuration and the staged experiment driver.

mod config;
mod runner;

pub use config::{
    BaselineParams, DataConfig, EvalConfig, IndConfig, KConfig, KMode, MemoryConfig, Method, ModelConfig,
    PlrdParams, RunConfig, TrainingConfig, PRESETS,
};
pub use runner::{
    prepare_split, resume_experiment, run_experiment, synthetic_corpus, NoObserver, RunObserver, RunOutput,
    RunState, StageContext,
};
