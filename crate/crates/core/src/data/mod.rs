//! Labeled corpora, the synthetic mixture generator, and staged splits.

mod corpus;
mod generate;
mod split;

pub use corpus::{LabeledCorpus, SplitTag};
pub use generate::{generate_mixture_corpus, MixtureConfig, SampleCounts};
pub use split::{
    build_cgid_split, stage_class_counts, IndStage, LabeledSet, OodStage, SealedLabels, SealedView,
    StagedSplit,
};
