//! Filesystem side of the CGID toolkit: the embedding corpus format, TOML
//! run configuration with dotted overrides, report files, stage checkpoints,
//! seed sweeps and run comparison. The `cgid` binary is a thin layer over
//! these modules.

pub mod checkpoint;
pub mod compare;
pub mod config;
pub mod corpus_io;
mod error;
pub mod report;
pub mod run;
pub mod sweep;

pub use error::CliError;
