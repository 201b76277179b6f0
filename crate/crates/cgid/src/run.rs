//! Single runs with per-stage checkpoints and feature dumps.

use std::path::{Path, PathBuf};

use cgid_core::data::LabeledCorpus;
use cgid_core::experiment::{resume_experiment, synthetic_corpus, RunConfig, RunObserver, RunOutput, StageContext};

use crate::checkpoint::{save_checkpoint, Checkpoint, CHECKPOINT_FILE};
use crate::corpus_io::load_embedding_corpus;
use crate::report::{emit_dump, emit_report};
use crate::CliError;

/// The corpus named by `config.data.path`, or the synthetic one.
pub fn load_corpus(config: &RunConfig) -> Result<LabeledCorpus, CliError> {
    match &config.data.path {
        Some(p) => load_embedding_corpus(Path::new(p)),
        None => Ok(synthetic_corpus(config)?),
    }
}

struct FileObserver<'a> {
    dir: &'a Path,
    checkpoint: PathBuf,
    dumps: bool,
}

impl RunObserver for FileObserver<'_> {
    fn on_stage_end(&mut self, ctx: &StageContext<'_>) -> cgid_core::Result<()> {
        let persist = || -> Result<(), CliError> {
            save_checkpoint(&self.checkpoint, ctx.config, ctx.state)?;
            if self.dumps {
                emit_dump(self.dir, ctx.dump)?;
            }
            Ok(())
        };
        // the core error type carries no IO variant; report as a contract failure
        persist().map_err(|e| cgid_core::Error::Contract(e.to_string()))?;
        log::info!("stage {} done", ctx.stage);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub feature_dumps: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { feature_dumps: true }
    }
}

/// Runs (or resumes) one experiment and writes its reports into `dir`.
/// A checkpoint is written after every stage; on failure the last one is
/// kept and named in the error.
pub fn execute_run(
    config: &RunConfig,
    dir: &Path,
    resume: Option<Checkpoint>,
    options: RunOptions,
) -> Result<RunOutput, CliError> {
    let corpus = load_corpus(config)?;
    let checkpoint = dir.join(CHECKPOINT_FILE);
    let mut observer = FileObserver {
        dir,
        checkpoint: checkpoint.clone(),
        dumps: options.feature_dumps,
    };
    let state = match resume {
        Some(ck) => {
            if &ck.config != config {
                return Err(CliError::Config("checkpoint was written by a different configuration".into()));
            }
            Some(ck.state)
        }
        None => None,
    };
    let output = resume_experiment(config, &corpus, state, &mut observer).map_err(|e| match e {
        cgid_core::Error::Config(_) => CliError::Core(e),
        other if checkpoint.exists() => CliError::Interrupted {
            message: other.to_string(),
            checkpoint: checkpoint.display().to_string(),
        },
        other => CliError::Core(other),
    })?;
    emit_report(dir, config, &output.reports)?;
    Ok(output)
}
