//! Stage checkpoints: the run config plus the complete [`RunState`] after a
//! finished stage, stored as versioned JSON.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use cgid_core::experiment::{RunConfig, RunState};
use serde::{Deserialize, Serialize};

use crate::report::create_parent;
use crate::CliError;

pub const CHECKPOINT_FORMAT: &str = "cgid-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: RunConfig,
    pub state: RunState,
}

/// Writes through a temporary file so an interrupted write never replaces
/// the previous checkpoint.
pub fn save_checkpoint(path: &Path, config: &RunConfig, state: &RunState) -> Result<(), CliError> {
    create_parent(path)?;
    let ck = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        config: config.clone(),
        state: state.clone(),
    };
    let tmp = path.with_extension("json.tmp");
    let file = fs::File::create(&tmp).map_err(|e| CliError::io("cannot create", &tmp, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, &ck).map_err(|e| CliError::format(&tmp, e))?;
    w.flush().map_err(|e| CliError::io("cannot write", &tmp, e))?;
    drop(w);
    fs::rename(&tmp, path).map_err(|e| CliError::io("cannot move checkpoint to", path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io("cannot read checkpoint", path, e))?;
    let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| CliError::format(path, e))?;
    if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
        return Err(CliError::format(
            path,
            format!("unsupported checkpoint {} v{}", ck.format, ck.version),
        ));
    }
    Ok(ck)
}
