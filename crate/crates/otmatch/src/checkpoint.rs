//! JSON checkpoints. Floats are written in shortest round-trip form, so a
//! save/load cycle is bit-exact. Writes go to a temporary sibling first and
//! are renamed into place.

use std::io::Write;
use std::path::Path;

use otmatch_core::engine::TrainState;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{io_err, Result, RunError};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: TrainConfig,
    pub state: TrainState,
    /// Batch-sampling generator, positioned at the next draw.
    pub rng: ChaCha8Rng,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        {
            let mut file = std::fs::File::create(&tmp).map_err(io_err(&tmp))?;
            serde_json::to_writer(&mut file, self)?;
            file.write_all(b"\n").map_err(io_err(&tmp))?;
            file.sync_all().map_err(io_err(&tmp))?;
        }
        std::fs::rename(&tmp, path).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let ck: Self = serde_json::from_str(&text)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(RunError::CheckpointVersion {
                expected: CHECKPOINT_VERSION,
                found: ck.version,
            });
        }
        ck.config.validate()?;
        ck.state.student.validate()?;
        ck.state.teacher.params.validate()?;
        Ok(ck)
    }
}
