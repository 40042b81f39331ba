//! JSON-lines training log, one record per epoch.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: String,
    pub epoch: usize,
    /// Scheduled-sampling truth probability; absent for teacher forcing.
    pub epsilon: Option<f64>,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub lr: f64,
    pub wall_seconds: f64,
    pub clipped_steps: usize,
}

/// In-memory record list, optionally mirrored line by line to a file so a
/// failed run keeps its partial log.
#[derive(Debug, Default)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    sink: Option<(PathBuf, BufWriter<File>)>,
}

impl TrainLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn to_file(path: &Path) -> Result<Self> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self { records: Vec::new(), sink: Some((path.to_path_buf(), BufWriter::new(f))) })
    }

    pub fn push(&mut self, record: EpochRecord) -> Result<()> {
        log::info!(
            "{} epoch {}: train {:.6e} val {} lr {:.3e} ({:.1} s, {} clipped)",
            record.stage,
            record.epoch,
            record.train_loss,
            record.val_loss.map_or("-".into(), |v| format!("{v:.6e}")),
            record.lr,
            record.wall_seconds,
            record.clipped_steps
        );
        if let Some((path, w)) = &mut self.sink {
            serde_json::to_writer(&mut *w, &record)?;
            w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path.as_path(), e))?;
        }
        self.records.push(record);
        Ok(())
    }
}
