//! Model files: CNN checkpoints (`.pnet`) and baseline models (`.pbsl`).

use std::fs;
use std::path::Path;

use parasnet_core::baseline::BaselineModel;
use parasnet_core::checkpoint::Checkpoint;

use crate::error::{Error, Result};

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    write_bytes(path, &checkpoint.encode())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::decode(&read_bytes(path)?).map_err(|e| Error::core(path, e))
}

pub fn save_baseline(path: &Path, model: &BaselineModel) -> Result<()> {
    write_bytes(path, &model.encode())
}

pub fn load_baseline(path: &Path) -> Result<BaselineModel> {
    BaselineModel::decode(&read_bytes(path)?).map_err(|e| Error::core(path, e))
}
