//! IDX files on disk.

use std::path::Path;

use otmatch_core::data::{encode_idx, idx_images, idx_labels, parse_idx, Dataset, IdxArray};

use crate::error::{io_err, Result};

pub fn read_idx(path: &Path) -> Result<IdxArray> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(parse_idx(&bytes)?)
}

pub fn write_idx(path: &Path, array: &IdxArray) -> Result<()> {
    let bytes = encode_idx(array)?;
    std::fs::write(path, bytes).map_err(io_err(path))
}

/// Images in `[0, 1]` paired with their labels.
pub fn read_idx_dataset(images: &Path, labels: &Path, classes: usize) -> Result<Dataset> {
    let (features, layout) = idx_images(&read_idx(images)?)?;
    let labels = idx_labels(&read_idx(labels)?)?;
    Ok(Dataset::new(features, labels, classes, layout)?)
}
