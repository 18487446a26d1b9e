pub mod evaluate;
pub mod predict;
pub mod report;
pub mod score;
pub mod sweep;
pub mod train;

use std::path::Path;

use hicl_core::corpus::{load_sparse_path, Dataset};
use hicl_core::hierarchy::Hierarchy;

use crate::error::CliError;

pub fn load_taxonomy(path: &Path) -> Result<Hierarchy, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Hierarchy::parse(&text).map_err(CliError::from)
}

pub fn load_data(path: &Path, one_based: bool) -> Result<Dataset, CliError> {
    load_sparse_path(path, one_based)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn ensure_out_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Data(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}
