//! A dataset directory holds one DPF1 stack per capture condition, each
//! beside its `.meta.json` sidecar. File names carry no meaning.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::frame::sidecar_path;

/// Stack files in `dir` that have a sidecar, sorted by path.
pub fn list_stacks(dir: &Path) -> Result<Vec<PathBuf>> {
    let label = || dir.display().to_string();
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::from(e).context(label()))? {
        let path = entry.map_err(|e| Error::from(e).context(label()))?.path();
        let is_sidecar = path.to_string_lossy().ends_with(".meta.json");
        if path.is_file() && !is_sidecar && sidecar_path(&path).is_file() {
            out.push(path);
        }
    }
    if out.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{} contains no stack with a .meta.json sidecar",
            dir.display()
        )));
    }
    out.sort();
    Ok(out)
}
