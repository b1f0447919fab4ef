use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{JbfError, Result};

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".partial");
    path.with_file_name(name)
}

/// Writes all files to temporaries first and renames them only once every
/// write has succeeded, so a failure leaves no half-written outputs behind.
pub(crate) fn write_all_atomic(files: &[(&Path, &[u8])]) -> Result<()> {
    let mut staged = Vec::with_capacity(files.len());
    for (path, bytes) in files {
        let tmp = temp_path(path);
        if let Err(e) = fs::write(&tmp, bytes) {
            for (t, _) in &staged {
                let _ = fs::remove_file(t);
            }
            return Err(JbfError::io(*path, e));
        }
        staged.push((tmp, *path));
    }
    for (tmp, path) in &staged {
        fs::rename(tmp, path).map_err(|e| JbfError::io(*path, e))?;
    }
    Ok(())
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    write_all_atomic(&[(path, bytes)])
}
