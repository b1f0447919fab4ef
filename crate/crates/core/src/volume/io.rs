use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{check_dims, Volume};
use crate::error::{JbfError, Result};
use crate::fsio::{write_all_atomic, write_atomic};

/// JSON sidecar describing a `.raw` payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub dtype: String,
    pub order: String,
    pub endian: String,
}

impl VolumeHeader {
    pub fn f32_le(dims: [usize; 3]) -> Self {
        VolumeHeader {
            dims,
            dtype: "f32".into(),
            order: "x-fastest".into(),
            endian: "little".into(),
        }
    }
}

/// Resolves `name`, `name.raw` or `name.json` to the `(raw, json)` pair.
pub fn volume_paths(path: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    let path = path.as_ref();
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("raw") | Some("json") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut raw = stem.clone().into_os_string();
    raw.push(".raw");
    let mut json = stem.into_os_string();
    json.push(".json");
    (raw.into(), json.into())
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let (raw_path, json_path) = volume_paths(path);
    let text = fs::read_to_string(&json_path).map_err(|e| JbfError::io(&json_path, e))?;
    let bad = |reason: String| JbfError::BadHeader {
        path: json_path.clone(),
        reason,
    };
    let header: VolumeHeader = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    if header.dtype != "f32" || header.order != "x-fastest" || header.endian != "little" {
        return Err(bad(format!(
            "unsupported layout {}/{}/{}",
            header.dtype, header.order, header.endian
        )));
    }
    check_dims(header.dims).map_err(|e| bad(e.to_string()))?;

    let bytes = fs::read(&raw_path).map_err(|e| JbfError::io(&raw_path, e))?;
    let expected = header.dims.iter().product::<usize>();
    if bytes.len() != expected * 4 {
        return Err(JbfError::LengthMismatch {
            dims: header.dims,
            len: bytes.len() / 4,
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Volume::new(header.dims, data)
}

/// Writes `<stem>.raw` (little-endian f32) and `<stem>.json`.
pub fn save_volume(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let (raw_path, json_path) = volume_paths(path);
    let mut bytes = Vec::with_capacity(v.len() * 4);
    for (index, &value) in v.data().iter().enumerate() {
        let single = value as f32;
        if !single.is_finite() {
            return Err(JbfError::NonFinite { index });
        }
        bytes.extend_from_slice(&single.to_le_bytes());
    }
    let header = serde_json::to_vec_pretty(&VolumeHeader::f32_le(v.dims()))?;
    write_all_atomic(&[(&raw_path, &bytes), (&json_path, &header)])
}

/// Linear display window for PGM export: `lo` maps to 0, `hi` to 65535.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgmWindow {
    pub lo: f64,
    pub hi: f64,
}

impl Default for PgmWindow {
    fn default() -> Self {
        PgmWindow {
            lo: -150.0,
            hi: 500.0,
        }
    }
}

/// Writes slice `z` as a binary 16-bit PGM, clamping values outside the window.
pub fn export_pgm_slice(
    v: &Volume,
    z: usize,
    window: PgmWindow,
    path: impl AsRef<Path>,
) -> Result<()> {
    let [nx, ny, nz] = v.dims();
    if z >= nz {
        return Err(JbfError::InvalidParam(format!(
            "slice {z} out of range 0..{nz}"
        )));
    }
    if window.hi.is_nan() || window.lo.is_nan() || window.hi <= window.lo {
        return Err(JbfError::InvalidParam(
            "PGM window must have hi > lo".into(),
        ));
    }
    let mut out = format!("P5\n{nx} {ny}\n65535\n").into_bytes();
    let scale = 65535.0 / (window.hi - window.lo);
    for y in 0..ny {
        for x in 0..nx {
            let level = ((v.get(x, y, z) - window.lo) * scale)
                .round()
                .clamp(0.0, 65535.0) as u16;
            out.extend_from_slice(&level.to_be_bytes());
        }
    }
    write_atomic(path.as_ref(), &out)
}
