//! Artifact serialization: field CSVs, JSON reports, content hashes and
//! atomic file replacement.

use crate::error::{Error, Result};
use crate::geometry::grid::GridSpec;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

/// Write `bytes` to `path` by way of a temporary sibling and a rename, so a
/// reader never observes a partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Pretty JSON with a trailing newline. Floats use the shortest
/// representation that round-trips exactly.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value).map_err(|e| Error::Config(format!("json encoding: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Fixed scientific format with 17 significant digits.
#[inline]
pub fn fmt_f64(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.16e}");
}

/// CSV text from a header and rows of numbers.
pub fn table_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            fmt_f64(&mut out, *v);
        }
        out.push('\n');
    }
    out
}

/// `x,y,value` rows for the grid nodes where `mask` holds, visiting every
/// `stride`-th node in each direction.
pub fn field_csv(grid: &GridSpec, values: &[f64], mask: &[bool], stride: usize) -> String {
    let stride = stride.max(1);
    let mut out = String::from("x,y,value\n");
    for j in (0..grid.ny).step_by(stride) {
        for i in (0..grid.nx).step_by(stride) {
            let k = grid.index(i, j);
            if !mask[k] {
                continue;
            }
            let p = grid.node(i, j);
            fmt_f64(&mut out, p[0]);
            out.push(',');
            fmt_f64(&mut out, p[1]);
            out.push(',');
            fmt_f64(&mut out, values[k]);
            out.push('\n');
        }
    }
    out
}
