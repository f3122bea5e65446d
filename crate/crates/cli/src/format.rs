//! SEQM binary matrix files.
//!
//! Layout, all little-endian: the magic `SEQM`, a `u16` version (1), `u64`
//! rows, `u64` cols, then `rows * cols` `f64` values in row-major order.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use semeq_core::RealMatrix;

pub const MAGIC: &[u8; 4] = b"SEQM";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 8 + 8;

pub fn encode_matrix(m: &RealMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_matrix(bytes: &[u8]) -> Result<RealMatrix> {
    ensure!(
        bytes.len() >= HEADER_LEN,
        "truncated matrix header ({} bytes)",
        bytes.len()
    );
    ensure!(&bytes[..4] == MAGIC, "not a SEQM matrix file");
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    ensure!(version == VERSION, "unsupported SEQM version {version}");
    let rows = u64::from_le_bytes(bytes[6..14].try_into()?);
    let cols = u64::from_le_bytes(bytes[14..22].try_into()?);
    let payload = &bytes[HEADER_LEN..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .context("matrix dimensions overflow")?;
    if payload.len() as u64 != expected {
        bail!(
            "payload holds {} bytes, a {rows}x{cols} matrix needs {expected}",
            payload.len()
        );
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(RealMatrix::new(usize::try_from(rows)?, usize::try_from(cols)?, data)?)
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`, so
/// `path` either keeps its old content or holds the complete new content.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("cannot create directory {}", dir.display()))?;
    let name = path
        .file_name()
        .with_context(|| format!("{} is not a file path", path.display()))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| -> Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.with_context(|| format!("cannot write {}", path.display()))
}

pub fn write_matrix(path: &Path, m: &RealMatrix) -> Result<()> {
    write_atomic(path, &encode_matrix(m))
}

pub fn read_matrix(path: &Path) -> Result<RealMatrix> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    decode_matrix(&bytes).with_context(|| format!("invalid matrix file {}", path.display()))
}
