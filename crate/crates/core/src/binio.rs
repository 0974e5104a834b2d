//! Little-endian binary containers for edge lists and dense matrices, plus
//! JSON manifest helpers.
//!
//! Edge file: 8-byte magic, u32 pair count, then `count` (u32, u32) pairs.
//! Matrix file: 8-byte magic, u32 rows, u32 cols, then rows*cols f32 values
//! in row-major order.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use whin_autodiff::Tensor;

use crate::error::{Error, Result};

pub const EDGE_MAGIC: &[u8; 8] = b"WHINEDG1";
pub const MATRIX_MAGIC: &[u8; 8] = b"WHINMAT1";

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn check_header(path: &Path, bytes: &[u8], magic: &[u8; 8], header_len: usize) -> Result<()> {
    if bytes.len() < header_len {
        return Err(Error::format(path, "file shorter than its header"));
    }
    if &bytes[..8] != magic {
        return Err(Error::format(
            path,
            format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&bytes[..8]),
                String::from_utf8_lossy(magic)
            ),
        ));
    }
    Ok(())
}

fn check_body(path: &Path, actual: usize, expected: usize) -> Result<()> {
    if actual < expected {
        Err(Error::format(
            path,
            format!("truncated: {actual} payload bytes, expected {expected}"),
        ))
    } else if actual > expected {
        Err(Error::format(
            path,
            format!("{} trailing bytes after payload", actual - expected),
        ))
    } else {
        Ok(())
    }
}

pub fn write_edges(path: &Path, edges: &[(u32, u32)]) -> Result<()> {
    let count = u32::try_from(edges.len())
        .map_err(|_| Error::format(path, "too many edges for a u32 count"))?;
    let mut out = Vec::with_capacity(12 + edges.len() * 8);
    out.extend_from_slice(EDGE_MAGIC);
    out.extend_from_slice(&count.to_le_bytes());
    for &(s, d) in edges {
        out.extend_from_slice(&s.to_le_bytes());
        out.extend_from_slice(&d.to_le_bytes());
    }
    write_bytes(path, &out)
}

pub fn read_edges(path: &Path) -> Result<Vec<(u32, u32)>> {
    let bytes = read_bytes(path)?;
    check_header(path, &bytes, EDGE_MAGIC, 12)?;
    let count = u32_at(&bytes, 8) as usize;
    check_body(path, bytes.len() - 12, count * 8)?;
    Ok((0..count)
        .map(|i| {
            let at = 12 + i * 8;
            (u32_at(&bytes, at), u32_at(&bytes, at + 4))
        })
        .collect())
}

pub fn write_matrix(path: &Path, m: &Tensor<f32>) -> Result<()> {
    let rows = u32::try_from(m.rows()).map_err(|_| Error::format(path, "too many rows"))?;
    let cols = u32::try_from(m.cols()).map_err(|_| Error::format(path, "too many cols"))?;
    let mut out = Vec::with_capacity(16 + m.len() * 4);
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    write_bytes(path, &out)
}

pub fn read_matrix(path: &Path) -> Result<Tensor<f32>> {
    let bytes = read_bytes(path)?;
    check_header(path, &bytes, MATRIX_MAGIC, 16)?;
    let rows = u32_at(&bytes, 8) as usize;
    let cols = u32_at(&bytes, 12) as usize;
    check_body(path, bytes.len() - 16, rows * cols * 4)?;
    let data = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(Tensor::new(rows, cols, data).expect("length checked above"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e.to_string()))
}
