//! Raw depth raster files.
//!
//! Layout: 16-byte header (`b"DPTH"`, u32 width, u32 height, u32 reserved,
//! all little-endian) followed by `width * height` little-endian f32 values
//! in row-major order. Invalid pixels are stored as quiet NaN.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use crate::geom::DepthMap;

pub const MAGIC: &[u8; 4] = b"DPTH";
pub const HEADER_LEN: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum DepthIoError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
}

pub fn encode(depth: &DepthMap) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + depth.values().len() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&depth.width().to_le_bytes());
    buf.extend_from_slice(&depth.height().to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    for &d in depth.values() {
        let v = if d.is_finite() { d as f32 } else { f32::NAN };
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode(bytes: &[u8], path: &str) -> Result<DepthMap, DepthIoError> {
    let fail = |reason: String| DepthIoError::Format { path: path.to_string(), reason };
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(fail("missing DPTH header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let (width, height) = (word(4), word(8));
    let n = width as usize * height as usize;
    if bytes.len() != HEADER_LEN + 4 * n {
        return Err(fail(format!("payload is {} bytes, expected {}", bytes.len() - HEADER_LEN, 4 * n)));
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| {
            let v = f32::from_le_bytes(c.try_into().unwrap());
            if v.is_finite() { v as f64 } else { f64::NAN }
        })
        .collect();
    DepthMap::new(width, height, values).map_err(|e| fail(e.to_string()))
}

pub fn write(path: &Path, depth: &DepthMap) -> Result<(), DepthIoError> {
    let io_err = |source| DepthIoError::Io { path: path.display().to_string(), source };
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(&encode(depth)).map_err(io_err)
}

pub fn read(path: &Path) -> Result<DepthMap, DepthIoError> {
    let bytes = fs::read(path).map_err(|source| DepthIoError::Io { path: path.display().to_string(), source })?;
    decode(&bytes, &path.display().to_string())
}

/// Rounds every value to f32 precision, matching what a file round trip
/// produces.
pub fn quantize(depth: &DepthMap) -> DepthMap {
    let values = depth.values().iter().map(|&d| if d.is_finite() { d as f32 as f64 } else { f64::NAN }).collect();
    DepthMap::new(depth.width(), depth.height(), values).expect("quantized depth keeps invariants")
}
