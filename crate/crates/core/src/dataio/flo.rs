//! Middlebury `.flo`: f32 magic 202021.25, i32 width, i32 height, then
//! row-major interleaved f32 (u, v). Everything little-endian.

use std::path::Path;

use super::{read_file, write_file, DataError, Result};
use crate::geometry::FlowField;

pub const MAGIC: f32 = 202021.25;
const HEADER: usize = 12;

pub fn encode_flow(f: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + f.data().len() * 8);
    out.extend_from_slice(&MAGIC.to_le_bytes());
    out.extend_from_slice(&(f.width() as i32).to_le_bytes());
    out.extend_from_slice(&(f.height() as i32).to_le_bytes());
    for d in f.data() {
        out.extend_from_slice(&d[0].to_le_bytes());
        out.extend_from_slice(&d[1].to_le_bytes());
    }
    out
}

fn word(b: &[u8], at: usize) -> [u8; 4] {
    [b[at], b[at + 1], b[at + 2], b[at + 3]]
}

/// Decode a `.flo` byte buffer; `name` is used in error messages.
pub fn decode_flow(bytes: &[u8], name: &Path) -> Result<FlowField> {
    if bytes.len() < HEADER {
        return Err(DataError::bytes(
            name,
            bytes.len() as u64,
            format!("truncated header ({} of {HEADER} bytes)", bytes.len()),
        ));
    }
    let magic = f32::from_le_bytes(word(bytes, 0));
    if magic != MAGIC {
        return Err(DataError::bytes(name, 0, format!("bad magic {magic}")));
    }
    let w = i32::from_le_bytes(word(bytes, 4));
    let h = i32::from_le_bytes(word(bytes, 8));
    if w <= 0 || h <= 0 {
        return Err(DataError::bytes(name, 4, format!("invalid dimensions {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let expected = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| DataError::bytes(name, 4, "dimensions overflow"))?;
    let payload = bytes.len() - HEADER;
    if payload < expected {
        return Err(DataError::bytes(
            name,
            bytes.len() as u64,
            format!("truncated payload: {payload} of {expected} bytes"),
        ));
    }
    if payload > expected {
        return Err(DataError::bytes(
            name,
            (HEADER + expected) as u64,
            format!("{} trailing bytes", payload - expected),
        ));
    }
    let mut data = Vec::with_capacity(w * h);
    for k in 0..w * h {
        let at = HEADER + 8 * k;
        let u = f32::from_le_bytes(word(bytes, at));
        let v = f32::from_le_bytes(word(bytes, at + 4));
        if !u.is_finite() || !v.is_finite() {
            return Err(DataError::bytes(name, at as u64, "non-finite displacement"));
        }
        data.push([u, v]);
    }
    FlowField::new(w, h, data).map_err(|e| DataError::invalid(name, e.to_string()))
}

pub fn read_flow(path: &Path) -> Result<FlowField> {
    decode_flow(&read_file(path)?, path)
}

pub fn write_flow(path: &Path, f: &FlowField) -> Result<()> {
    write_file(path, &encode_flow(f))
}
