//! Middlebury `.flo` optical-flow files.
//!
//! Layout (all little-endian): `f32` tag 202021.25 ("PIEH"), `i32` width,
//! `i32` height, then `width * height` interleaved `(u, v)` `f32` pairs in
//! row-major order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::{FlowField, UNKNOWN_FLOW, UNKNOWN_FLOW_THRESHOLD};

pub const FLO_TAG: f32 = 202021.25;
const HEADER_LEN: usize = 12;

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::UnreadableFile {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    decode_flo(&bytes).map_err(|e| match e {
        Error::BadMagic { .. } => Error::BadMagic {
            path: path.to_path_buf(),
        },
        other => other,
    })
}

pub fn decode_flo(bytes: &[u8]) -> Result<FlowField> {
    if bytes.len() < HEADER_LEN || bytes[0..4] != FLO_TAG.to_le_bytes() {
        return Err(Error::BadMagic {
            path: "<memory>".into(),
        });
    }
    let width = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if width <= 0 || height <= 0 {
        return Err(Error::EmptyImage);
    }
    let (width, height) = (width as usize, height as usize);
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(8))
        .ok_or(Error::FloSizeMismatch {
            expected: usize::MAX,
            actual: bytes.len() - HEADER_LEN,
        })?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::FloSizeMismatch {
            expected,
            actual: payload.len(),
        });
    }
    let uv: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let valid = uv
        .chunks_exact(2)
        .map(|p| {
            p.iter()
                .all(|v| v.is_finite() && v.abs() <= UNKNOWN_FLOW_THRESHOLD)
        })
        .collect();
    FlowField::with_validity(width, height, uv, valid)
}

pub fn encode_flo(flow: &FlowField) -> Result<Vec<u8>> {
    let (w, h) = flow.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + w * h * 8);
    out.extend_from_slice(&FLO_TAG.to_le_bytes());
    out.extend_from_slice(&(w as i32).to_le_bytes());
    out.extend_from_slice(&(h as i32).to_le_bytes());
    for y in 0..h {
        for x in 0..w {
            let (u, v) = flow.get(x, y);
            if !u.is_finite() || !v.is_finite() {
                return Err(Error::NonFiniteFlow { x, y });
            }
            let (u, v) = if flow.is_valid(x, y) {
                (u, v)
            } else {
                (UNKNOWN_FLOW, UNKNOWN_FLOW)
            };
            out.extend_from_slice(&u.to_le_bytes());
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_flo(flow: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_flo(flow)?;
    std::fs::write(path, bytes).map_err(|source| Error::Write {
        path: path.to_path_buf(),
        source,
    })
}
