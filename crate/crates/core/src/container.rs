//! `ARMF1` model files.
//!
//! Layout: the five magic bytes `ARMF1`, a little-endian `u32` header length,
//! a UTF-8 JSON header, then every parameter block as raw little-endian `f64`
//! values in the order the header lists them.

use crate::error::{Error, Result};
use crate::params::{BlockSpec, ParamLayout, Params};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const MAGIC: &[u8; 5] = b"ARMF1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    /// Model family: `backbone`, `elm` or `forecast`.
    pub kind: String,
    /// Family-specific metadata (architecture, seed, statistics...).
    pub meta: serde_json::Value,
    pub blocks: Vec<BlockSpec>,
}

pub fn encode(kind: &str, meta: serde_json::Value, params: &Params) -> Vec<u8> {
    let header = Header {
        kind: kind.to_string(),
        meta,
        blocks: params.layout().blocks().to_vec(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(9 + json.len() + params.values().len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in params.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<(Header, Params)> {
    let bad = |reason: &str| Error::format(path, reason);
    if bytes.len() < 9 || &bytes[..5] != MAGIC {
        return Err(bad("missing ARMF1 magic"));
    }
    let hlen = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
    let body = bytes
        .get(9..9 + hlen)
        .ok_or_else(|| bad("header length exceeds file size"))?;
    let header: Header =
        serde_json::from_slice(body).map_err(|e| bad(&format!("header JSON: {e}")))?;
    let layout = ParamLayout::from_specs(&header.blocks);
    let payload = &bytes[9 + hlen..];
    if payload.len() != layout.len() * 8 {
        return Err(bad(&format!(
            "expected {} parameter bytes, found {}",
            layout.len() * 8,
            payload.len()
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let params = Params::from_values(layout, values)?;
    Ok((header, params))
}

pub fn write(path: &Path, kind: &str, meta: serde_json::Value, params: &Params) -> Result<()> {
    fs::write(path, encode(kind, meta, params)).map_err(|e| Error::io(path, e))
}

/// Reads a container and checks that it holds the expected model family.
pub fn read(path: &Path, expected_kind: &str) -> Result<(Header, Params)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (header, params) = decode(&bytes, path)?;
    if header.kind != expected_kind {
        return Err(Error::format(
            path,
            format!("holds a {} model, expected {expected_kind}", header.kind),
        ));
    }
    Ok((header, params))
}
