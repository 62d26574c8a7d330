//! Minimal safetensors reader/writer.
//!
//! Layout: an 8-byte little-endian header length, a JSON object mapping
//! tensor names to `{dtype, shape, data_offsets}` (offsets relative to the
//! data buffer), then the flat data buffer.

use std::path::Path;

use serde_json::{json, Map, Value};

use crate::bf16::words_from_le_bytes;
use crate::error::{Error, Result};
use crate::packer::shape_elements;

/// One tensor entry of a safetensors header.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    /// Byte range in the file (absolute).
    pub range: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bf16Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub words: Vec<u16>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Ingested {
    /// BF16 tensors in file order.
    pub tensors: Vec<Bf16Tensor>,
    /// `(name, dtype)` of every tensor that was not BF16.
    pub skipped: Vec<(String, String)>,
}

fn dtype_size(dtype: &str) -> Option<usize> {
    Some(match dtype {
        "BOOL" | "U8" | "I8" | "F8_E4M3" | "F8_E5M2" => 1,
        "BF16" | "F16" | "I16" | "U16" => 2,
        "F32" | "I32" | "U32" => 4,
        "F64" | "I64" | "U64" => 8,
        _ => return None,
    })
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Safetensors(msg.into())
}

/// Parses and validates the header. Entries come back sorted by offset.
pub fn parse_header(bytes: &[u8]) -> Result<Vec<TensorInfo>> {
    if bytes.len() < 8 {
        return Err(bad("file shorter than the 8-byte header length"));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap());
    let data_start = 8u64
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len() as u64)
        .ok_or_else(|| bad(format!("header length {header_len} exceeds file size")))?
        as usize;
    let header: Value = serde_json::from_slice(&bytes[8..data_start])
        .map_err(|e| bad(format!("malformed JSON header: {e}")))?;
    let obj = header
        .as_object()
        .ok_or_else(|| bad("header is not a JSON object"))?;
    let buffer_len = bytes.len() - data_start;

    let mut infos = Vec::new();
    for (name, entry) in obj {
        if name == "__metadata__" {
            continue;
        }
        let dtype = entry
            .get("dtype")
            .and_then(Value::as_str)
            .ok_or_else(|| bad(format!("{name}: missing dtype")))?;
        let shape = entry
            .get("shape")
            .and_then(Value::as_array)
            .ok_or_else(|| bad(format!("{name}: missing shape")))?
            .iter()
            .map(|d| d.as_u64().map(|d| d as usize))
            .collect::<Option<Vec<usize>>>()
            .ok_or_else(|| bad(format!("{name}: shape must be non-negative integers")))?;
        let offsets = entry
            .get("data_offsets")
            .and_then(Value::as_array)
            .filter(|a| a.len() == 2)
            .and_then(|a| Some((a[0].as_u64()? as usize, a[1].as_u64()? as usize)))
            .ok_or_else(|| bad(format!("{name}: data_offsets must be [start, end]")))?;
        if offsets.0 > offsets.1 || offsets.1 > buffer_len {
            return Err(bad(format!(
                "{name}: data_offsets {offsets:?} out of bounds for a {buffer_len}-byte buffer"
            )));
        }
        if let Some(size) = dtype_size(dtype) {
            let expected = shape_elements(&shape).and_then(|n| n.checked_mul(size));
            if expected != Some(offsets.1 - offsets.0) {
                return Err(bad(format!(
                    "{name}: shape {shape:?} of {dtype} does not match {} data bytes",
                    offsets.1 - offsets.0
                )));
            }
        }
        infos.push(TensorInfo {
            name: name.clone(),
            dtype: dtype.to_owned(),
            shape,
            range: (data_start + offsets.0, data_start + offsets.1),
        });
    }
    infos.sort_by(|a, b| a.range.cmp(&b.range).then(a.name.cmp(&b.name)));
    for pair in infos.windows(2) {
        if pair[1].range.0 < pair[0].range.1 {
            return Err(bad(format!(
                "data ranges of {} and {} overlap",
                pair[0].name, pair[1].name
            )));
        }
    }
    Ok(infos)
}

pub fn ingest_bytes(bytes: &[u8]) -> Result<Ingested> {
    let mut out = Ingested::default();
    for info in parse_header(bytes)? {
        if info.dtype == "BF16" {
            out.tensors.push(Bf16Tensor {
                words: words_from_le_bytes(&bytes[info.range.0..info.range.1])?,
                name: info.name,
                shape: info.shape,
            });
        } else {
            out.skipped.push((info.name, info.dtype));
        }
    }
    Ok(out)
}

pub fn ingest_safetensors(path: impl AsRef<Path>) -> Result<Ingested> {
    ingest_bytes(&std::fs::read(path)?)
}

/// Serializes BF16 tensors in the given order. Keys in the header are
/// sorted, so output is deterministic.
pub fn to_bytes(tensors: &[Bf16Tensor]) -> Result<Vec<u8>> {
    let mut header = Map::new();
    let mut offset = 0usize;
    for t in tensors {
        if header.contains_key(&t.name) {
            return Err(Error::DuplicateName(t.name.clone()));
        }
        let end = offset + 2 * t.words.len();
        header.insert(
            t.name.clone(),
            json!({"dtype": "BF16", "shape": t.shape, "data_offsets": [offset, end]}),
        );
        offset = end;
    }
    let mut json = serde_json::to_vec(&Value::Object(header)).expect("header serializes");
    while !json.len().is_multiple_of(8) {
        json.push(b' ');
    }
    let mut out = Vec::with_capacity(8 + json.len() + offset);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in tensors {
        for w in &t.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_safetensors(path: impl AsRef<Path>, tensors: &[Bf16Tensor]) -> Result<()> {
    std::fs::write(path, to_bytes(tensors)?)?;
    Ok(())
}
