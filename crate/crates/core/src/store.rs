//! Manifest + raw blob persistence shared by datasets, transforms and model
//! checkpoints.
//!
//! Every artifact is a directory holding a UTF-8 JSON manifest and one raw
//! little-endian blob. The manifest names the element type so readers can
//! check the blob length before decoding.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ENDIANNESS: &str = "little";

/// Element type of a blob.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

pub fn encode(values: &[f64], dtype: Dtype) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * dtype.size());
    match dtype {
        Dtype::F32 => values
            .iter()
            .for_each(|v| out.extend_from_slice(&(*v as f32).to_le_bytes())),
        Dtype::F64 => values
            .iter()
            .for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
    }
    out
}

/// Decodes a blob, checking it holds exactly `expected` elements.
pub fn decode(bytes: &[u8], dtype: Dtype, expected: usize) -> Result<Vec<f64>> {
    if bytes.len() != expected * dtype.size() {
        return Err(Error::Format(format!(
            "size mismatch: manifest expects {} {:?} values ({} bytes), blob has {} bytes",
            expected,
            dtype,
            expected * dtype.size(),
            bytes.len()
        )));
    }
    let values = match dtype {
        Dtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        Dtype::F64 => bytes
            .chunks_exact(8)
            .map(|c| {
                let mut b = [0u8; 8];
                b.copy_from_slice(c);
                f64::from_le_bytes(b)
            })
            .collect(),
    };
    Ok(values)
}

/// Tags an io error with the path it concerns.
fn at(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

pub fn write_blob(path: &Path, values: &[f64], dtype: Dtype) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path).map_err(at(path))?);
    w.write_all(&encode(values, dtype))?;
    w.flush()?;
    Ok(())
}

pub fn read_blob(path: &Path, dtype: Dtype, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(at(path))?;
    decode(&bytes, dtype, expected)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(at(path))?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(at(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Hex SHA-256 prefix (16 hex chars) used for split and config fingerprints.
pub fn fingerprint(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    hex::encode(&digest[..8])
}

/// Fingerprint of an index list; order-insensitive.
pub fn index_fingerprint(indices: &[usize]) -> String {
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    let bytes: Vec<u8> = sorted.iter().flat_map(|i| (*i as u64).to_le_bytes()).collect();
    fingerprint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_rejects_short_blob() {
        let bytes = encode(&[1.0, 2.0, 3.0], Dtype::F32);
        let err = decode(&bytes, Dtype::F32, 4).unwrap_err();
        assert!(err.to_string().contains("size mismatch"));
    }

    #[test]
    fn f64_blob_is_exact() {
        let v = [std::f64::consts::PI, -1e-300, 7.0];
        let back = decode(&encode(&v, Dtype::F64), Dtype::F64, 3).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn index_fingerprint_ignores_order() {
        assert_eq!(index_fingerprint(&[3, 1, 2]), index_fingerprint(&[1, 2, 3]));
        assert_ne!(index_fingerprint(&[1, 2]), index_fingerprint(&[1, 3]));
    }
}
