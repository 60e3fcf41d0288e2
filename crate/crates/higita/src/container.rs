//! Binary container shared by checkpoints and galleries:
//!
//! ```text
//! magic      8 bytes
//! version    u32 LE
//! header_len u64 LE
//! header     header_len bytes of UTF-8 JSON
//! data       f64 LE values
//! ```
//!
//! The header carries a SHA-256 of the data section.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

const PREFIX: usize = 8 + 4 + 8;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: format version {found}, expected {expected}")]
    VersionMismatch {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("{path}: corrupt file: {reason}")]
    CorruptFile { path: PathBuf, reason: String },
}

impl ContainerError {
    pub fn corrupt(path: &Path, reason: impl Into<String>) -> Self {
        ContainerError::CorruptFile {
            path: path.to_path_buf(),
            reason: reason.into(),
        }
    }
}

/// Hex SHA-256 of the little-endian encoding of `data`.
pub fn checksum(data: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in data {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn encode(magic: &[u8; 8], version: u32, header: &[u8], data: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(PREFIX + header.len() + data.len() * 8);
    out.extend_from_slice(magic);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header);
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write(
    path: &Path,
    magic: &[u8; 8],
    version: u32,
    header: &[u8],
    data: &[f64],
) -> Result<(), ContainerError> {
    fs::write(path, encode(magic, version, header, data)).map_err(|source| ContainerError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Splits a container into its header bytes and data values. The data
/// checksum is left to the caller, which knows where the header keeps it.
pub fn decode(
    path: &Path,
    bytes: &[u8],
    magic: &[u8; 8],
    version: u32,
) -> Result<(Vec<u8>, Vec<f64>), ContainerError> {
    if bytes.len() < PREFIX {
        return Err(ContainerError::corrupt(path, "truncated prefix"));
    }
    if &bytes[..8] != magic {
        return Err(ContainerError::corrupt(path, "bad magic"));
    }
    let found = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if found != version {
        return Err(ContainerError::VersionMismatch {
            path: path.to_path_buf(),
            found,
            expected: version,
        });
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let header_end = usize::try_from(header_len)
        .ok()
        .and_then(|n| PREFIX.checked_add(n))
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| ContainerError::corrupt(path, "truncated header"))?;
    let rest = &bytes[header_end..];
    if !rest.len().is_multiple_of(8) {
        return Err(ContainerError::corrupt(
            path,
            "data section is not a whole number of f64 values",
        ));
    }
    let data = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((bytes[PREFIX..header_end].to_vec(), data))
}

pub fn read(
    path: &Path,
    magic: &[u8; 8],
    version: u32,
) -> Result<(Vec<u8>, Vec<f64>), ContainerError> {
    let bytes = fs::read(path).map_err(|source| ContainerError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(path, &bytes, magic, version)
}
