//! Gallery files: the encoded candidate texts of one level, in the shared
//! binary container.

use std::path::Path;

use higita_core::alignment::Level;
use higita_core::data::{PaddedSequences, Slot};
use higita_core::retrieval::Gallery;
use higita_core::tensor::Tensor;
use serde::{Deserialize, Serialize};

use crate::container::{self, ContainerError};

pub const MAGIC: &[u8; 8] = b"HIGITAGL";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    level: String,
    candidates: String,
    max_len: usize,
    dim: usize,
    ids: Vec<u32>,
    /// One of `D`, `S`, `P` per padded slot.
    slots: String,
    valid_len: Vec<usize>,
    data_sha256: String,
}

pub fn to_bytes(g: &Gallery) -> Vec<u8> {
    let s = &g.sequences;
    let header = Header {
        level: g.level.name().to_string(),
        candidates: g.candidates.iter().collect(),
        max_len: s.max_len,
        dim: g.dim(),
        ids: s.ids.clone(),
        slots: s
            .slots
            .iter()
            .map(|s| match s {
                Slot::Detail => 'D',
                Slot::Structure => 'S',
                Slot::Pad => 'P',
            })
            .collect(),
        valid_len: s.valid_len.clone(),
        data_sha256: container::checksum(g.tokens.data()),
    };
    let json = serde_json::to_vec_pretty(&header).expect("header serializes");
    container::encode(MAGIC, VERSION, &json, g.tokens.data())
}

pub fn save(g: &Gallery, path: &Path) -> Result<(), ContainerError> {
    std::fs::write(path, to_bytes(g)).map_err(|source| ContainerError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load(path: &Path) -> Result<Gallery, ContainerError> {
    let corrupt = |r: &str| ContainerError::corrupt(path, r);
    let (header, data) = container::read(path, MAGIC, VERSION)?;
    let h: Header =
        serde_json::from_slice(&header).map_err(|e| corrupt(&format!("header: {e}")))?;
    if container::checksum(&data) != h.data_sha256 {
        return Err(corrupt("data checksum mismatch"));
    }
    let level = Level::from_name(&h.level).ok_or_else(|| corrupt("unknown level"))?;
    let candidates: Vec<char> = h.candidates.chars().collect();
    let rows = candidates.len();
    let cells = rows * h.max_len;
    if h.ids.len() != cells
        || h.slots.chars().count() != cells
        || h.valid_len.len() != rows
        || data.len() != cells * h.dim
    {
        return Err(corrupt("inconsistent sizes"));
    }
    let slots = h
        .slots
        .chars()
        .map(|c| match c {
            'D' => Ok(Slot::Detail),
            'S' => Ok(Slot::Structure),
            'P' => Ok(Slot::Pad),
            _ => Err(corrupt("bad slot code")),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Gallery {
        level,
        candidates,
        sequences: PaddedSequences {
            kind: level.family(),
            rows,
            max_len: h.max_len,
            ids: h.ids,
            slots,
            valid_len: h.valid_len,
        },
        tokens: Tensor::new(&[rows, h.max_len, h.dim], data),
    })
}
