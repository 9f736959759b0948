//! `SSB1` subspace files.
//!
//! Layout: the 8-byte magic `SSB1\0\0\0\0`, a little-endian `u32` header
//! length, the UTF-8 JSON header, then the `N x d` basis and (if present) the
//! `N`-vector mean as little-endian `f64`, column-major.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::estimate::Subspace;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 8] = *b"SSB1\0\0\0\0";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubspaceHeader {
    pub ambient: usize,
    pub dim: usize,
    pub energy: f64,
    pub source: String,
    pub has_mean: bool,
    pub samples: usize,
    pub created_by: String,
}

pub fn write_subspace(w: &mut impl Write, s: &Subspace) -> Result<()> {
    let header = SubspaceHeader {
        ambient: s.ambient(),
        dim: s.dim(),
        energy: s.energy,
        source: s.source.clone(),
        has_mean: s.mean.is_some(),
        samples: s.samples,
        created_by: concat!("aerorecog-core ", env!("CARGO_PKG_VERSION")).to_string(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
    let len = u32::try_from(json.len()).map_err(|_| Error::Format("header too long".into()))?;
    w.write_all(&MAGIC)?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(&json)?;
    let mut buf = Vec::with_capacity(8 * (s.basis.len() + s.ambient()));
    // nalgebra storage is column-major already
    for v in s.basis.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(m) = &s.mean {
        for v in m.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_subspace(r: &mut impl Read) -> Result<Subspace> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn save_subspace(path: impl AsRef<Path>, s: &Subspace) -> Result<()> {
    let mut buf = Vec::new();
    write_subspace(&mut buf, s)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_subspace(path: impl AsRef<Path>) -> Result<Subspace> {
    decode(&std::fs::read(path)?)
}

fn decode(bytes: &[u8]) -> Result<Subspace> {
    if bytes.len() < 12 || bytes[..8] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = &bytes[12..];
    if body.len() < len {
        return Err(Error::Format("truncated header".into()));
    }
    let header: SubspaceHeader =
        serde_json::from_slice(&body[..len]).map_err(|e| Error::Format(format!("header: {e}")))?;
    let payload = &body[len..];
    let n = header.ambient;
    let count = n
        .checked_mul(header.dim)
        .and_then(|b| b.checked_add(if header.has_mean { n } else { 0 }))
        .ok_or_else(|| Error::Format("header sizes overflow".into()))?;
    if payload.len() != count * 8 {
        return Err(Error::Format(format!(
            "payload holds {} bytes, header implies {}",
            payload.len(),
            count * 8
        )));
    }
    if header.dim == 0 || n == 0 {
        return Err(Error::Format("empty basis".into()));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("non-finite value".into()));
    }
    let basis = DMatrix::from_column_slice(n, header.dim, &values[..n * header.dim]);
    let mean = header
        .has_mean
        .then(|| DVector::from_column_slice(&values[n * header.dim..]));
    Ok(Subspace {
        basis,
        mean,
        energy: header.energy,
        samples: header.samples,
        source: header.source,
    })
}
