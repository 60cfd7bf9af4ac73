//! The `CLMH` model checkpoint.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "CLMH"
//!      4     1  version (1)
//!      5     3  zero padding
//!      8     4  d_in, u32 LE
//!     12     4  d_hidden, u32 LE
//!     16     …  W1 (row-major), b1, w2, b2 as f32 LE
//!      …     4  metadata length m, u32 LE
//!      …     m  metadata, UTF-8 JSON
//! ```
//!
//! Parameters are trained in `f64` and stored as `f32`. Metadata is kept as
//! the exact bytes read so that rewriting a checkpoint reproduces it.

use std::fs;
use std::path::Path;

use super::{ClassifierHead, HeadConfig, DEFAULT_DROPOUT};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"CLMH";
pub const CHECKPOINT_VERSION: u8 = 1;
pub const CHECKPOINT_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub head: ClassifierHead,
    /// JSON object describing how the head was produced.
    pub metadata: String,
}

impl Checkpoint {
    pub fn new(head: ClassifierHead, metadata: &serde_json::Value) -> Result<Self> {
        Ok(Checkpoint {
            head,
            metadata: serde_json::to_string(metadata)?,
        })
    }

    pub fn metadata_json(&self) -> Result<serde_json::Value> {
        Ok(serde_json::from_str(&self.metadata)?)
    }
}

pub fn encode_checkpoint(checkpoint: &Checkpoint) -> Result<Vec<u8>> {
    let head = &checkpoint.head;
    let config = head.config();
    let meta = checkpoint.metadata.as_bytes();
    let meta_len = u32::try_from(meta.len())
        .map_err(|_| Error::InvalidArgument("checkpoint metadata exceeds 4 GiB".into()))?;
    for (what, value) in [("d_in", config.d_in), ("d_hidden", config.d_hidden)] {
        if value > u32::MAX as usize {
            return Err(Error::InvalidArgument(format!("{what} {value} exceeds u32")));
        }
    }

    let n_params = config.parameter_count();
    let mut out = Vec::with_capacity(CHECKPOINT_HEADER_LEN + 4 * n_params + 4 + meta.len());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    out.extend_from_slice(&[0, 0, 0]);
    out.extend_from_slice(&(config.d_in as u32).to_le_bytes());
    out.extend_from_slice(&(config.d_hidden as u32).to_le_bytes());
    let b2 = [head.b2()];
    let params = head
        .w1()
        .iter()
        .chain(head.b1())
        .chain(head.w2())
        .chain(&b2);
    for &p in params {
        let stored = p as f32;
        if !stored.is_finite() {
            return Err(Error::NonFiniteValue {
                what: format!("parameter {p} does not fit in f32"),
            });
        }
        out.extend_from_slice(&stored.to_le_bytes());
    }
    out.extend_from_slice(&meta_len.to_le_bytes());
    out.extend_from_slice(meta);
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 4 || bytes[0..4] != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            expected: "CLMH".into(),
            found: String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into_owned(),
        });
    }
    if bytes.len() < CHECKPOINT_HEADER_LEN {
        return Err(Error::Truncated {
            expected: CHECKPOINT_HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    if bytes[4] != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion(bytes[4]));
    }
    if bytes[5..8] != [0, 0, 0] {
        return Err(Error::CorruptHeader("nonzero padding bytes".into()));
    }
    let d_in = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let d_hidden = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if d_in == 0 || d_hidden == 0 {
        return Err(Error::CorruptHeader(format!(
            "zero dimension (d_in={d_in}, d_hidden={d_hidden})"
        )));
    }

    let n_params = (d_hidden as u64) * (d_in as u64) + 2 * d_hidden as u64 + 1;
    let params_end = CHECKPOINT_HEADER_LEN as u64 + 4 * n_params;
    let available = bytes.len() as u64;
    if available < params_end + 4 {
        return Err(Error::Truncated {
            expected: params_end + 4,
            found: available,
        });
    }
    let params_end = params_end as usize;
    let meta_len = u32::from_le_bytes(bytes[params_end..params_end + 4].try_into().unwrap()) as u64;
    let total = params_end as u64 + 4 + meta_len;
    if available < total {
        return Err(Error::Truncated {
            expected: total,
            found: available,
        });
    }
    if available > total {
        return Err(Error::CorruptHeader(format!(
            "{} trailing bytes after metadata",
            available - total
        )));
    }

    let params: Vec<f64> = bytes[CHECKPOINT_HEADER_LEN..params_end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let metadata = std::str::from_utf8(&bytes[params_end + 4..])
        .map_err(|e| Error::CorruptHeader(format!("metadata is not UTF-8: {e}")))?
        .to_string();
    let meta: serde_json::Value = serde_json::from_str(&metadata)?;
    let dropout_p = meta
        .pointer("/head/dropout_p")
        .and_then(|v| v.as_f64())
        .unwrap_or(DEFAULT_DROPOUT);

    let config = HeadConfig::new(d_in, d_hidden, dropout_p)?;
    let w1_len = d_hidden * d_in;
    let head = ClassifierHead::from_parts(
        config,
        params[..w1_len].to_vec(),
        params[w1_len..w1_len + d_hidden].to_vec(),
        params[w1_len + d_hidden..w1_len + 2 * d_hidden].to_vec(),
        params[w1_len + 2 * d_hidden],
    )?;
    Ok(Checkpoint { head, metadata })
}

pub fn write_checkpoint(checkpoint: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(checkpoint)?;
    fs::write(path, bytes).map_err(|e| Error::write(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::read(path, e))?;
    decode_checkpoint(&bytes)
}
