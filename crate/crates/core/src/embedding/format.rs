//! The `CLEM` embedding file.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "CLEM"
//!      4     1  version (1)
//!      5     3  zero padding
//!      8     4  dimension d, u32 LE
//!     12     8  record count n, u64 LE
//!     20  4·n·d  f32 LE payload, row-major
//! ```
//!
//! The file carries vectors only. Identity and labels live in the manifest and
//! are joined by row position.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::manifest::{DatasetManifest, LabelResolution};
use super::EmbeddingRecord;
use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: [u8; 4] = *b"CLEM";
pub const EMBEDDING_VERSION: u8 = 1;
pub const EMBEDDING_HEADER_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingHeader {
    pub version: u8,
    pub dim: u32,
    pub count: u64,
}

impl EmbeddingHeader {
    pub fn payload_len(&self) -> Option<u64> {
        self.count.checked_mul(self.dim as u64)?.checked_mul(4)
    }

    pub fn to_bytes(&self) -> [u8; EMBEDDING_HEADER_LEN] {
        let mut out = [0u8; EMBEDDING_HEADER_LEN];
        out[0..4].copy_from_slice(&EMBEDDING_MAGIC);
        out[4] = self.version;
        out[8..12].copy_from_slice(&self.dim.to_le_bytes());
        out[12..20].copy_from_slice(&self.count.to_le_bytes());
        out
    }

    /// Parses and validates the fixed header. Does not look at the payload.
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || bytes[0..4] != EMBEDDING_MAGIC {
            let found = &bytes[..bytes.len().min(4)];
            return Err(Error::BadMagic {
                expected: "CLEM".into(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        if bytes.len() < EMBEDDING_HEADER_LEN {
            return Err(Error::Truncated {
                expected: EMBEDDING_HEADER_LEN as u64,
                found: bytes.len() as u64,
            });
        }
        let version = bytes[4];
        if version != EMBEDDING_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        if bytes[5..8] != [0, 0, 0] {
            return Err(Error::CorruptHeader("nonzero padding bytes".into()));
        }
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        if dim == 0 {
            return Err(Error::CorruptHeader("dimension is zero".into()));
        }
        let header = EmbeddingHeader { version, dim, count };
        if header.payload_len().is_none() {
            return Err(Error::CorruptHeader(format!(
                "payload size overflows for {count} rows of dimension {dim}"
            )));
        }
        Ok(header)
    }
}

/// Dense row-major matrix of embedding rows as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: data.len() % dim,
            });
        }
        Ok(EmbeddingMatrix { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// First (row, component) holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        let flat = self.data.iter().position(|v| !v.is_finite())?;
        Some((flat / self.dim, flat % self.dim))
    }
}

pub fn encode_matrix(matrix: &EmbeddingMatrix) -> Vec<u8> {
    let header = EmbeddingHeader {
        version: EMBEDDING_VERSION,
        dim: matrix.dim as u32,
        count: matrix.rows() as u64,
    };
    let mut out = Vec::with_capacity(EMBEDDING_HEADER_LEN + matrix.data.len() * 4);
    out.extend_from_slice(&header.to_bytes());
    for v in &matrix.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes a complete file image. Finiteness is not checked here.
pub fn decode_matrix(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    let header = EmbeddingHeader::parse(bytes)?;
    let expected = header.payload_len().unwrap();
    let found = (bytes.len() - EMBEDDING_HEADER_LEN) as u64;
    if found < expected {
        return Err(Error::Truncated { expected, found });
    }
    if found > expected {
        return Err(Error::CorruptHeader(format!(
            "{} trailing bytes after payload",
            found - expected
        )));
    }
    let data = bytes[EMBEDDING_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    EmbeddingMatrix::new(header.dim as usize, data)
}

pub fn read_embedding_matrix(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::read(path, e))?;
    decode_matrix(&bytes)
}

/// Writes `records` as a `CLEM` file; row i is `records[i]`.
pub fn write_embedding_file(records: &[EmbeddingRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let first = records
        .first()
        .ok_or_else(|| Error::Empty("no records to write".into()))?;
    let dim = first.dim();
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    if dim > u32::MAX as usize {
        return Err(Error::InvalidArgument(format!("dimension {dim} exceeds u32")));
    }
    for (row, record) in records.iter().enumerate() {
        if record.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: record.dim(),
            });
        }
        if let Some(component) = record.first_non_finite() {
            return Err(Error::NonFinite {
                row,
                id: record.id.clone(),
                component,
            });
        }
    }

    let header = EmbeddingHeader {
        version: EMBEDDING_VERSION,
        dim: dim as u32,
        count: records.len() as u64,
    };
    let file = fs::File::create(path).map_err(|e| Error::write(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::write(path, e);
    out.write_all(&header.to_bytes()).map_err(io)?;
    for record in records {
        for v in &record.vector {
            out.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

/// Reads a `CLEM` file and joins it with `manifest` by row index.
///
/// The join is total: every row comes back, in file order. Rows whose source
/// label converts to "excluded" come back unlabeled; use
/// [`load_dataset`](super::load_dataset) to drop them.
pub fn read_embedding_file(
    path: impl AsRef<Path>,
    manifest: &DatasetManifest,
) -> Result<Vec<EmbeddingRecord>> {
    let matrix = read_embedding_matrix(path)?;
    join_manifest(&matrix, manifest)
}

pub(crate) fn join_manifest(
    matrix: &EmbeddingMatrix,
    manifest: &DatasetManifest,
) -> Result<Vec<EmbeddingRecord>> {
    if matrix.rows() != manifest.rows.len() {
        return Err(Error::CountMismatch {
            file: matrix.rows() as u64,
            manifest: manifest.rows.len() as u64,
        });
    }
    if let Some((row, component)) = matrix.first_non_finite() {
        return Err(Error::NonFinite {
            row,
            id: manifest.rows[row].id.clone(),
            component,
        });
    }
    manifest
        .rows
        .iter()
        .zip(matrix.iter_rows())
        .map(|(row, vector)| {
            let label = match row.resolve_label()? {
                LabelResolution::Labeled(label) => Some(label),
                LabelResolution::Unlabeled | LabelResolution::Excluded => None,
            };
            Ok(EmbeddingRecord {
                id: row.id.clone(),
                vector: vector.to_vec(),
                label,
                split: row.split,
                source: row.source.clone(),
                category: row.category.clone(),
            })
        })
        .collect()
}
