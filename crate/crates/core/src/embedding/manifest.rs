//! JSON-Lines dataset manifests, one row per embedding-file row.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::format::{join_manifest, read_embedding_matrix};
use super::labels::{convert_smid_label, convert_source_label, LabelSource};
use super::{EmbeddingRecord, Label, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: String,
    /// Canonical label if already known. Takes precedence over conversion.
    pub label: Option<Label>,
    pub split: Split,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moral_rate: Option<f64>,
    /// Source-native class name, converted by the source's label adapter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_class: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_id: Option<String>,
    /// Frame time in seconds, for video rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelResolution {
    Labeled(Label),
    Unlabeled,
    Excluded,
}

impl ManifestRow {
    pub fn new(id: impl Into<String>, split: Split, source: impl Into<String>) -> Self {
        ManifestRow {
            id: id.into(),
            label: None,
            split,
            source: source.into(),
            category: None,
            moral_rate: None,
            raw_class: None,
            clip_id: None,
            timestamp: None,
        }
    }

    pub fn from_record(record: &EmbeddingRecord) -> Self {
        ManifestRow {
            label: record.label,
            category: record.category.clone(),
            ..ManifestRow::new(record.id.clone(), record.split, record.source.clone())
        }
    }

    pub fn resolve_label(&self) -> Result<LabelResolution> {
        let converted = if let Some(label) = self.label {
            return Ok(LabelResolution::Labeled(label));
        } else if self.source == "smid" {
            match self.moral_rate {
                Some(rate) => convert_smid_label(rate)?,
                None => return Ok(LabelResolution::Unlabeled),
            }
        } else if let Some(raw) = &self.raw_class {
            convert_source_label(&self.source, raw)?
        } else if self.source == LabelSource::Benchmark.as_str() {
            match &self.category {
                Some(keyword) => convert_source_label(&self.source, keyword)?,
                None => return Ok(LabelResolution::Unlabeled),
            }
        } else if self.source == LabelSource::Coco.as_str() {
            Some(Label::Moral)
        } else {
            return Ok(LabelResolution::Unlabeled);
        };
        Ok(match converted {
            Some(label) => LabelResolution::Labeled(label),
            None => LabelResolution::Excluded,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    pub rows: Vec<ManifestRow>,
}

impl DatasetManifest {
    pub fn new(rows: Vec<ManifestRow>) -> Result<Self> {
        let manifest = DatasetManifest { rows };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn from_records(records: &[EmbeddingRecord]) -> Result<Self> {
        DatasetManifest::new(records.iter().map(ManifestRow::from_record).collect())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Ids unique; benchmark rows carry a category keyword.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.rows.len());
        for (i, row) in self.rows.iter().enumerate() {
            if !seen.insert(row.id.as_str()) {
                return Err(Error::Manifest {
                    line: i + 1,
                    message: format!("duplicate id {:?}", row.id),
                });
            }
            if row.source == LabelSource::Benchmark.as_str() && row.category.is_none() {
                return Err(Error::Manifest {
                    line: i + 1,
                    message: format!("benchmark row {:?} has no category", row.id),
                });
            }
            if let Some(rate) = row.moral_rate {
                if !rate.is_finite() {
                    return Err(Error::Manifest {
                        line: i + 1,
                        message: "non-finite moral_rate".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::read(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::read(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: ManifestRow = serde_json::from_str(&line).map_err(|e| Error::Manifest {
            line: i + 1,
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    DatasetManifest::new(rows)
}

pub fn write_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::write(path, e))?;
    let mut out = BufWriter::new(file);
    for row in &manifest.rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n").map_err(|e| Error::write(path, e))?;
    }
    out.flush().map_err(|e| Error::write(path, e))
}

/// Records ready for training or evaluation, with excluded rows removed.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<EmbeddingRecord>,
    /// Ids whose source label converted to "excluded".
    pub excluded: Vec<String>,
    /// Manifest rows kept, parallel to `records`.
    pub rows: Vec<ManifestRow>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> Vec<&EmbeddingRecord> {
        self.records.iter().filter(|r| r.split == split).collect()
    }
}

pub fn load_dataset(
    embeddings: impl AsRef<Path>,
    manifest: &DatasetManifest,
) -> Result<Dataset> {
    let matrix = read_embedding_matrix(embeddings)?;
    let all = join_manifest(&matrix, manifest)?;
    let mut dataset = Dataset {
        records: Vec::with_capacity(all.len()),
        excluded: Vec::new(),
        rows: Vec::with_capacity(all.len()),
    };
    for (record, row) in all.into_iter().zip(&manifest.rows) {
        if row.resolve_label()? == LabelResolution::Excluded {
            dataset.excluded.push(record.id);
        } else {
            dataset.records.push(record);
            dataset.rows.push(row.clone());
        }
    }
    if !dataset.excluded.is_empty() {
        log::info!("excluded {} rows by source label rules", dataset.excluded.len());
    }
    Ok(dataset)
}
