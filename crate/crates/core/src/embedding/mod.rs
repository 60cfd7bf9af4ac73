//! Embedding interchange: the `CLEM` vector file, JSON-Lines manifests, and
//! the per-source label adapters that map every dataset onto one convention
//! (1 = immoral, 0 = moral).

mod format;
mod labels;
mod manifest;

pub use format::{
    decode_matrix, encode_matrix, read_embedding_file, read_embedding_matrix,
    write_embedding_file, EmbeddingHeader, EmbeddingMatrix, EMBEDDING_HEADER_LEN,
    EMBEDDING_MAGIC, EMBEDDING_VERSION,
};
pub use labels::{convert_smid_label, convert_source_label, LabelSource, SMID_MORAL_RATE_CUTOFF};
pub use manifest::{load_dataset, read_manifest, write_manifest, Dataset, DatasetManifest, LabelResolution, ManifestRow};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Canonical binary label. Serialized as the integers 0 and 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    Moral = 0,
    Immoral = 1,
}

impl Label {
    pub fn as_f64(self) -> f64 {
        match self {
            Label::Moral => 0.0,
            Label::Immoral => 1.0,
        }
    }

    pub fn is_immoral(self) -> bool {
        self == Label::Immoral
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Moral => Label::Immoral,
            Label::Immoral => Label::Moral,
        }
    }
}

impl From<bool> for Label {
    fn from(immoral: bool) -> Self {
        if immoral {
            Label::Immoral
        } else {
            Label::Moral
        }
    }
}

impl From<Label> for u8 {
    fn from(label: Label) -> u8 {
        label as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        match value {
            0 => Ok(Label::Moral),
            1 => Ok(Label::Immoral),
            other => Err(Error::InvalidLabel(format!("{other} is not 0 or 1"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
    TestHard,
    Unlabeled,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::TestHard => "test_hard",
            Split::Unlabeled => "unlabeled",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "test_hard" => Ok(Split::TestHard),
            "unlabeled" => Ok(Split::Unlabeled),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

/// One embedding vector with its identity and metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub id: String,
    pub vector: Vec<f32>,
    pub label: Option<Label>,
    pub split: Split,
    pub source: String,
    pub category: Option<String>,
}

impl EmbeddingRecord {
    pub fn new(id: impl Into<String>, vector: Vec<f32>) -> Self {
        EmbeddingRecord {
            id: id.into(),
            vector,
            label: None,
            split: Split::Unlabeled,
            source: "user".to_string(),
            category: None,
        }
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }

    pub fn with_category(mut self, category: impl Into<String>) -> Self {
        self.category = Some(category.into());
        self
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    /// Index of the first non-finite component, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.vector.iter().position(|v| !v.is_finite())
    }
}
