//! Commonsense-immorality scoring over frozen joint text-image embeddings.
//!
//! A small head (`Dropout → Linear → Tanh → Dropout → Projection`) is trained
//! on text embeddings labeled for commonsense wrongness. Because text and
//! images share one embedding space, the same head then scores image and
//! video-frame embeddings without any image labels.
//!
//! * [`embedding`] - the `CLEM` vector file, JSON-Lines manifests, label adapters
//! * [`head`] - forward and backward passes, BCE loss, `CLMH` checkpoints
//! * [`optim`] - AdamW
//! * [`trainer`] - the training loop and split evaluation
//! * [`scorer`] - zero-shot scoring and per-category aggregation
//! * [`video`] - frame timelines, Savitzky-Golay smoothing, clip verdicts
//! * [`metrics`] - accuracy, precision/recall, F_α, ROC AUC
//! * [`cli`] - the `moral-lens` command line

pub mod cli;
pub mod embedding;
pub mod error;
pub mod head;
pub mod metrics;
pub mod optim;
pub mod scorer;
pub mod trainer;
pub mod video;

pub use embedding::{EmbeddingRecord, Label, Split};
pub use error::{Error, Result};
pub use head::{ClassifierHead, HeadConfig};
pub use trainer::{EncoderProfile, TrainConfig};
