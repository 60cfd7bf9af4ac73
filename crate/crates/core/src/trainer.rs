//! Mini-batch training of the head on labeled text embeddings.
//!
//! Randomness comes from ChaCha8 generators seeded by the run seed:
//!
//! * stream 0 of `ChaCha8Rng::seed_from_u64(seed)` is the run generator. It
//!   draws the initial weights and then every dropout mask, example by example
//!   in batch order.
//! * stream `epoch + 1` of the same seed shuffles the example order for that
//!   epoch (Fisher-Yates).
//!
//! Runs are bit-reproducible within this implementation for a fixed
//! (dataset order, seed, config).

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingRecord, Label, Split};
use crate::error::{Error, Result};
use crate::head::{ClassifierHead, DropoutMask, ForwardCache, HeadConfig, HeadGradients};
use crate::metrics::{EvaluationReport, DEFAULT_ALPHA};
use crate::optim::{AdamW, OptimizerConfig, ParamGroup};

pub const DEFAULT_EPOCHS: usize = 100;
pub const DEFAULT_BATCH_SIZE: usize = 64;

/// Named bundle of embedding width, learning rate and AdamW epsilon for one
/// frozen encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderProfile {
    Vitb32,
    Vitb16,
    Vitl14,
    /// Width, rate and epsilon supplied by the caller.
    Custom,
}

impl EncoderProfile {
    pub const ALL: [EncoderProfile; 4] = [
        EncoderProfile::Vitb32,
        EncoderProfile::Vitb16,
        EncoderProfile::Vitl14,
        EncoderProfile::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EncoderProfile::Vitb32 => "vitb32",
            EncoderProfile::Vitb16 => "vitb16",
            EncoderProfile::Vitl14 => "vitl14",
            EncoderProfile::Custom => "custom",
        }
    }

    pub fn dim(self) -> Option<usize> {
        match self {
            EncoderProfile::Vitb32 | EncoderProfile::Vitb16 => Some(512),
            EncoderProfile::Vitl14 => Some(768),
            EncoderProfile::Custom => None,
        }
    }

    pub fn lr(self) -> Option<f64> {
        match self {
            EncoderProfile::Vitb32 | EncoderProfile::Vitb16 => Some(0.002),
            EncoderProfile::Vitl14 => Some(0.001),
            EncoderProfile::Custom => None,
        }
    }

    pub fn epsilon(self) -> Option<f64> {
        match self {
            EncoderProfile::Vitb32 | EncoderProfile::Vitl14 => Some(1e-8),
            EncoderProfile::Vitb16 => Some(1e-10),
            EncoderProfile::Custom => None,
        }
    }
}

impl fmt::Display for EncoderProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EncoderProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EncoderProfile::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown encoder profile {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub profile: EncoderProfile,
    pub head: HeadConfig,
    pub optim: OptimizerConfig,
}

impl TrainConfig {
    /// Profile defaults: 100 epochs, batch 64, dropout 0.5, weight decay 0.01,
    /// hidden width equal to the input width.
    ///
    /// For [`EncoderProfile::Custom`], `d_in` is required and the rate and
    /// epsilon default to 0.002 and 1e-8.
    pub fn for_profile(profile: EncoderProfile, d_in: Option<usize>, seed: u64) -> Result<Self> {
        let d_in = match (profile.dim(), d_in) {
            (Some(d), _) => d,
            (None, Some(d)) => d,
            (None, None) => {
                return Err(Error::InvalidArgument(
                    "custom profile needs an explicit input dimension".into(),
                ))
            }
        };
        let config = TrainConfig {
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            seed,
            profile,
            head: HeadConfig::for_input(d_in),
            optim: OptimizerConfig::adamw(
                profile.lr().unwrap_or(0.002),
                profile.epsilon().unwrap_or(1e-8),
            ),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.head.validate()?;
        self.optim.validate()?;
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if let Some(d) = self.profile.dim() {
            if self.head.d_in != d {
                return Err(Error::InvalidArgument(format!(
                    "profile {} expects input dimension {d}, head has {}",
                    self.profile, self.head.d_in
                )));
            }
        }
        if let (Some(lr), Some(eps)) = (self.profile.lr(), self.profile.epsilon()) {
            if self.optim.lr != lr || self.optim.epsilon != eps {
                return Err(Error::InvalidArgument(format!(
                    "profile {} fixes lr={lr} and epsilon={eps}; use the custom profile to change them",
                    self.profile
                )));
            }
        }
        Ok(())
    }

    /// Checkpoint metadata. Contains no timestamps, so identical runs write
    /// identical checkpoints.
    pub fn checkpoint_metadata(&self, train_examples: usize) -> serde_json::Value {
        serde_json::json!({
            "format": "moral-lens head",
            "seed": self.seed,
            "profile": self.profile,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "head": {
                "d_in": self.head.d_in,
                "d_hidden": self.head.d_hidden,
                "dropout_p": self.head.dropout_p,
                "dropout": "inverted, both sites",
                "projection_bias": true,
                "init": "uniform(+-1/sqrt(fan_in)) weights, zero biases",
            },
            "optimizer": {
                "name": "adamw",
                "lr": self.optim.lr,
                "beta1": self.optim.beta1,
                "beta2": self.optim.beta2,
                "epsilon": self.optim.epsilon,
                "weight_decay": self.optim.weight_decay,
                "decay_biases": false,
                "schedule": "constant",
            },
            "rng": "ChaCha8 seed_from_u64(seed); stream 0 init+dropout, stream epoch+1 shuffle",
            "train_examples": train_examples,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training-mode loss over the examples of each epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
    pub train_examples: usize,
    pub final_train_accuracy: f64,
    pub wall_clock_secs: f64,
    pub seed: u64,
    pub config: TrainConfig,
}

/// Example indices of each batch for one epoch. The final batch may be short.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    order.shuffle(&mut rng);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// The head `train` starts from for this configuration.
pub fn initial_head(config: &TrainConfig) -> Result<ClassifierHead> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    ClassifierHead::init(config.head, &mut rng)
}

fn labeled_examples(records: &[EmbeddingRecord], d_in: usize) -> Result<Vec<(&[f32], Label)>> {
    records
        .iter()
        .enumerate()
        .map(|(row, r)| {
            let label = r.label.ok_or_else(|| {
                Error::InvalidLabel(format!("record {:?} has no label", r.id))
            })?;
            if r.dim() != d_in {
                return Err(Error::DimensionMismatch {
                    expected: d_in,
                    found: r.dim(),
                });
            }
            if let Some(component) = r.first_non_finite() {
                return Err(Error::NonFinite {
                    row,
                    id: r.id.clone(),
                    component,
                });
            }
            Ok((r.vector.as_slice(), label))
        })
        .collect()
}

pub fn train(records: &[EmbeddingRecord], config: &TrainConfig) -> Result<(ClassifierHead, TrainReport)> {
    config.validate()?;
    let started = Instant::now();
    let examples = labeled_examples(records, config.head.d_in)?;
    if examples.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    let positives = examples.iter().filter(|(_, y)| y.is_immoral()).count();
    if positives == 0 || positives == examples.len() {
        log::warn!("training set holds a single class ({positives} of {} immoral)", examples.len());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut head = ClassifierHead::init(config.head, &mut rng)?;
    let shapes = [
        config.head.d_hidden * config.head.d_in,
        config.head.d_hidden,
        config.head.d_hidden,
        1,
    ];
    let mut optimizer = AdamW::new(config.optim, &shapes)?;
    let mut grads = HeadGradients::zeros(&config.head);
    let mut masks = vec![DropoutMask::identity(&config.head); config.batch_size.min(examples.len())];
    let mut cache = ForwardCache::default();
    let mut scratch = Vec::new();
    let mut batch: Vec<(&[f32], Label)> = Vec::with_capacity(config.batch_size);
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut steps = 0u64;

    for epoch in 0..config.epochs {
        let mut loss_sum = 0.0;
        for (step, indices) in epoch_batches(examples.len(), config.batch_size, config.seed, epoch)
            .iter()
            .enumerate()
        {
            batch.clear();
            batch.extend(indices.iter().map(|&i| examples[i]));
            let masks = &mut masks[..batch.len()];
            for mask in masks.iter_mut() {
                mask.resample(config.head.dropout_p, &mut rng);
            }
            grads.clear();
            let loss = head.accumulate_batch(&batch, masks, &mut grads, &mut cache, &mut scratch)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            loss_sum += loss * batch.len() as f64;

            let [w1, b1, w2, b2] = head.params_mut();
            optimizer.step(&mut [
                ParamGroup {
                    values: w1,
                    grads: &grads.w1,
                    decay: true,
                },
                ParamGroup {
                    values: b1,
                    grads: &grads.b1,
                    decay: false,
                },
                ParamGroup {
                    values: w2,
                    grads: &grads.w2,
                    decay: true,
                },
                ParamGroup {
                    values: b2,
                    grads: std::slice::from_ref(&grads.b2),
                    decay: false,
                },
            ])?;
            steps += 1;
        }
        let epoch_loss = loss_sum / examples.len() as f64;
        log::debug!("epoch {} loss {epoch_loss:.6}", epoch + 1);
        epoch_losses.push(epoch_loss);
    }

    let mut correct = 0usize;
    for (x, y) in &examples {
        let p = head.predict_proba(x)?;
        if Label::from(p >= 0.5) == *y {
            correct += 1;
        }
    }

    let report = TrainReport {
        epoch_losses,
        steps,
        train_examples: examples.len(),
        final_train_accuracy: correct as f64 / examples.len() as f64,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        seed: config.seed,
        config: config.clone(),
    };
    Ok((head, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub threshold: f64,
    pub alpha: f64,
    /// Dataset tag for the report; defaults to the records' source.
    pub dataset: Option<String>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            threshold: 0.5,
            alpha: DEFAULT_ALPHA,
            dataset: None,
        }
    }
}

/// Scores the labeled records of `split` in evaluation mode and reports
/// metrics, using the default α.
pub fn evaluate_split(
    head: &ClassifierHead,
    records: &[EmbeddingRecord],
    split: Split,
    threshold: f64,
) -> Result<EvaluationReport> {
    evaluate_split_with(
        head,
        records,
        split,
        &EvalSettings {
            threshold,
            ..EvalSettings::default()
        },
    )
}

pub fn evaluate_split_with(
    head: &ClassifierHead,
    records: &[EmbeddingRecord],
    split: Split,
    settings: &EvalSettings,
) -> Result<EvaluationReport> {
    let selected: Vec<&EmbeddingRecord> = records.iter().filter(|r| r.split == split).collect();
    if selected.is_empty() {
        return Err(Error::Empty(format!("split {split}")));
    }
    let mut probabilities = Vec::with_capacity(selected.len());
    let mut labels = Vec::with_capacity(selected.len());
    for r in &selected {
        let label = r
            .label
            .ok_or_else(|| Error::InvalidLabel(format!("record {:?} in split {split} has no label", r.id)))?;
        probabilities.push(head.predict_proba(&r.vector)?);
        labels.push(label);
    }
    let dataset = settings
        .dataset
        .clone()
        .unwrap_or_else(|| selected[0].source.clone());
    EvaluationReport::compute(
        &dataset,
        split.as_str(),
        &probabilities,
        &labels,
        settings.threshold,
        settings.alpha,
    )
}
