//! The immorality head: `Dropout → Linear → Tanh → Dropout → Projection`.
//!
//! Parameters are held in `f64`; inputs are the `f32` rows of an embedding
//! file. The projection produces a single logit, and the probability of
//! "immoral" is its sigmoid.

mod checkpoint;
mod dropout;
mod loss;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, Checkpoint,
    CHECKPOINT_HEADER_LEN, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use dropout::DropoutMask;
pub use loss::{bce_term, bce_with_logits, probability, sigmoid};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::Label;
use crate::error::{Error, Result};

pub const DEFAULT_DROPOUT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub d_in: usize,
    pub d_hidden: usize,
    pub dropout_p: f64,
}

impl HeadConfig {
    pub fn new(d_in: usize, d_hidden: usize, dropout_p: f64) -> Result<Self> {
        let config = HeadConfig {
            d_in,
            d_hidden,
            dropout_p,
        };
        config.validate()?;
        Ok(config)
    }

    /// Hidden width equal to the input width, dropout 0.5.
    pub fn for_input(d_in: usize) -> Self {
        HeadConfig {
            d_in,
            d_hidden: d_in,
            dropout_p: DEFAULT_DROPOUT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.d_hidden == 0 {
            return Err(Error::InvalidArgument(format!(
                "head dimensions must be positive (d_in={}, d_hidden={})",
                self.d_in, self.d_hidden
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::InvalidArgument(format!(
                "dropout probability {} outside [0, 1)",
                self.dropout_p
            )));
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.d_hidden * self.d_in + 2 * self.d_hidden + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    config: HeadConfig,
    /// `d_hidden × d_in`, row-major.
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
}

/// Activations retained by the forward pass for backpropagation.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    /// Input after masking and scaling.
    pub input: Vec<f64>,
    /// `tanh` outputs before the second dropout.
    pub hidden: Vec<f64>,
    /// Hidden units after masking and scaling; what the projection sees.
    pub hidden_out: Vec<f64>,
    pub logit: f64,
}

/// Gradients shaped like the head parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl HeadGradients {
    pub fn zeros(config: &HeadConfig) -> Self {
        HeadGradients {
            w1: vec![0.0; config.d_hidden * config.d_in],
            b1: vec![0.0; config.d_hidden],
            w2: vec![0.0; config.d_hidden],
            b2: 0.0,
        }
    }

    pub fn clear(&mut self) {
        self.w1.fill(0.0);
        self.b1.fill(0.0);
        self.w2.fill(0.0);
        self.b2 = 0.0;
    }

    pub fn is_finite(&self) -> bool {
        self.b2.is_finite()
            && self.w1.iter().chain(&self.b1).chain(&self.w2).all(|g| g.is_finite())
    }
}

impl ClassifierHead {
    pub fn zeros(config: HeadConfig) -> Result<Self> {
        config.validate()?;
        Ok(ClassifierHead {
            w1: vec![0.0; config.d_hidden * config.d_in],
            b1: vec![0.0; config.d_hidden],
            w2: vec![0.0; config.d_hidden],
            b2: 0.0,
            config,
        })
    }

    /// Weights uniform in ±1/√fan_in per layer, biases zero.
    pub fn init<R: Rng + ?Sized>(config: HeadConfig, rng: &mut R) -> Result<Self> {
        let mut head = ClassifierHead::zeros(config)?;
        let bound1 = 1.0 / (config.d_in as f64).sqrt();
        for w in &mut head.w1 {
            *w = rng.random_range(-bound1..bound1);
        }
        let bound2 = 1.0 / (config.d_hidden as f64).sqrt();
        for w in &mut head.w2 {
            *w = rng.random_range(-bound2..bound2);
        }
        Ok(head)
    }

    pub fn from_parts(
        config: HeadConfig,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: f64,
    ) -> Result<Self> {
        config.validate()?;
        let shapes = [
            (w1.len(), config.d_hidden * config.d_in),
            (b1.len(), config.d_hidden),
            (w2.len(), config.d_hidden),
        ];
        for (found, expected) in shapes {
            if found != expected {
                return Err(Error::DimensionMismatch { expected, found });
            }
        }
        let head = ClassifierHead {
            config,
            w1,
            b1,
            w2,
            b2,
        };
        if !head.is_finite() {
            return Err(Error::NonFiniteValue {
                what: "head parameter".into(),
            });
        }
        Ok(head)
    }

    pub fn config(&self) -> &HeadConfig {
        &self.config
    }

    pub fn w1(&self) -> &[f64] {
        &self.w1
    }

    pub fn b1(&self) -> &[f64] {
        &self.b1
    }

    pub fn w2(&self) -> &[f64] {
        &self.w2
    }

    pub fn b2(&self) -> f64 {
        self.b2
    }

    pub fn is_finite(&self) -> bool {
        self.b2.is_finite()
            && self.w1.iter().chain(&self.b1).chain(&self.w2).all(|p| p.is_finite())
    }

    /// Mutable views over (W1, b1, w2, b2), in that order.
    pub fn params_mut(&mut self) -> [&mut [f64]; 4] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            std::slice::from_mut(&mut self.b2),
        ]
    }

    /// Every parameter in (W1, b1, w2, b2) order.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.config.parameter_count());
        out.extend_from_slice(&self.w1);
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(&self.w2);
        out.push(self.b2);
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.config.parameter_count() {
            return Err(Error::DimensionMismatch {
                expected: self.config.parameter_count(),
                found: flat.len(),
            });
        }
        let (w1, rest) = flat.split_at(self.w1.len());
        let (b1, rest) = rest.split_at(self.b1.len());
        let (w2, rest) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(w1);
        self.b1.copy_from_slice(b1);
        self.w2.copy_from_slice(w2);
        self.b2 = rest[0];
        Ok(())
    }

    fn check_input(&self, x: &[f32]) -> Result<()> {
        if x.len() != self.config.d_in {
            return Err(Error::DimensionMismatch {
                expected: self.config.d_in,
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                what: "head input".into(),
            });
        }
        Ok(())
    }

    fn check_mask(&self, mask: &DropoutMask) -> Result<()> {
        if mask.input_keep.len() != self.config.d_in {
            return Err(Error::DimensionMismatch {
                expected: self.config.d_in,
                found: mask.input_keep.len(),
            });
        }
        if mask.hidden_keep.len() != self.config.d_hidden {
            return Err(Error::DimensionMismatch {
                expected: self.config.d_hidden,
                found: mask.hidden_keep.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f32], mask: &DropoutMask) -> Result<(f64, ForwardCache)> {
        let mut cache = ForwardCache::default();
        let logit = self.forward_into(x, mask, &mut cache)?;
        Ok((logit, cache))
    }

    /// [`forward`](Self::forward) reusing the buffers in `cache`.
    pub fn forward_into(&self, x: &[f32], mask: &DropoutMask, cache: &mut ForwardCache) -> Result<f64> {
        self.check_input(x)?;
        self.check_mask(mask)?;
        Ok(self.forward_unchecked(x, Some(mask), cache))
    }

    fn forward_unchecked(&self, x: &[f32], mask: Option<&DropoutMask>, cache: &mut ForwardCache) -> f64 {
        let HeadConfig { d_in, d_hidden, .. } = self.config;
        cache.input.clear();
        cache.hidden.clear();
        cache.hidden_out.clear();
        match mask {
            Some(m) => cache.input.extend(
                x.iter()
                    .zip(&m.input_keep)
                    .map(|(&v, &keep)| if keep { v as f64 * m.scale } else { 0.0 }),
            ),
            None => cache.input.extend(x.iter().map(|&v| v as f64)),
        }
        for j in 0..d_hidden {
            let row = &self.w1[j * d_in..(j + 1) * d_in];
            cache.hidden.push((dot(row, &cache.input) + self.b1[j]).tanh());
        }
        match mask {
            Some(m) => cache.hidden_out.extend(
                cache
                    .hidden
                    .iter()
                    .zip(&m.hidden_keep)
                    .map(|(&h, &keep)| if keep { h * m.scale } else { 0.0 }),
            ),
            None => cache.hidden_out.extend_from_slice(&cache.hidden),
        }
        cache.logit = dot(&self.w2, &cache.hidden_out) + self.b2;
        cache.logit
    }

    /// Evaluation-mode logit (dropout is the identity).
    pub fn logit(&self, x: &[f32]) -> Result<f64> {
        self.check_input(x)?;
        let mut cache = ForwardCache::default();
        Ok(self.forward_unchecked(x, None, &mut cache))
    }

    /// Evaluation-mode probability of the immoral class.
    pub fn predict_proba(&self, x: &[f32]) -> Result<f64> {
        self.logit(x).map(probability)
    }

    /// Mean BCE loss of the batch and its gradient over all parameters.
    ///
    /// `masks` pairs with `batch` element-wise.
    pub fn loss_and_gradients(
        &self,
        batch: &[(&[f32], Label)],
        masks: &[DropoutMask],
    ) -> Result<(f64, HeadGradients)> {
        let mut grads = HeadGradients::zeros(&self.config);
        let mut cache = ForwardCache::default();
        let mut scratch = Vec::new();
        let loss = self.accumulate_batch(batch, masks, &mut grads, &mut cache, &mut scratch)?;
        Ok((loss, grads))
    }

    /// Analytic gradient of the mean batch loss.
    pub fn backward(&self, batch: &[(&[f32], Label)], masks: &[DropoutMask]) -> Result<HeadGradients> {
        self.loss_and_gradients(batch, masks).map(|(_, g)| g)
    }

    /// Adds the gradient of the mean loss over `batch` into `grads` and
    /// returns that mean loss. `grads` is not cleared.
    pub(crate) fn accumulate_batch(
        &self,
        batch: &[(&[f32], Label)],
        masks: &[DropoutMask],
        grads: &mut HeadGradients,
        cache: &mut ForwardCache,
        scratch: &mut Vec<f64>,
    ) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Empty("batch".into()));
        }
        if masks.len() != batch.len() {
            return Err(Error::DimensionMismatch {
                expected: batch.len(),
                found: masks.len(),
            });
        }
        let d_in = self.config.d_in;
        let inv_n = 1.0 / batch.len() as f64;
        let mut loss_sum = 0.0;
        for ((x, y), mask) in batch.iter().zip(masks) {
            self.check_input(x)?;
            self.check_mask(mask)?;
            let z = self.forward_unchecked(x, Some(mask), cache);
            let target = y.as_f64();
            loss_sum += bce_term(z, target);

            let dz = (sigmoid(z) - target) * inv_n;
            grads.b2 += dz;
            axpy(dz, &cache.hidden_out, &mut grads.w2);

            // Back through the second dropout and tanh.
            scratch.clear();
            scratch.extend(
                cache
                    .hidden
                    .iter()
                    .zip(&self.w2)
                    .zip(&mask.hidden_keep)
                    .map(|((&h, &w), &keep)| {
                        if keep {
                            dz * w * mask.scale * (1.0 - h * h)
                        } else {
                            0.0
                        }
                    }),
            );
            for (j, &da) in scratch.iter().enumerate() {
                if da == 0.0 {
                    continue;
                }
                grads.b1[j] += da;
                axpy(da, &cache.input, &mut grads.w1[j * d_in..(j + 1) * d_in]);
            }
        }
        Ok(loss_sum * inv_n)
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks_a = a.chunks_exact(4);
    let chunks_b = b.chunks_exact(4);
    let tail: f64 = chunks_a
        .remainder()
        .iter()
        .zip(chunks_b.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for k in 0..4 {
            acc[k] += ca[k] * cb[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
