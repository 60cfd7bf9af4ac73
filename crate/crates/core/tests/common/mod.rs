//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use moral_lens::{EmbeddingRecord, Label, Split};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Two Gaussian clusters at ±μ with identity covariance. Cluster +μ is
/// labeled immoral.
#[derive(Debug, Clone)]
pub struct Clusters {
    pub mean: Vec<f64>,
}

impl Clusters {
    /// μ points along a random direction drawn from `seed`, with `‖μ‖ = radius`.
    pub fn new(dim: usize, radius: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
        Clusters {
            mean: dir.iter().map(|d| d / norm * radius).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `per_class` records of each class, interleaved, drawn from `seed`.
    pub fn sample(&self, per_class: usize, seed: u64, split: Split, prefix: &str) -> Vec<EmbeddingRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(2 * per_class);
        for i in 0..2 * per_class {
            let label = if i % 2 == 0 { Label::Immoral } else { Label::Moral };
            let sign = if label.is_immoral() { 1.0 } else { -1.0 };
            let vector = self
                .mean
                .iter()
                .map(|m| {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    (sign * m + noise) as f32
                })
                .collect();
            out.push(
                EmbeddingRecord::new(format!("{prefix}-{i}"), vector)
                    .with_label(label)
                    .with_split(split)
                    .with_source("synthetic"),
            );
        }
        out
    }
}

/// Plain full-batch logistic regression by gradient descent; returns the
/// training accuracy it reaches. Used only to confirm separability.
pub fn logistic_regression_accuracy(records: &[EmbeddingRecord], iterations: usize, lr: f64) -> f64 {
    let d = records[0].dim();
    let n = records.len() as f64;
    let mut w = vec![0.0f64; d];
    let mut b = 0.0f64;
    let mut gw = vec![0.0f64; d];
    for _ in 0..iterations {
        gw.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        for r in records {
            let z: f64 = w.iter().zip(&r.vector).map(|(w, &x)| w * x as f64).sum::<f64>() + b;
            let p = 1.0 / (1.0 + (-z).exp());
            let err = p - r.label.unwrap().as_f64();
            for (g, &x) in gw.iter_mut().zip(&r.vector) {
                *g += err * x as f64;
            }
            gb += err;
        }
        for (w, g) in w.iter_mut().zip(&gw) {
            *w -= lr * g / n;
        }
        b -= lr * gb / n;
    }
    let correct = records
        .iter()
        .filter(|r| {
            let z: f64 = w.iter().zip(&r.vector).map(|(w, &x)| w * x as f64).sum::<f64>() + b;
            (z >= 0.0) == r.label.unwrap().is_immoral()
        })
        .count();
    correct as f64 / n
}

/// Tie-aware AUC by enumerating every positive/negative pair. Returns the
/// numerator in half-units and the pair count so callers can compare exactly.
pub fn brute_force_auc(scores: &[f64], labels: &[Label]) -> (u64, u64) {
    let mut twice_wins = 0u64;
    let mut pairs = 0u64;
    for (sp, lp) in scores.iter().zip(labels) {
        if !lp.is_immoral() {
            continue;
        }
        for (sn, ln) in scores.iter().zip(labels) {
            if ln.is_immoral() {
                continue;
            }
            pairs += 1;
            if sp > sn {
                twice_wins += 2;
            } else if sp == sn {
                twice_wins += 1;
            }
        }
    }
    (twice_wins, pairs)
}

/// Random vector with entries uniform in `[-scale, scale]`.
pub fn uniform_vec(rng: &mut impl Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-scale..=scale)).collect()
}
