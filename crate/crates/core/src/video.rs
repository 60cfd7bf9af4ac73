//! Per-frame video scoring.
//!
//! Frames are scored independently. The clip verdict compares the mean of the
//! raw frame probabilities with a threshold (0.7 by default, ties count as
//! violent). Savitzky-Golay smoothing only feeds the plotted curve and never
//! the verdict.
//!
//! Smoothing fits a least-squares polynomial to `window` consecutive samples
//! and evaluates it at the sample. Interior samples use the centred window.
//! Within `window/2` of either end the window is the first (or last)
//! `window` samples, so the fit is never evaluated outside the samples it was
//! fitted on. A series shorter than the window is fitted once as a whole.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingRecord, Label};
use crate::error::{Error, Result};
use crate::head::ClassifierHead;

pub const DEFAULT_VIDEO_THRESHOLD: f64 = 0.7;
pub const DEFAULT_WINDOW: usize = 5;
pub const DEFAULT_POLY_ORDER: usize = 2;

/// Index of the 75th-percentile frame of a clip: `floor(0.75 · (n − 1))`.
pub fn select_percentile_frame(frame_count: usize) -> Result<usize> {
    if frame_count == 0 {
        return Err(Error::Empty("clip has no frames".into()));
    }
    // Integer form of floor(0.75·(n−1)); avoids float rounding for large n.
    Ok(3 * (frame_count - 1) / 4)
}

/// Weights `c` such that `Σ c_k · y_k` is the value at offset `at` of the
/// least-squares polynomial of degree `order` through samples at offsets
/// `0..len`.
pub fn savgol_weights(len: usize, order: usize, at: usize) -> Vec<f64> {
    debug_assert!(order < len && at < len);
    let terms = order + 1;
    // Offsets relative to the evaluation point so the intercept is the answer.
    let xs: Vec<f64> = (0..len).map(|k| k as f64 - at as f64).collect();

    // Normal equations (AᵀA) u = e₀ with A[k][j] = x_k^j; weights are A u.
    let mut gram = vec![vec![0.0f64; terms + 1]; terms];
    for (row, gram_row) in gram.iter_mut().enumerate() {
        for (col, cell) in gram_row.iter_mut().take(terms).enumerate() {
            *cell = xs.iter().map(|x| x.powi((row + col) as i32)).sum();
        }
        gram_row[terms] = if row == 0 { 1.0 } else { 0.0 };
    }
    let u = solve_augmented(gram);
    xs.iter()
        .map(|x| u.iter().enumerate().map(|(j, uj)| uj * x.powi(j as i32)).sum())
        .collect()
}

/// Gauss-Jordan elimination with partial pivoting on an `n × (n+1)` system.
fn solve_augmented(mut m: Vec<Vec<f64>>) -> Vec<f64> {
    let n = m.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        let p = m[col][col];
        for v in m[col].iter_mut() {
            *v /= p;
        }
        let pivot_row = m[col].clone();
        for (row, r) in m.iter_mut().enumerate() {
            let factor = r[col];
            if row != col && factor != 0.0 {
                for (v, p) in r[col..].iter_mut().zip(&pivot_row[col..]) {
                    *v -= factor * p;
                }
            }
        }
    }
    m.into_iter().map(|row| row[n]).collect()
}

pub fn savgol_smooth(values: &[f64], window: usize, poly_order: usize) -> Result<Vec<f64>> {
    if window.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("window {window} must be odd")));
    }
    if poly_order >= window {
        return Err(Error::InvalidArgument(format!(
            "polynomial order {poly_order} must be below window {window}"
        )));
    }
    let n = values.len();
    if n == 0 {
        return Err(Error::Empty("series to smooth".into()));
    }

    if n < window {
        let order = poly_order.min(n - 1);
        return Ok((0..n)
            .map(|i| apply(&savgol_weights(n, order, i), values))
            .collect());
    }

    let half = window / 2;
    let centre = savgol_weights(window, poly_order, half);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let smoothed = if i < half {
            apply(&savgol_weights(window, poly_order, i), &values[..window])
        } else if i + half >= n {
            apply(&savgol_weights(window, poly_order, i - (n - window)), &values[n - window..])
        } else {
            apply(&centre, &values[i - half..=i + half])
        };
        out.push(smoothed);
    }
    Ok(out)
}

fn apply(weights: &[f64], values: &[f64]) -> f64 {
    weights.iter().zip(values).map(|(w, v)| w * v).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    /// `mean >= threshold` is positive.
    #[default]
    Inclusive,
    /// `mean > threshold` is positive.
    Strict,
}

impl TieRule {
    pub fn decide(self, value: f64, threshold: f64) -> Label {
        Label::from(match self {
            TieRule::Inclusive => value >= threshold,
            TieRule::Strict => value > threshold,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimelineOptions {
    pub threshold: f64,
    pub tie_rule: TieRule,
    pub window: usize,
    pub poly_order: usize,
}

impl Default for TimelineOptions {
    fn default() -> Self {
        TimelineOptions {
            threshold: DEFAULT_VIDEO_THRESHOLD,
            tie_rule: TieRule::Inclusive,
            window: DEFAULT_WINDOW,
            poly_order: DEFAULT_POLY_ORDER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineSample {
    pub t: f64,
    pub p_raw: f64,
    pub p_smooth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoTimeline {
    pub clip_id: String,
    pub samples: Vec<TimelineSample>,
    /// Mean of the raw frame probabilities.
    pub mean: f64,
    pub verdict: Label,
}

impl VideoTimeline {
    /// `t,p_raw,p_smooth` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,p_raw,p_smooth\n");
        for s in &self.samples {
            let _ = writeln!(out, "{},{},{}", s.t, s.p_raw, s.p_smooth);
        }
        out
    }
}

/// Running mean; a constant series yields its value exactly.
fn running_mean(values: &[f64]) -> f64 {
    let mut mean = 0.0;
    for (k, &v) in values.iter().enumerate() {
        mean += (v - mean) / (k + 1) as f64;
    }
    mean
}

/// Builds a timeline from already-computed frame probabilities.
pub fn build_timeline(
    clip_id: &str,
    timestamps: &[f64],
    probabilities: &[f64],
    options: &TimelineOptions,
) -> Result<VideoTimeline> {
    if timestamps.is_empty() {
        return Err(Error::Empty(format!("clip {clip_id:?} has no frames")));
    }
    if timestamps.len() != probabilities.len() {
        return Err(Error::DimensionMismatch {
            expected: timestamps.len(),
            found: probabilities.len(),
        });
    }
    if timestamps.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFiniteValue {
            what: "frame timestamp".into(),
        });
    }
    if let Some(w) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(format!(
            "clip {clip_id:?}: timestamps not strictly increasing at frame {}",
            w + 1
        )));
    }
    if probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidArgument("frame probability outside [0, 1]".into()));
    }
    let smoothed = savgol_smooth(probabilities, options.window, options.poly_order)?;
    let mean = running_mean(probabilities);
    Ok(VideoTimeline {
        clip_id: clip_id.to_string(),
        samples: timestamps
            .iter()
            .zip(probabilities)
            .zip(smoothed)
            .map(|((&t, &p_raw), p_smooth)| TimelineSample { t, p_raw, p_smooth })
            .collect(),
        mean,
        verdict: options.tie_rule.decide(mean, options.threshold),
    })
}

/// Scores each frame with the head, then builds the clip timeline.
pub fn score_timeline(
    head: &ClassifierHead,
    clip_id: &str,
    frames: &[(f64, EmbeddingRecord)],
    options: &TimelineOptions,
) -> Result<VideoTimeline> {
    let timestamps: Vec<f64> = frames.iter().map(|(t, _)| *t).collect();
    let probabilities = frames
        .iter()
        .map(|(_, r)| head.predict_proba(&r.vector))
        .collect::<Result<Vec<_>>>()?;
    build_timeline(clip_id, &timestamps, &probabilities, options)
}
