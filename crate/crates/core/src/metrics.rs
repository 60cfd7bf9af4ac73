//! Binary classification metrics with class 1 (immoral) as the positive class.
//!
//! F-measure follows van Rijsbergen: `F_α = 1 / (α/P + (1-α)/R)`. With
//! α = 0.2 this is `5PR / (4P + R)`, i.e. F_β with β = 2, weighting recall.
//! ROC AUC is the Mann-Whitney rank statistic with ties counted as one half.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::embedding::Label;
use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.2;

pub const F_MEASURE_CONVENTION: &str =
    "van Rijsbergen F_alpha = 1/(alpha/P + (1-alpha)/R); alpha=0.2 equals F_beta with beta=2";
pub const AUC_CONVENTION: &str = "Mann-Whitney rank statistic, tied positive/negative pairs count 1/2";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    /// `None` when nothing was predicted positive.
    pub fn precision(&self) -> Option<f64> {
        let denom = self.tp + self.fp;
        (denom > 0).then(|| self.tp as f64 / denom as f64)
    }

    /// `None` when there are no positive labels.
    pub fn recall(&self) -> Option<f64> {
        let denom = self.tp + self.fn_;
        (denom > 0).then(|| self.tp as f64 / denom as f64)
    }
}

pub fn confusion(predictions: &[Label], labels: &[Label]) -> Result<ConfusionCounts> {
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            found: predictions.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::Empty("confusion counts".into()));
    }
    let mut c = ConfusionCounts::default();
    for (p, y) in predictions.iter().zip(labels) {
        match (p, y) {
            (Label::Immoral, Label::Immoral) => c.tp += 1,
            (Label::Immoral, Label::Moral) => c.fp += 1,
            (Label::Moral, Label::Moral) => c.tn += 1,
            (Label::Moral, Label::Immoral) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// `1 / (α/P + (1-α)/R)`, and 0 when either P or R is 0.
pub fn f_measure(precision: f64, recall: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside (0, 1)")));
    }
    for (name, v) in [("precision", precision), ("recall", recall)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidArgument(format!("{name} {v} outside [0, 1]")));
        }
    }
    if precision == 0.0 || recall == 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 / (alpha / precision + (1.0 - alpha) / recall))
}

/// Area under the ROC curve as the tie-aware rank statistic.
///
/// Sorts once; the numerator is accumulated as an exact integer count of
/// half-pairs, so the result equals brute-force pair counting bit for bit.
pub fn roc_auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            found: scores.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFiniteValue {
            what: "score (NaN)".into(),
        });
    }
    let n_pos = labels.iter().filter(|l| l.is_immoral()).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidArgument(
            "roc_auc needs at least one positive and one negative label".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));

    // Twice the Mann-Whitney U: each positive earns 2 per negative strictly
    // below it and 1 per negative tied with it.
    let mut twice_u: u128 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let score = scores[order[i]];
        let mut j = i;
        let (mut pos, mut neg) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == score {
            if labels[order[j]].is_immoral() {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        twice_u += 2 * pos as u128 * neg_below as u128 + pos as u128 * neg as u128;
        neg_below += neg;
        i = j;
    }
    Ok(twice_u as f64 / (2 * n_pos as u128 * n_neg as u128) as f64)
}

/// Labels from probabilities under the `p ≥ threshold` rule.
pub fn threshold_predictions(probabilities: &[f64], threshold: f64) -> Vec<Label> {
    probabilities.iter().map(|&p| Label::from(p >= threshold)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub dataset: String,
    pub split: String,
    pub count: u64,
    pub positives: u64,
    pub threshold: f64,
    pub confusion: ConfusionCounts,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    /// Set when precision had a zero denominator and is reported as 0.
    pub precision_undefined: bool,
    /// Set when recall had a zero denominator and is reported as 0.
    pub recall_undefined: bool,
    pub alpha: f64,
    pub f_alpha: f64,
    /// Absent when the evaluated set holds a single class.
    pub auc: Option<f64>,
    pub f_convention: String,
    pub auc_convention: String,
}

impl EvaluationReport {
    pub fn compute(
        dataset: &str,
        split: &str,
        probabilities: &[f64],
        labels: &[Label],
        threshold: f64,
        alpha: f64,
    ) -> Result<Self> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::InvalidArgument(format!("threshold {threshold} outside (0, 1)")));
        }
        let predictions = threshold_predictions(probabilities, threshold);
        let confusion = confusion(&predictions, labels)?;
        let precision = confusion.precision();
        let recall = confusion.recall();
        let p = precision.unwrap_or(0.0);
        let r = recall.unwrap_or(0.0);
        let single_class = confusion.tp + confusion.fn_ == 0 || confusion.tn + confusion.fp == 0;
        let auc = if single_class {
            None
        } else {
            Some(roc_auc(probabilities, labels)?)
        };
        Ok(EvaluationReport {
            dataset: dataset.to_string(),
            split: split.to_string(),
            count: confusion.total(),
            positives: confusion.tp + confusion.fn_,
            threshold,
            accuracy: confusion.accuracy(),
            precision: p,
            recall: r,
            precision_undefined: precision.is_none(),
            recall_undefined: recall.is_none(),
            alpha,
            f_alpha: f_measure(p, r, alpha)?,
            auc,
            confusion,
            f_convention: F_MEASURE_CONVENTION.to_string(),
            auc_convention: AUC_CONVENTION.to_string(),
        })
    }
}

/// One row of an F-measure comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub dataset: String,
    pub contents: String,
    pub immoral_examples: u64,
    /// `(profile name, F_α)` columns.
    pub f_by_profile: Vec<(String, f64)>,
}

/// Renders rows as a plain-text table with one F column per profile.
///
/// Profile columns are the union over rows in first-seen order; missing
/// cells print as `-`.
pub fn render_f_table(rows: &[TableRow], alpha: f64) -> String {
    let mut profiles: Vec<&str> = Vec::new();
    for row in rows {
        for (name, _) in &row.f_by_profile {
            if !profiles.contains(&name.as_str()) {
                profiles.push(name);
            }
        }
    }
    let mut header = vec![
        "Dataset".to_string(),
        "Contents".to_string(),
        "# Immoral".to_string(),
    ];
    header.extend(profiles.iter().map(|p| format!("F(a={alpha}) {p}")));
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|row| {
            let mut cells = vec![
                row.dataset.clone(),
                row.contents.clone(),
                row.immoral_examples.to_string(),
            ];
            for p in &profiles {
                let cell = row
                    .f_by_profile
                    .iter()
                    .find(|(name, _)| name == p)
                    .map(|(_, f)| format!("{f:.3}"))
                    .unwrap_or_else(|| "-".into());
                cells.push(cell);
            }
            cells
        })
        .collect();

    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            body.iter()
                .map(|r| r[c].chars().count())
                .chain(std::iter::once(header[c].chars().count()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let mut line = |cells: &[String]| {
        let joined: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", joined.join("  ").trim_end());
    };
    line(&header);
    line(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>());
    for row in &body {
        line(row);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Immoral as I, Moral as M};

    #[test]
    fn confusion_cases() {
        let all = [I, I, I];
        let c = confusion(&all, &all).unwrap();
        assert_eq!((c.tp, c.fp, c.tn, c.fn_), (3, 0, 0, 0));

        let y = [I, M, M, I];
        let p: Vec<Label> = y.iter().map(|l| l.flipped()).collect();
        let c = confusion(&p, &y).unwrap();
        assert_eq!((c.tp, c.tn), (0, 0));

        let c = confusion(&[I, M, I, I], &[I, I, M, I]).unwrap();
        assert_eq!((c.tp, c.fn_, c.fp, c.tn), (2, 1, 1, 0));
        assert!(confusion(&[I], &[I, M]).is_err());
        assert!(confusion(&[], &[]).is_err());
    }

    #[test]
    fn single_example_accuracy() {
        for p in [M, I] {
            for y in [M, I] {
                let c = confusion(&[p], &[y]).unwrap();
                assert_eq!(c.accuracy(), if p == y { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn f_measure_cases() {
        assert_eq!(f_measure(1.0, 0.0, 0.2).unwrap(), 0.0);
        assert_eq!(f_measure(0.0, 1.0, 0.2).unwrap(), 0.0);
        assert!((f_measure(0.5, 1.0, 0.2).unwrap() - 1.0 / 1.2).abs() < 1e-15);
        // F_β=2 closed form 5PR/(4P+R).
        let (p, r) = (0.7, 0.4);
        assert!((f_measure(p, r, 0.2).unwrap() - 5.0 * p * r / (4.0 * p + r)).abs() < 1e-15);
        assert!(f_measure(0.5, 0.5, 0.0).is_err());
        assert!(f_measure(0.5, 0.5, 1.0).is_err());
        assert!(f_measure(1.5, 0.5, 0.2).is_err());
    }

    #[test]
    fn auc_cases() {
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[M, M, I, I]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.3; 5], &[M, I, M, I, I]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.9, 0.4, 0.6], &[I, M, I]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.9, 0.1], &[M, I]).unwrap(), 0.0);
        assert!(roc_auc(&[0.5, 0.6], &[I, I]).is_err());
        assert!(roc_auc(&[f64::NAN, 0.6], &[I, M]).is_err());
    }

    #[test]
    fn report_zero_denominators() {
        let r = EvaluationReport::compute("d", "test", &[0.1, 0.2], &[M, I], 0.5, 0.2).unwrap();
        assert!(r.precision_undefined);
        assert!(!r.recall_undefined);
        assert_eq!(r.precision, 0.0);
        assert_eq!(r.f_alpha, 0.0);
        assert_eq!(r.auc, Some(1.0));

        let r = EvaluationReport::compute("d", "test", &[0.5, 0.5, 0.5], &[M, M, I], 0.5, 0.2).unwrap();
        assert!((r.accuracy - 1.0 / 3.0).abs() < 1e-15);

        let r = EvaluationReport::compute("d", "test", &[0.9], &[M], 0.5, 0.2).unwrap();
        assert!(r.recall_undefined);
        assert_eq!(r.auc, None);
    }

    #[test]
    fn report_json_names_fn() {
        let r = EvaluationReport::compute("d", "test", &[0.9, 0.1], &[I, I], 0.5, 0.2).unwrap();
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["confusion"]["fn"], 1);
        assert!(json["f_convention"].as_str().unwrap().contains("beta=2"));
    }

    #[test]
    fn table_rendering() {
        let rows = vec![
            TableRow {
                dataset: "Real Life Violence".into(),
                contents: "violence and non-violence".into(),
                immoral_examples: 1000,
                f_by_profile: vec![("vitb32".into(), 0.807), ("vitl14".into(), 0.743)],
            },
            TableRow {
                dataset: "NSFW".into(),
                contents: "sexual".into(),
                immoral_examples: 12,
                f_by_profile: vec![("vitl14".into(), 0.5)],
            },
        ];
        let table = render_f_table(&rows, 0.2);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].contains("F(a=0.2) vitb32"));
        assert!(lines[2].contains("0.807") && lines[2].contains("0.743"));
        assert!(lines[3].contains(" -  ") || lines[3].contains("-"));
    }
}
