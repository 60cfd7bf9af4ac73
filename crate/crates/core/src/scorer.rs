//! Zero-shot scoring of image (or text) embeddings and per-category summaries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingRecord, Label};
use crate::error::{Error, Result};
use crate::head::ClassifierHead;

pub const DEFAULT_THRESHOLD: f64 = 0.5;
/// Threshold of the high-precision filtering regime.
pub const FILTER_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub id: String,
    pub probability: f64,
    /// 1 iff `probability >= threshold`.
    pub verdict: Label,
    pub category: Option<String>,
}

pub(crate) fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("threshold {threshold} outside (0, 1)")))
    }
}

/// Evaluation-mode probabilities and verdicts, in input order.
pub fn score(head: &ClassifierHead, records: &[EmbeddingRecord], threshold: f64) -> Result<Vec<ScoredRecord>> {
    check_threshold(threshold)?;
    records
        .iter()
        .map(|r| {
            let probability = head.predict_proba(&r.vector)?;
            Ok(ScoredRecord {
                id: r.id.clone(),
                probability,
                verdict: Label::from(probability >= threshold),
                category: r.category.clone(),
            })
        })
        .collect()
}

/// Keyword → super-category map. Keywords are matched case-insensitively
/// with `_` treated as a space.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Taxonomy {
    keywords: BTreeMap<String, String>,
}

pub fn normalize_keyword(keyword: &str) -> String {
    keyword
        .replace('_', " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

impl Taxonomy {
    pub fn new<K: AsRef<str>, S: Into<String>>(entries: impl IntoIterator<Item = (K, S)>) -> Self {
        Taxonomy {
            keywords: entries
                .into_iter()
                .map(|(k, s)| (normalize_keyword(k.as_ref()), s.into()))
                .collect(),
        }
    }

    /// The benchmark's three super-categories and their keywords.
    pub fn benchmark() -> Self {
        const FELONY: &[&str] = &["armed robbery", "burglary", "kidnapping", "car vandalism"];
        const ANTISOCIAL: &[&str] = &[
            "drowsy driving",
            "slapping",
            "school fight",
            "secondhand smoking",
            "drunk driving",
            "school bullying",
            "manspreading",
            "fare evasion",
            "bad parking",
            "exam cheating",
            "affair",
            "middle finger",
            "smartphone while driving",
            "jaywalking",
            "public urination",
        ];
        const ENVIRONMENT: &[&str] = &[
            "fly-tipping",
            "garbage throwing",
            "land pollution",
            "air pollution",
            "water pollution",
            "space junk",
        ];
        let groups = [
            ("felony", FELONY),
            ("antisocial behavior", ANTISOCIAL),
            ("environment", ENVIRONMENT),
        ];
        Taxonomy::new(
            groups
                .iter()
                .flat_map(|(group, kws)| kws.iter().map(move |k| (*k, *group))),
        )
    }

    /// Parses `{"keyword": "super-category", ...}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: BTreeMap<String, String> = serde_json::from_str(text)?;
        Ok(Taxonomy::new(raw))
    }

    pub fn super_category(&self, keyword: &str) -> Option<&str> {
        self.keywords.get(&normalize_keyword(keyword)).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.keywords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryStatistic {
    /// Mean predicted probability.
    #[default]
    MeanProbability,
    /// Fraction of records with a positive verdict.
    PositiveRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuperAggregation {
    /// Unweighted mean of the member keywords' values.
    #[default]
    MeanOfKeywords,
    /// Statistic over all member records pooled together.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AggregateOptions {
    pub statistic: CategoryStatistic,
    pub aggregation: SuperAggregation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordSummary {
    pub keyword: String,
    pub super_category: String,
    pub count: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperCategorySummary {
    pub name: String,
    pub keywords: usize,
    pub count: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub statistic: CategoryStatistic,
    pub aggregation: SuperAggregation,
    pub keywords: Vec<KeywordSummary>,
    pub super_categories: Vec<SuperCategorySummary>,
    /// Number of categorized records aggregated.
    pub total: usize,
}

pub fn aggregate_by_category(scored: &[ScoredRecord], taxonomy: &Taxonomy) -> Result<CategoryReport> {
    aggregate_by_category_with(scored, taxonomy, AggregateOptions::default())
}

/// Records without a category are skipped; an unmapped keyword is an error.
pub fn aggregate_by_category_with(
    scored: &[ScoredRecord],
    taxonomy: &Taxonomy,
    options: AggregateOptions,
) -> Result<CategoryReport> {
    let value_of = |r: &ScoredRecord| match options.statistic {
        CategoryStatistic::MeanProbability => r.probability,
        CategoryStatistic::PositiveRate => r.verdict.as_f64(),
    };

    // keyword -> (super-category, values)
    let mut by_keyword: BTreeMap<String, (String, Vec<f64>)> = BTreeMap::new();
    for r in scored {
        let Some(category) = &r.category else { continue };
        let keyword = normalize_keyword(category);
        let group = taxonomy
            .super_category(&keyword)
            .ok_or_else(|| Error::UnmappedKeyword(category.clone()))?;
        by_keyword
            .entry(keyword)
            .or_insert_with(|| (group.to_string(), Vec::new()))
            .1
            .push(value_of(r));
    }
    if by_keyword.is_empty() {
        return Err(Error::Empty("no categorized records to aggregate".into()));
    }

    // super-category -> (keyword values, pooled sum, record count)
    let mut groups: BTreeMap<String, (Vec<f64>, f64, usize)> = BTreeMap::new();
    let keywords: Vec<KeywordSummary> = by_keyword
        .into_iter()
        .map(|(keyword, (super_category, values))| {
            let summary = KeywordSummary {
                keyword,
                count: values.len(),
                value: mean(&values),
                super_category,
            };
            let entry = groups.entry(summary.super_category.clone()).or_default();
            entry.0.push(summary.value);
            entry.1 += values.iter().sum::<f64>();
            entry.2 += values.len();
            summary
        })
        .collect();

    let super_categories = groups
        .into_iter()
        .map(|(name, (values, pooled_sum, count))| SuperCategorySummary {
            name,
            keywords: values.len(),
            count,
            value: match options.aggregation {
                SuperAggregation::MeanOfKeywords => mean(&values),
                SuperAggregation::Pooled => pooled_sum / count as f64,
            },
        })
        .collect();

    Ok(CategoryReport {
        statistic: options.statistic,
        aggregation: options.aggregation,
        total: keywords.iter().map(|k| k.count).sum(),
        keywords,
        super_categories,
    })
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
