//! Source-specific label conversion into the canonical convention.
//!
//! `Ok(None)` means the example is excluded from the dataset.

use std::fmt;
use std::str::FromStr;

use super::Label;
use crate::error::{Error, Result};

/// SMID mean moral ratings above this value are moral, below it immoral.
pub const SMID_MORAL_RATE_CUTOFF: f64 = 2.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    Ethics,
    Nsfw,
    SexualIntent,
    Violence,
    Coco,
    Benchmark,
}

impl LabelSource {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelSource::Ethics => "ethics",
            LabelSource::Nsfw => "nsfw",
            LabelSource::SexualIntent => "sexual_intent",
            LabelSource::Violence => "violence",
            LabelSource::Coco => "coco",
            LabelSource::Benchmark => "benchmark",
        }
    }
}

impl fmt::Display for LabelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ethics" => LabelSource::Ethics,
            "nsfw" => LabelSource::Nsfw,
            "sexual_intent" => LabelSource::SexualIntent,
            "violence" => LabelSource::Violence,
            "coco" => LabelSource::Coco,
            "benchmark" => LabelSource::Benchmark,
            other => return Err(Error::UnknownSource(other.to_string())),
        })
    }
}

/// SMID: rate > 2.4 is moral, rate < 2.4 immoral, exactly 2.4 excluded.
///
/// SMID itself encodes moral images as 1; the canonical label inverts that.
pub fn convert_smid_label(moral_rate: f64) -> Result<Option<Label>> {
    if !moral_rate.is_finite() {
        return Err(Error::NonFiniteValue {
            what: format!("moral rate {moral_rate}"),
        });
    }
    Ok(if moral_rate > SMID_MORAL_RATE_CUTOFF {
        Some(Label::Moral)
    } else if moral_rate < SMID_MORAL_RATE_CUTOFF {
        Some(Label::Immoral)
    } else {
        None
    })
}

pub fn convert_source_label(source: &str, raw_class: &str) -> Result<Option<Label>> {
    let source: LabelSource = source.parse()?;
    let class = raw_class.trim().to_ascii_lowercase();
    let unknown = || Error::UnknownClass {
        origin: source.to_string(),
        class: raw_class.to_string(),
    };
    let label = match source {
        LabelSource::Ethics => match class.as_str() {
            "1" => Some(Label::Immoral),
            "0" => Some(Label::Moral),
            _ => return Err(unknown()),
        },
        LabelSource::Nsfw => match class.as_str() {
            "sexy" | "porn" => Some(Label::Immoral),
            "drawings" | "neutral" => Some(Label::Moral),
            _ => return Err(unknown()),
        },
        // (i) provocative, (ii) implicit intent, (iii) no sexual intent.
        LabelSource::SexualIntent => match class.as_str() {
            "provocative" | "i" => Some(Label::Immoral),
            "implicit" | "ii" => None,
            "non_sexual" | "none" | "iii" => Some(Label::Moral),
            _ => return Err(unknown()),
        },
        LabelSource::Violence => match class.as_str() {
            "violence" => Some(Label::Immoral),
            "non-violence" | "non_violence" | "nonviolence" => Some(Label::Moral),
            _ => return Err(unknown()),
        },
        LabelSource::Coco => Some(Label::Moral),
        LabelSource::Benchmark => {
            if class.is_empty() {
                return Err(unknown());
            }
            Some(Label::Immoral)
        }
    };
    Ok(label)
}
