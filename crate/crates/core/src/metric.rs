//! The closed metric catalog, unit classes and the attribution tag vocabulary.

use alloc::borrow::ToOwned;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// One wearable metric. Declaration order is the catalog order, which is also
/// the ranking tie-break priority (earlier wins).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    #[serde(alias = "score")]
    SleepScore,
    #[serde(alias = "duration")]
    DurationMin,
    #[serde(alias = "deep")]
    DeepMin,
    #[serde(alias = "rem")]
    RemMin,
    #[serde(alias = "light")]
    LightMin,
    #[serde(alias = "hrv")]
    HrvMs,
    #[serde(alias = "heart_rate")]
    HeartRateBpm,
    #[serde(alias = "resp_rate")]
    RespRateBrpm,
    #[serde(alias = "snore_percent")]
    SnorePct,
}

impl MetricId {
    pub const ALL: [MetricId; 9] = [
        MetricId::SleepScore,
        MetricId::DurationMin,
        MetricId::DeepMin,
        MetricId::RemMin,
        MetricId::LightMin,
        MetricId::HrvMs,
        MetricId::HeartRateBpm,
        MetricId::RespRateBrpm,
        MetricId::SnorePct,
    ];

    /// Canonical identifier, as serialized.
    pub fn as_str(self) -> &'static str {
        match self {
            MetricId::SleepScore => "sleep_score",
            MetricId::DurationMin => "duration_min",
            MetricId::DeepMin => "deep_min",
            MetricId::RemMin => "rem_min",
            MetricId::LightMin => "light_min",
            MetricId::HrvMs => "hrv_ms",
            MetricId::HeartRateBpm => "heart_rate_bpm",
            MetricId::RespRateBrpm => "resp_rate_brpm",
            MetricId::SnorePct => "snore_pct",
        }
    }

    /// Short label used in the reference report.
    pub fn label(self) -> &'static str {
        match self {
            MetricId::SleepScore => "score",
            MetricId::DurationMin => "duration",
            MetricId::DeepMin => "deep",
            MetricId::RemMin => "rem",
            MetricId::LightMin => "light",
            MetricId::HrvMs => "hrv",
            MetricId::HeartRateBpm => "heart_rate",
            MetricId::RespRateBrpm => "resp_rate",
            MetricId::SnorePct => "snore",
        }
    }

    /// Name used in user-facing prose.
    pub fn prose_name(self) -> &'static str {
        match self {
            MetricId::SleepScore => "sleep score",
            MetricId::DurationMin => "sleep duration",
            MetricId::DeepMin => "deep sleep",
            MetricId::RemMin => "REM sleep",
            MetricId::LightMin => "light sleep",
            MetricId::HrvMs => "HRV",
            MetricId::HeartRateBpm => "heart rate",
            MetricId::RespRateBrpm => "respiratory rate",
            MetricId::SnorePct => "snoring",
        }
    }

    /// Display unit; empty for the unitless sleep score.
    pub fn unit(self) -> &'static str {
        match self {
            MetricId::SleepScore => "",
            MetricId::DurationMin | MetricId::DeepMin | MetricId::RemMin | MetricId::LightMin => "min",
            MetricId::HrvMs => "ms",
            MetricId::HeartRateBpm => "bpm",
            MetricId::RespRateBrpm => "brpm",
            MetricId::SnorePct => "%",
        }
    }

    /// Number of fractional digits values are stored and displayed with.
    pub fn precision(self) -> u32 {
        match self {
            MetricId::HrvMs | MetricId::HeartRateBpm | MetricId::RespRateBrpm | MetricId::SnorePct => 1,
            _ => 0,
        }
    }

    pub fn unit_class(self) -> UnitClass {
        match self {
            MetricId::SleepScore => UnitClass::Unitless,
            MetricId::DurationMin | MetricId::DeepMin | MetricId::RemMin | MetricId::LightMin => UnitClass::Minutes,
            MetricId::HrvMs => UnitClass::Ms,
            MetricId::HeartRateBpm => UnitClass::Bpm,
            MetricId::RespRateBrpm => UnitClass::Brpm,
            MetricId::SnorePct => UnitClass::Percent,
        }
    }

    pub fn is_duration(self) -> bool {
        self.unit_class() == UnitClass::Minutes
    }

    /// Appends the unit to an already formatted number ("34.2 ms", "6.0%", "84").
    pub fn with_unit(self, number: &str) -> String {
        let mut out = number.to_owned();
        match self.unit() {
            "" => {}
            "%" => out.push('%'),
            unit => {
                out.push(' ');
                out.push_str(unit);
            }
        }
        out
    }

    pub fn parse(s: &str) -> Option<MetricId> {
        MetricId::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s || m.label() == s)
            .or((s == "snore_percent").then_some(MetricId::SnorePct))
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Unit families a numeric literal can belong to.
///
/// `HoursMinutes` values are always expressed in total minutes; `Hours` is the
/// bare hour component of a duration ("7 h").
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitClass {
    Ms,
    Bpm,
    Brpm,
    Percent,
    Minutes,
    HoursMinutes,
    Hours,
    Unitless,
}

impl UnitClass {
    /// Whether a claim of class `self` may be backed by a fact of class `fact`.
    pub fn compatible_with(self, fact: UnitClass) -> bool {
        use UnitClass::*;
        match (self, fact) {
            (Unitless, _) => true,
            (Minutes, HoursMinutes) | (HoursMinutes, Minutes) => true,
            (a, b) => a == b,
        }
    }

    pub fn suffix(self) -> &'static str {
        match self {
            UnitClass::Ms => " ms",
            UnitClass::Bpm => " bpm",
            UnitClass::Brpm => " brpm",
            UnitClass::Percent => "%",
            UnitClass::Minutes => " min",
            UnitClass::Hours => " h",
            UnitClass::HoursMinutes | UnitClass::Unitless => "",
        }
    }
}

/// Attribution tag name ("Alcohol", "Stress", ...).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Tag(pub String);

impl Tag {
    pub fn new(name: &str) -> Tag {
        Tag(name.to_owned())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Tags that may be evidence-gated on a night.
pub const DEFAULT_CANDIDATES: [&str; 4] = ["Alcohol", "Stress", "Sick", "Fever"];

/// The configured tag vocabulary: the candidates plus tags that are known to the
/// product but have no logged-event source in this pipeline.
pub const DEFAULT_VOCABULARY: [&str; 6] = ["Alcohol", "Stress", "Sick", "Fever", "Caffeine", "LateMeal"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagVocabulary(pub Vec<Tag>);

impl TagVocabulary {
    pub fn contains(&self, tag: &Tag) -> bool {
        self.0.iter().any(|t| t == tag)
    }

    pub fn tags(&self) -> &[Tag] {
        &self.0
    }
}

impl Default for TagVocabulary {
    fn default() -> Self {
        TagVocabulary(DEFAULT_VOCABULARY.iter().map(|t| Tag::new(t)).collect())
    }
}

pub fn default_candidates() -> Vec<Tag> {
    DEFAULT_CANDIDATES.iter().map(|t| Tag::new(t)).collect()
}
