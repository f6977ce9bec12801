use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use chrono::NaiveDate;
use rust_decimal::Decimal;
use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::metric::{MetricId, Tag, TagVocabulary};

/// Identifies one user-night.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NightKey {
    pub user_id: String,
    pub date: NaiveDate,
}

impl fmt::Display for NightKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.user_id, self.date)
    }
}

/// A logged behavior or condition for the night.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoggedEvent {
    pub tag: Tag,
    pub strength: Decimal,
    #[serde(default)]
    pub note: Option<String>,
}

/// One night of wearable metrics plus logged events for one user.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserNightRecord {
    pub user_id: String,
    pub date: NaiveDate,
    #[serde(deserialize_with = "unique_metric_map")]
    pub values: BTreeMap<MetricId, Decimal>,
    #[serde(default)]
    pub events: Vec<LoggedEvent>,
}

/// The first invariant a record breaks.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{field}: {reason}")]
pub struct RecordViolation {
    pub field: String,
    pub reason: String,
}

impl RecordViolation {
    fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        RecordViolation { field: field.into(), reason: reason.into() }
    }
}

impl UserNightRecord {
    pub fn key(&self) -> NightKey {
        NightKey { user_id: self.user_id.clone(), date: self.date }
    }

    pub fn value(&self, metric: MetricId) -> Option<Decimal> {
        self.values.get(&metric).copied()
    }

    /// Checks every record invariant against the given tag vocabulary.
    pub fn validate(&self, vocabulary: &TagVocabulary) -> Result<(), RecordViolation> {
        if self.user_id.is_empty() {
            return Err(RecordViolation::new("user_id", "empty"));
        }
        let hundred = Decimal::ONE_HUNDRED;
        for (&metric, &value) in &self.values {
            let field = format!("values.{metric}");
            if value.is_sign_negative() && !value.is_zero() {
                return Err(RecordViolation::new(field, "negative value"));
            }
            if value.scale() > metric.precision() {
                return Err(RecordViolation::new(field, format!("more than {} fractional digits", metric.precision())));
            }
            if matches!(metric, MetricId::SleepScore | MetricId::SnorePct) && value > hundred {
                return Err(RecordViolation::new(field, "exceeds 100"));
            }
        }
        let stages: Option<Decimal> = [MetricId::DeepMin, MetricId::RemMin, MetricId::LightMin]
            .iter()
            .map(|m| self.value(*m).unwrap_or(Decimal::ZERO))
            .try_fold(Decimal::ZERO, |acc, v| acc.checked_add(v));
        if let (Some(stages), Some(duration)) = (stages, self.value(MetricId::DurationMin)) {
            if stages > duration {
                return Err(RecordViolation::new(
                    "values.duration_min",
                    format!("deep + rem + light = {stages} exceeds duration {duration}"),
                ));
            }
        }
        for (i, event) in self.events.iter().enumerate() {
            if event.strength < Decimal::ZERO || event.strength > Decimal::ONE {
                return Err(RecordViolation::new(format!("events[{i}].strength"), "outside [0, 1]"));
            }
            if !vocabulary.contains(&event.tag) {
                return Err(RecordViolation::new(
                    format!("events[{i}].tag"),
                    format!("{} is not in the tag vocabulary", event.tag),
                ));
            }
        }
        Ok(())
    }
}

fn unique_metric_map<'de, D>(deserializer: D) -> Result<BTreeMap<MetricId, Decimal>, D::Error>
where
    D: Deserializer<'de>,
{
    struct UniqueMap;

    impl<'de> Visitor<'de> for UniqueMap {
        type Value = BTreeMap<MetricId, Decimal>;

        fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str("a map of metric id to decimal")
        }

        fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
            let mut out = BTreeMap::new();
            while let Some((metric, value)) = access.next_entry::<MetricId, Decimal>()? {
                if out.insert(metric, value).is_some() {
                    return Err(serde::de::Error::custom(format!("duplicate metric {metric}")));
                }
            }
            Ok(out)
        }
    }

    deserializer.deserialize_map(UniqueMap)
}

impl fmt::Display for UserNightRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serde_json::to_string(self).unwrap_or_else(|e| e.to_string()))
    }
}
