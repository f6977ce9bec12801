use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::metric::{MetricId, Tag, UnitClass};
use crate::model::record::{NightKey, UserNightRecord};
use crate::num;

/// Trailing-window statistics for one metric. `mean` and `std` are absent
/// when no night contributed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineStats {
    pub metric: MetricId,
    pub mean: Option<Decimal>,
    pub std: Option<Decimal>,
    pub count: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Flat,
}

impl Direction {
    pub fn of(pct_delta: i64) -> Direction {
        match pct_delta.signum() {
            1 => Direction::Up,
            -1 => Direction::Down,
            _ => Direction::Flat,
        }
    }
}

/// A current value set against its baseline, e.g. "34.2 vs 41.3 ms (-17%)".
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonFact {
    pub metric: MetricId,
    pub current: Decimal,
    pub baseline_mean: Decimal,
    pub pct_delta: i64,
    pub direction: Direction,
    pub display: String,
}

impl ComparisonFact {
    /// Builds a fact whose direction and display follow from the other fields.
    pub fn new(metric: MetricId, current: Decimal, baseline_mean: Decimal, pct_delta: i64) -> Self {
        let mut fact = ComparisonFact {
            metric,
            current,
            baseline_mean,
            pct_delta,
            direction: Direction::of(pct_delta),
            display: String::new(),
        };
        fact.display = fact.render_display();
        fact
    }

    /// `<current> vs <baseline> <unit> (<signed pct>%)` at catalog precision.
    pub fn render_display(&self) -> String {
        let p = self.metric.precision();
        let pair = format!("{} vs {}", num::format_fixed(self.current, p), num::format_fixed(self.baseline_mean, p));
        format!("{} ({}%)", self.metric.with_unit(&pair), num::signed_pct(self.pct_delta))
    }

    /// Direction agrees with the sign of `pct_delta` and `display` regenerates.
    pub fn is_consistent(&self) -> bool {
        self.direction == Direction::of(self.pct_delta) && self.display == self.render_display()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankingDecision {
    pub selected: MetricId,
    pub scores: BTreeMap<MetricId, Decimal>,
    pub eligible: BTreeSet<MetricId>,
    pub rule_version: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagEvidence {
    pub tag: Tag,
    pub evidence: Decimal,
}

/// Tags admitted by the evidence gate, strongest first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributionSet {
    pub allowed: Vec<TagEvidence>,
    pub threshold: Decimal,
}

impl AttributionSet {
    pub fn tag_names(&self) -> BTreeSet<Tag> {
        self.allowed.iter().map(|t| t.tag.clone()).collect()
    }

    pub fn contains(&self, tag: &Tag) -> bool {
        self.allowed.iter().any(|t| &t.tag == tag)
    }
}

/// A numeric literal the writer is permitted to state.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllowedNumber {
    pub value: Decimal,
    pub unit: UnitClass,
}

impl AllowedNumber {
    pub fn new(value: Decimal, unit: UnitClass) -> Self {
        AllowedNumber { value, unit }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactValue {
    pub value: Decimal,
    pub unit: String,
    pub precision: u32,
}

/// The verified facts for one night; ground truth for every evaluator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactBank {
    pub night: NightKey,
    pub values: BTreeMap<MetricId, FactValue>,
    pub comparisons: BTreeMap<MetricId, ComparisonFact>,
    pub allowed_numbers: BTreeSet<AllowedNumber>,
    pub allowed_tags: BTreeSet<Tag>,
    pub selected: MetricId,
}

impl FactBank {
    pub fn selected_comparison(&self) -> Option<&ComparisonFact> {
        self.comparisons.get(&self.selected)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum FactBankError {
    #[error("selected metric {0} has no comparison")]
    MissingComparison(MetricId),
    #[error("inconsistent night: {0}")]
    InconsistentNight(String),
}

/// Adds the literal forms under which a metric value may legitimately appear.
fn push_value_forms(out: &mut BTreeSet<AllowedNumber>, metric: MetricId, value: Decimal) {
    let value = num::round_to(value, metric.precision());
    out.insert(AllowedNumber::new(value, metric.unit_class()));
    if metric.is_duration() {
        let minutes = value.mantissa();
        out.insert(AllowedNumber::new(value, UnitClass::HoursMinutes));
        out.insert(AllowedNumber::new(Decimal::from(minutes / 60), UnitClass::Hours));
        out.insert(AllowedNumber::new(Decimal::from(minutes % 60), UnitClass::Minutes));
    }
}

/// Assembles the fact bank for a night from the outputs of the analytical layers.
pub fn build_fact_bank(
    record: &UserNightRecord,
    comparisons: &[ComparisonFact],
    ranking: &RankingDecision,
    attribution: &AttributionSet,
) -> Result<FactBank, FactBankError> {
    if !comparisons.iter().any(|c| c.metric == ranking.selected) {
        return Err(FactBankError::MissingComparison(ranking.selected));
    }
    let mut allowed_numbers = BTreeSet::new();
    let mut values = BTreeMap::new();
    for (&metric, &value) in &record.values {
        values.insert(
            metric,
            FactValue {
                value: num::round_to(value, metric.precision()),
                unit: metric.unit().to_string(),
                precision: metric.precision(),
            },
        );
        push_value_forms(&mut allowed_numbers, metric, value);
    }
    let mut by_metric = BTreeMap::new();
    for c in comparisons {
        if !record.values.contains_key(&c.metric) {
            return Err(FactBankError::InconsistentNight(format!(
                "comparison for {} but the record has no such value",
                c.metric
            )));
        }
        if by_metric.insert(c.metric, c.clone()).is_some() {
            return Err(FactBankError::InconsistentNight(format!("two comparisons for {}", c.metric)));
        }
        push_value_forms(&mut allowed_numbers, c.metric, c.current);
        push_value_forms(&mut allowed_numbers, c.metric, c.baseline_mean);
        allowed_numbers.insert(AllowedNumber::new(Decimal::from(c.pct_delta.abs()), UnitClass::Percent));
        if c.pct_delta < 0 {
            allowed_numbers.insert(AllowedNumber::new(Decimal::from(c.pct_delta), UnitClass::Percent));
        }
    }
    Ok(FactBank {
        night: record.key(),
        values,
        comparisons: by_metric,
        allowed_numbers,
        allowed_tags: attribution.tag_names(),
        selected: ranking.selected,
    })
}
