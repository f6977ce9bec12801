//! The deterministic analytical layers: baselines, comparisons, ranking,
//! evidence-gated attribution, the reference report and handoff compaction.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::metric::{MetricId, Tag};
use crate::model::{
    AttributionSet, BaselineStats, ChartPoint, ComparisonFact, FactBank, LoggedEvent, NightKey, StyleConstraints,
    TagEvidence, UserNightRecord, WriterPacket,
};
use crate::num;

pub const DEFAULT_WINDOW_NIGHTS: usize = 14;
pub const DEFAULT_MIN_BASELINE_NIGHTS: u32 = 5;
pub const RULE_VERSION: &str = "select-v1";
pub const THRESHOLD_VERSION: &str = "attr-gate-v1";

/// Extra fractional digits the baseline standard deviation carries beyond the
/// metric's display precision.
const STD_EXTRA_DIGITS: u32 = 2;

/// The ranking rule shared by the deterministic ranker and the baseline prompts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionRule {
    pub min_baseline_nights: u32,
    pub priority_weights: BTreeMap<MetricId, Decimal>,
    pub rule_version: String,
}

impl Default for SelectionRule {
    fn default() -> Self {
        let priority_weights = MetricId::ALL
            .iter()
            .map(|&m| (m, if m == MetricId::SleepScore { Decimal::new(5, 1) } else { Decimal::ONE }))
            .collect();
        SelectionRule {
            min_baseline_nights: DEFAULT_MIN_BASELINE_NIGHTS,
            priority_weights,
            rule_version: RULE_VERSION.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum RuleError {
    #[error("min_baseline_nights must be at least 1")]
    MinNights,
    #[error("no positive weight for {0}")]
    Weight(MetricId),
}

impl SelectionRule {
    pub fn validate(&self) -> Result<(), RuleError> {
        if self.min_baseline_nights < 1 {
            return Err(RuleError::MinNights);
        }
        for m in MetricId::ALL {
            match self.priority_weights.get(&m) {
                Some(w) if *w > Decimal::ZERO => {}
                _ => return Err(RuleError::Weight(m)),
            }
        }
        Ok(())
    }

    pub fn weight(&self, metric: MetricId) -> Decimal {
        self.priority_weights.get(&metric).copied().unwrap_or(Decimal::ONE)
    }
}

/// The trailing nights that feed a baseline: the last `window_nights` history
/// records that carry `metric`, oldest first.
pub fn baseline_window(history: &[UserNightRecord], metric: MetricId, window_nights: usize) -> Vec<ChartPoint> {
    let mut points: Vec<ChartPoint> = history
        .iter()
        .rev()
        .filter_map(|r| r.value(metric).map(|value| ChartPoint { date: r.date, value }))
        .take(window_nights)
        .collect();
    points.reverse();
    points
}

fn isqrt(n: u128) -> u128 {
    if n < 2 {
        return n;
    }
    let mut x = n;
    let mut y = x.div_ceil(2);
    while y < x {
        x = y;
        y = (x + n / x) / 2;
    }
    x
}

/// Baseline over the trailing window. Mean is rounded half away from zero to
/// display precision; std (population) carries two more digits. Both are exact
/// integer computations on the scaled values.
pub fn compute_baseline(history: &[UserNightRecord], metric: MetricId, window_nights: usize) -> BaselineStats {
    let window = baseline_window(history, metric, window_nights);
    let count = window.len() as u32;
    if count == 0 {
        return BaselineStats { metric, mean: None, std: None, count };
    }
    let p = metric.precision();
    let xs: Vec<i128> = window.iter().map(|pt| num::round_to(pt.value, p).mantissa()).collect();
    let n = i128::from(count);
    let sum: i128 = xs.iter().sum();
    let sum_sq: i128 = xs.iter().map(|x| x * x).sum();
    let mean = Decimal::from_i128_with_scale(num::div_round_half_away(sum, n), p);

    // std * 10^(p+2) = sqrt(n*sum_sq - sum^2) * 100 / n, rounded half away from zero
    let t = ((n * sum_sq - sum * sum) as u128) * 10u128.pow(2 * STD_EXTRA_DIGITS);
    let n = n as u128;
    // r = round(sqrt(t) / n)  <=>  (2r-1)^2 n^2 <= 4t < (2r+1)^2 n^2
    let mut r = (isqrt(4 * t) + n) / (2 * n);
    while r > 0 && (2 * r - 1).pow(2) * n * n > 4 * t {
        r -= 1;
    }
    while (2 * r + 1).pow(2) * n * n <= 4 * t {
        r += 1;
    }
    let std = Decimal::from_i128_with_scale(r as i128, p + STD_EXTRA_DIGITS);
    BaselineStats { metric, mean: Some(mean), std: Some(std), count }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum CompareError {
    #[error("{0} has no baseline nights")]
    NoBaseline(MetricId),
    #[error("{0} baseline mean is zero")]
    ZeroBaseline(MetricId),
}

/// Compares the current value with its baseline mean at catalog precision.
pub fn compare(current: Decimal, baseline: &BaselineStats, metric: MetricId) -> Result<ComparisonFact, CompareError> {
    let mean = match baseline.mean {
        Some(mean) if baseline.count >= 1 => mean,
        _ => return Err(CompareError::NoBaseline(metric)),
    };
    if mean.is_zero() {
        return Err(CompareError::ZeroBaseline(metric));
    }
    let p = metric.precision();
    let current = num::round_to(current, p);
    let mean = num::round_to(mean, p);
    let pct = num::pct_delta(current, mean).ok_or(CompareError::ZeroBaseline(metric))?;
    Ok(ComparisonFact::new(metric, current, mean, pct))
}

/// Compares every metric present in the record that has a usable baseline.
pub fn compare_all(record: &UserNightRecord, baselines: &BTreeMap<MetricId, BaselineStats>) -> Vec<ComparisonFact> {
    record.values.iter().filter_map(|(&m, &v)| baselines.get(&m).and_then(|b| compare(v, b, m).ok())).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum RankError {
    #[error("no metric is eligible (cold start)")]
    NothingEligible,
}

/// Picks the eligible metric with the largest `weight * |pct_delta|`; ties go
/// to the earlier catalog metric.
pub fn rank(
    comparisons: &[ComparisonFact],
    baselines: &BTreeMap<MetricId, BaselineStats>,
    rule: &SelectionRule,
) -> Result<crate::model::RankingDecision, RankError> {
    let mut scores = BTreeMap::new();
    let mut eligible = BTreeSet::new();
    for c in comparisons {
        let score = rule.weight(c.metric) * Decimal::from(c.pct_delta.abs());
        scores.insert(c.metric, score);
        let enough = baselines.get(&c.metric).is_some_and(|b| b.count >= rule.min_baseline_nights);
        if enough && !c.baseline_mean.is_zero() {
            eligible.insert(c.metric);
        }
    }
    // BTreeSet iterates in catalog order, so a strict `>` keeps the earliest on ties
    let mut best: Option<(MetricId, Decimal)> = None;
    for &m in &eligible {
        let s = scores[&m];
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((m, s));
        }
    }
    let (selected, _) = best.ok_or(RankError::NothingEligible)?;
    Ok(crate::model::RankingDecision { selected, scores, eligible, rule_version: rule.rule_version.clone() })
}

/// Evidence gate: a candidate's evidence is the strongest same-tag event of the
/// night; it is admitted when evidence >= threshold.
pub fn attribute(events: &[LoggedEvent], candidates: &[Tag], threshold: Decimal) -> AttributionSet {
    let mut seen = BTreeSet::new();
    let mut allowed: Vec<TagEvidence> = candidates
        .iter()
        .filter(|t| seen.insert(*t))
        .filter_map(|tag| {
            let evidence = events.iter().filter(|e| &e.tag == tag).map(|e| e.strength).max().unwrap_or(Decimal::ZERO);
            (evidence >= threshold && evidence > Decimal::ZERO).then(|| TagEvidence { tag: tag.clone(), evidence })
        })
        .collect();
    allowed.sort_by(|a, b| b.evidence.cmp(&a.evidence).then_with(|| a.tag.cmp(&b.tag)));
    AttributionSet { allowed, threshold }
}

/// One formatted metric line of the reference report.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportLine {
    pub metric: MetricId,
    pub value: Decimal,
    pub baseline: Option<Decimal>,
    pub pct_delta: Option<i64>,
}

impl ReportLine {
    pub fn render(&self) -> String {
        let p = self.metric.precision();
        let value = self.metric.with_unit(&num::format_fixed(self.value, p));
        match (self.baseline, self.pct_delta) {
            (Some(b), Some(pct)) => format!(
                "{}: {} (baseline {}, {}%)",
                self.metric.label(),
                value,
                self.metric.with_unit(&num::format_fixed(b, p)),
                num::signed_pct(pct)
            ),
            _ => format!("{}: {} (no baseline)", self.metric.label(), value),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceReport {
    pub night: NightKey,
    pub lines: Vec<ReportLine>,
    pub text: String,
}

impl ReferenceReport {
    pub fn render_text(night: &NightKey, lines: &[ReportLine]) -> String {
        let mut text = format!("night {} {}", night.user_id, night.date);
        for line in lines {
            let _ = write!(text, "\n{}", line.render());
        }
        text
    }

    /// The structured form regenerates `text` byte-exactly.
    pub fn is_consistent(&self) -> bool {
        self.text == Self::render_text(&self.night, &self.lines)
    }

    pub fn line_for(&self, metric: MetricId) -> Option<&ReportLine> {
        self.lines.iter().find(|l| l.metric == metric)
    }
}

/// Formats every metric present in the record, in catalog order.
pub fn format_reference_report(record: &UserNightRecord, comparisons: &[ComparisonFact]) -> ReferenceReport {
    let lines: Vec<ReportLine> = record
        .values
        .iter()
        .map(|(&metric, &value)| {
            let c = comparisons.iter().find(|c| c.metric == metric);
            ReportLine { metric, value, baseline: c.map(|c| c.baseline_mean), pct_delta: c.map(|c| c.pct_delta) }
        })
        .collect();
    let night = record.key();
    let text = ReferenceReport::render_text(&night, &lines);
    ReferenceReport { night, lines, text }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum PacketError {
    #[error("fact bank has no comparison for the selected metric {0}")]
    IncompleteBank(MetricId),
}

/// Compacts the selected facts into the writer packet.
pub fn build_packet(
    bank: &FactBank,
    report: &ReferenceReport,
    attribution: &AttributionSet,
    chart: &[ChartPoint],
    constraints: StyleConstraints,
    schema_id: &str,
) -> Result<WriterPacket, PacketError> {
    let comparison = bank.selected_comparison().ok_or(PacketError::IncompleteBank(bank.selected))?.clone();
    Ok(WriterPacket {
        schema_id: schema_id.into(),
        night: bank.night.clone(),
        selected: bank.selected,
        comparison_display: comparison.display.clone(),
        comparison,
        report_line: report.line_for(bank.selected).map(ReportLine::render).unwrap_or_default(),
        allowed_numbers: bank.allowed_numbers.clone(),
        allowed_tags: attribution.allowed.clone(),
        chart: chart.to_vec(),
        style_constraints: constraints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use chrono::NaiveDate;
    use core::str::FromStr;

    fn d(s: &str) -> Decimal {
        Decimal::from_str(s).unwrap()
    }

    fn history(metric: MetricId, values: &[&str]) -> Vec<UserNightRecord> {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| UserNightRecord {
                user_id: "u".into(),
                date: NaiveDate::from_ymd_opt(2026, 2, 1).unwrap() + chrono::Days::new(i as u64),
                values: [(metric, d(v))].into_iter().collect(),
                events: Vec::new(),
            })
            .collect()
    }

    fn stats(mean: &str, count: u32) -> BaselineStats {
        BaselineStats { metric: MetricId::HrvMs, mean: Some(d(mean)), std: None, count }
    }

    #[test]
    fn baseline_of_three_nights() {
        // mean 41, population variance 2/3, std = sqrt(2/3) = 0.81649...
        let b = compute_baseline(&history(MetricId::HrvMs, &["40", "41", "42"]), MetricId::HrvMs, 14);
        assert_eq!(b.count, 3);
        assert_eq!(b.mean, Some(d("41.0")));
        assert_eq!(b.std.unwrap().to_string(), "0.816");
    }

    #[test]
    fn empty_history_has_no_mean() {
        let b = compute_baseline(&[], MetricId::HrvMs, 14);
        assert_eq!((b.count, b.mean, b.std), (0, None, None));
    }

    #[test]
    fn window_takes_trailing_nights() {
        let values: Vec<String> = (1..=20).map(|i| format!("{i}.0")).collect();
        let refs: Vec<&str> = values.iter().map(String::as_str).collect();
        let b = compute_baseline(&history(MetricId::HrvMs, &refs), MetricId::HrvMs, 14);
        assert_eq!(b.count, 14);
        // nights 7..=20
        assert_eq!(b.mean, Some(d("13.5")));
    }

    #[test]
    fn compare_worked_values() {
        let c = compare(d("34.2"), &stats("41.3", 14), MetricId::HrvMs).unwrap();
        assert_eq!(c.pct_delta, -17);
        assert_eq!(c.display, "34.2 vs 41.3 ms (-17%)");
        let flat = compare(d("41.3"), &stats("41.3", 14), MetricId::HrvMs).unwrap();
        assert_eq!((flat.pct_delta, flat.direction), (0, crate::model::Direction::Flat));
        assert_eq!(compare(d("50.0"), &stats("40.0", 3), MetricId::HrvMs).unwrap().pct_delta, 25);
        assert_eq!(
            compare(d("1.0"), &stats("0.0", 3), MetricId::HrvMs),
            Err(CompareError::ZeroBaseline(MetricId::HrvMs))
        );
        let none = BaselineStats { metric: MetricId::HrvMs, mean: None, std: None, count: 0 };
        assert_eq!(compare(d("1.0"), &none, MetricId::HrvMs), Err(CompareError::NoBaseline(MetricId::HrvMs)));
    }

    fn baselines(metrics: &[MetricId], count: u32) -> BTreeMap<MetricId, BaselineStats> {
        metrics.iter().map(|&m| (m, BaselineStats { metric: m, mean: Some(Decimal::ONE), std: None, count })).collect()
    }

    #[test]
    fn rank_selects_largest_weighted_change() {
        let cs = [
            ComparisonFact::new(MetricId::HrvMs, d("34.2"), d("41.3"), -17),
            ComparisonFact::new(MetricId::HeartRateBpm, d("59.2"), d("58.0"), 2),
        ];
        let b = baselines(&[MetricId::HrvMs, MetricId::HeartRateBpm], 14);
        let r = rank(&cs, &b, &SelectionRule::default()).unwrap();
        assert_eq!(r.selected, MetricId::HrvMs);
        assert_eq!(r.scores[&MetricId::HrvMs], d("17"));
    }

    #[test]
    fn rank_tie_break_and_single() {
        let cs = [
            ComparisonFact::new(MetricId::HeartRateBpm, d("66.0"), d("60.0"), 10),
            ComparisonFact::new(MetricId::HrvMs, d("45.0"), d("50.0"), -10),
        ];
        let b = baselines(&[MetricId::HrvMs, MetricId::HeartRateBpm], 14);
        assert_eq!(rank(&cs, &b, &SelectionRule::default()).unwrap().selected, MetricId::HrvMs);

        let single = [ComparisonFact::new(MetricId::SnorePct, d("5.0"), d("5.0"), 0)];
        let b = baselines(&[MetricId::SnorePct], 5);
        assert_eq!(rank(&single, &b, &SelectionRule::default()).unwrap().selected, MetricId::SnorePct);
    }

    #[test]
    fn rank_cold_start() {
        let cs = [ComparisonFact::new(MetricId::HrvMs, d("34.2"), d("41.3"), -17)];
        let b = baselines(&[MetricId::HrvMs], 4);
        assert_eq!(rank(&cs, &b, &SelectionRule::default()), Err(RankError::NothingEligible));
    }

    fn event(tag: &str, strength: &str) -> LoggedEvent {
        LoggedEvent { tag: Tag::new(tag), strength: d(strength), note: None }
    }

    #[test]
    fn attribution_gate() {
        let candidates = crate::metric::default_candidates();
        let set = attribute(&[event("Stress", "0.6"), event("Alcohol", "0.9")], &candidates, d("0.5"));
        let names: Vec<&str> = set.allowed.iter().map(|t| t.tag.as_str()).collect();
        assert_eq!(names, ["Alcohol", "Stress"]);
        assert!(attribute(&[], &candidates, d("0.5")).allowed.is_empty());
        let boundary = attribute(&[event("Fever", "0.5")], &candidates, d("0.5"));
        assert_eq!(boundary.allowed[0].tag.as_str(), "Fever");
        let weak = attribute(&[event("Fever", "0.3"), event("Fever", "0.6")], &candidates, d("0.5"));
        assert_eq!(weak.allowed[0].evidence, d("0.6"));
    }

    #[test]
    fn attribution_ties_by_name() {
        let candidates = crate::metric::default_candidates();
        let set = attribute(&[event("Stress", "0.6"), event("Sick", "0.6")], &candidates, d("0.5"));
        let names: Vec<&str> = set.allowed.iter().map(|t| t.tag.as_str()).collect();
        assert_eq!(names, ["Sick", "Stress"]);
    }

    #[test]
    fn report_lines() {
        let record = UserNightRecord {
            user_id: "u01".into(),
            date: NaiveDate::from_ymd_opt(2026, 2, 23).unwrap(),
            values: [(MetricId::HrvMs, d("34.2")), (MetricId::SleepScore, d("84"))].into_iter().collect(),
            events: Vec::new(),
        };
        let cs = [ComparisonFact::new(MetricId::HrvMs, d("34.2"), d("41.3"), -17)];
        let report = format_reference_report(&record, &cs);
        assert_eq!(report.text, "night u01 2026-02-23\nscore: 84 (no baseline)\nhrv: 34.2 ms (baseline 41.3 ms, -17%)");
        assert!(report.is_consistent());
        assert_eq!(report, format_reference_report(&record, &cs));
    }
}
