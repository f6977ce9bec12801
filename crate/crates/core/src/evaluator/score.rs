use alloc::borrow::ToOwned;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::evaluator::claims::{check_claim, extract_claims};
use crate::evaluator::schema::{parse_output, SchemaError};
use crate::model::{ConditionId, NightKey, ReferenceFacts, TraceRecord};
use crate::num;

/// Verdicts for one night. `sel_ok`/`attr_ok` are absent when the output did not parse.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NightScore {
    pub condition: ConditionId,
    pub model: String,
    pub night: NightKey,
    pub schema_ok: bool,
    pub schema_error: Option<SchemaError>,
    pub claims_total: u32,
    pub claims_unsupported: u32,
    /// Literal text of each unsupported claim.
    pub unsupported: Vec<String>,
    pub sel_ok: Option<bool>,
    pub attr_ok: Option<bool>,
}

impl NightScore {
    pub fn compliance_ok(&self) -> Option<bool> {
        Some(self.sel_ok? && self.attr_ok?)
    }
}

/// Scores a trace against the deterministic reference for the same night.
pub fn score_night(trace: &TraceRecord, reference: &ReferenceFacts) -> NightScore {
    let mut score = NightScore {
        condition: trace.condition,
        model: trace.model.clone(),
        night: trace.night.clone(),
        schema_ok: false,
        schema_error: None,
        claims_total: 0,
        claims_unsupported: 0,
        unsupported: Vec::new(),
        sel_ok: None,
        attr_ok: None,
    };
    let output = match parse_output(&trace.raw_output, &trace.schema_id) {
        Ok(output) => output,
        Err(e) => {
            score.schema_error = Some(e);
            return score;
        }
    };
    score.schema_ok = true;
    for claim in extract_claims(&output) {
        score.claims_total += 1;
        if !check_claim(&claim, &reference.bank) {
            score.claims_unsupported += 1;
            score.unsupported.push(claim.literal(&output).to_owned());
        }
    }
    score.sel_ok = Some(output.analysis_card.metric_id == reference.ranking.selected);
    let mut seen = BTreeSet::new();
    let attr_ok =
        output.analysis_card.tags.iter().all(|t| seen.insert(&t.name) && reference.bank.allowed_tags.contains(&t.name));
    score.attr_ok = Some(attr_ok);
    score
}

/// Cost and latency of one night, aligned with its score.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NightUsage {
    pub cost_usd: Decimal,
    pub latency_ms: u64,
}

/// Per-(condition, model) rates. Counts are kept next to the rates so that
/// renderers can round exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionAggregate {
    pub n: u32,
    pub schema_failures: u32,
    pub schema_ok_nights: u32,
    pub claim_nights: u32,
    pub claims_total: u32,
    pub claims_unsupported: u32,
    pub nights_with_unsupported: u32,
    pub sel_failures: u32,
    pub attr_failures: u32,
    pub compliance_failures: u32,
    pub schema_err: f64,
    /// Claim-level; nights without claims are excluded.
    pub num_err: f64,
    /// Denominator: schema-ok nights.
    pub sel_err: f64,
    pub attr_err: f64,
    pub compliance_err: f64,
    /// Same failures over all nights.
    pub sel_err_all: f64,
    pub attr_err_all: f64,
    pub compliance_err_all: f64,
    /// Fraction of claim-bearing nights with at least one unsupported claim.
    pub num_night_incidence: f64,
    pub cost_per_night: Decimal,
    pub latency_mean_ms: u64,
    pub latency_median_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum AggregateError {
    #[error("no nights to aggregate")]
    EmptyInput,
    #[error("{scores} scores but {usage} usage rows")]
    Misaligned { scores: usize, usage: usize },
}

fn ratio(num: u32, den: u32) -> f64 {
    if den == 0 {
        0.0
    } else {
        f64::from(num) / f64::from(den)
    }
}

/// Renders `num / den` as a percentage with one decimal, rounded half away from zero.
pub fn percent_1dp(num: u32, den: u32) -> String {
    if den == 0 {
        return "0.0".into();
    }
    let tenths = num::div_round_half_away(1000 * i128::from(num), i128::from(den));
    format!("{}.{}", tenths / 10, tenths % 10)
}

pub fn aggregate(scores: &[NightScore], usage: &[NightUsage]) -> Result<ConditionAggregate, AggregateError> {
    if scores.is_empty() {
        return Err(AggregateError::EmptyInput);
    }
    if scores.len() != usage.len() {
        return Err(AggregateError::Misaligned { scores: scores.len(), usage: usage.len() });
    }
    let n = scores.len() as u32;
    let count = |f: &dyn Fn(&NightScore) -> bool| scores.iter().filter(|s| f(s)).count() as u32;
    let schema_ok_nights = count(&|s| s.schema_ok);
    let claim_nights = count(&|s| s.schema_ok && s.claims_total > 0);
    let nights_with_unsupported = count(&|s| s.schema_ok && s.claims_unsupported > 0);
    let claims_total: u32 = scores.iter().filter(|s| s.schema_ok).map(|s| s.claims_total).sum();
    let claims_unsupported: u32 = scores.iter().filter(|s| s.schema_ok).map(|s| s.claims_unsupported).sum();
    let sel_failures = count(&|s| s.sel_ok == Some(false));
    let attr_failures = count(&|s| s.attr_ok == Some(false));
    let compliance_failures = count(&|s| s.compliance_ok() == Some(false));

    let cost_total: Decimal = usage.iter().map(|u| u.cost_usd).sum();
    let latency_total: u128 = usage.iter().map(|u| u128::from(u.latency_ms)).sum();
    let mut latencies: Vec<u64> = usage.iter().map(|u| u.latency_ms).collect();
    latencies.sort_unstable();
    let mid = latencies.len() / 2;
    let latency_median_ms = if latencies.len() % 2 == 1 {
        latencies[mid]
    } else {
        num::div_round_half_away(i128::from(latencies[mid - 1]) + i128::from(latencies[mid]), 2) as u64
    };

    Ok(ConditionAggregate {
        n,
        schema_failures: n - schema_ok_nights,
        schema_ok_nights,
        claim_nights,
        claims_total,
        claims_unsupported,
        nights_with_unsupported,
        sel_failures,
        attr_failures,
        compliance_failures,
        schema_err: ratio(n - schema_ok_nights, n),
        num_err: ratio(claims_unsupported, claims_total),
        sel_err: ratio(sel_failures, schema_ok_nights),
        attr_err: ratio(attr_failures, schema_ok_nights),
        compliance_err: ratio(compliance_failures, schema_ok_nights),
        sel_err_all: ratio(sel_failures, n),
        attr_err_all: ratio(attr_failures, n),
        compliance_err_all: ratio(compliance_failures, n),
        num_night_incidence: ratio(nights_with_unsupported, claim_nights),
        cost_per_night: cost_total / Decimal::from(n),
        latency_mean_ms: num::div_round_half_away(latency_total as i128, i128::from(n)) as u64,
        latency_median_ms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn night(i: u32, claims: u32, bad: u32, sel: bool, attr: bool) -> NightScore {
        NightScore {
            condition: ConditionId::Tfts,
            model: "m".into(),
            night: NightKey { user_id: format!("u{i}"), date: NaiveDate::from_ymd_opt(2026, 2, 1).unwrap() },
            schema_ok: true,
            schema_error: None,
            claims_total: claims,
            claims_unsupported: bad,
            unsupported: Vec::new(),
            sel_ok: Some(sel),
            attr_ok: Some(attr),
        }
    }

    fn free(n: usize) -> Vec<NightUsage> {
        (0..n).map(|_| NightUsage { cost_usd: Decimal::ZERO, latency_ms: 0 }).collect()
    }

    #[test]
    fn num_err_excludes_zero_claim_nights() {
        let scores = [night(0, 3, 1, true, true), night(1, 0, 0, true, true), night(2, 4, 0, true, true)];
        let agg = aggregate(&scores, &free(3)).unwrap();
        assert_eq!((agg.claims_unsupported, agg.claims_total), (1, 7));
        assert_eq!(agg.num_err, 1.0 / 7.0);
        assert_eq!(agg.claim_nights, 2);
    }

    #[test]
    fn compliance_is_the_union() {
        let scores: Vec<_> = (0..10).map(|i| night(i, 1, 0, !(i == 0 || i == 1), i != 2)).collect();
        let agg = aggregate(&scores, &free(10)).unwrap();
        assert_eq!(agg.sel_err, 0.2);
        assert_eq!(agg.attr_err, 0.1);
        assert_eq!(agg.compliance_err, 0.3);
    }

    #[test]
    fn schema_failures_only_count_as_schema_err() {
        let mut bad = night(0, 0, 0, true, true);
        bad.schema_ok = false;
        bad.sel_ok = None;
        bad.attr_ok = None;
        let scores = [bad, night(1, 2, 0, false, true)];
        let agg = aggregate(&scores, &free(2)).unwrap();
        assert_eq!(agg.schema_err, 0.5);
        assert_eq!(agg.sel_err, 1.0);
        assert_eq!(agg.sel_err_all, 0.5);
    }

    #[test]
    fn empty_and_misaligned() {
        assert_eq!(aggregate(&[], &[]), Err(AggregateError::EmptyInput));
        assert!(matches!(aggregate(&[night(0, 1, 0, true, true)], &[]), Err(AggregateError::Misaligned { .. })));
    }

    #[test]
    fn cost_and_latency_means() {
        let scores = [night(0, 1, 0, true, true), night(1, 1, 0, true, true)];
        let usage = [
            NightUsage { cost_usd: Decimal::new(14, 4), latency_ms: 100 },
            NightUsage { cost_usd: Decimal::new(6, 4), latency_ms: 301 },
        ];
        let agg = aggregate(&scores, &usage).unwrap();
        assert_eq!(agg.cost_per_night, Decimal::new(10, 4));
        assert_eq!(agg.latency_mean_ms, 201);
        assert_eq!(agg.latency_median_ms, 201);
    }

    #[test]
    fn percent_rendering() {
        assert_eq!(percent_1dp(1, 280), "0.4");
        assert_eq!(percent_1dp(0, 280), "0.0");
        assert_eq!(percent_1dp(280, 280), "100.0");
        assert_eq!(percent_1dp(1, 7), "14.3");
    }
}
