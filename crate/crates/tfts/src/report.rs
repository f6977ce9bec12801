//! Scores, aggregates and the CSV tables built from them.

use std::collections::BTreeMap;
use std::path::Path;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use tfts_core::evaluator::{aggregate, percent_1dp, score_night, ConditionAggregate, NightScore, NightUsage};
use tfts_core::harness::{cost_of, CostError, ModelPrice, PriceTable};
use tfts_core::model::{ConditionId, TraceRecord};
use tfts_core::num;

use crate::io::IoError;

/// One line of a score file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoredNight {
    pub score: NightScore,
    pub usage: NightUsage,
}

/// Scores traces. Cost comes from `prices` when given, else from the trace, else zero.
pub fn score_traces(traces: &[TraceRecord], prices: Option<&PriceTable>) -> Result<Vec<ScoredNight>, CostError> {
    traces
        .iter()
        .map(|t| {
            let cost_usd = match prices {
                Some(p) => cost_of(t, p)?,
                None => t.cost_usd.unwrap_or(Decimal::ZERO),
            };
            Ok(ScoredNight {
                score: score_night(t, &t.reference),
                usage: NightUsage { cost_usd, latency_ms: t.latency_ms },
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub condition: ConditionId,
    pub model: String,
    pub agg: ConditionAggregate,
}

/// One row per (condition, model), in condition order then model name.
pub fn aggregate_scored(rows: &[ScoredNight]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(ConditionId, String), (Vec<NightScore>, Vec<NightUsage>)> = BTreeMap::new();
    for row in rows {
        let g = groups.entry((row.score.condition, row.score.model.clone())).or_default();
        g.0.push(row.score.clone());
        g.1.push(row.usage);
    }
    groups
        .into_iter()
        .map(|((condition, model), (scores, usage))| AggregateRow {
            condition,
            model,
            agg: aggregate(&scores, &usage).expect("groups are non-empty and aligned"),
        })
        .collect()
}

/// Mean latency in seconds with one decimal.
fn seconds_1dp(ms: u64) -> String {
    let tenths = num::div_round_half_away(i128::from(ms), 100);
    format!("{}.{}", tenths / 10, tenths % 10)
}

fn to_csv(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub const RESULTS_HEADER: [&str; 9] =
    ["condition", "model", "n", "schema_err", "num_err", "sel_err", "attr_err", "cost_per_night", "lat_s"];

/// Rates in percent with one decimal, cost in USD with four, latency in seconds with one.
pub fn results_csv(rows: &[AggregateRow]) -> String {
    let body = rows
        .iter()
        .map(|r| {
            let a = &r.agg;
            vec![
                r.condition.to_string(),
                r.model.clone(),
                a.n.to_string(),
                percent_1dp(a.schema_failures, a.n),
                percent_1dp(a.claims_unsupported, a.claims_total),
                percent_1dp(a.sel_failures, a.schema_ok_nights),
                percent_1dp(a.attr_failures, a.schema_ok_nights),
                num::format_fixed(a.cost_per_night, 4),
                seconds_1dp(a.latency_mean_ms),
            ]
        })
        .collect();
    to_csv(&RESULTS_HEADER, body)
}

pub const DETAIL_HEADER: [&str; 20] = [
    "condition",
    "model",
    "n",
    "schema_failures",
    "schema_ok_nights",
    "claim_nights",
    "claims_total",
    "claims_unsupported",
    "nights_with_unsupported",
    "sel_failures",
    "attr_failures",
    "compliance_failures",
    "num_night_incidence",
    "compliance_err",
    "sel_err_all",
    "attr_err_all",
    "compliance_err_all",
    "cost_per_night",
    "latency_mean_ms",
    "latency_median_ms",
];

/// Counts, alternative denominators and unrounded usage.
pub fn detail_csv(rows: &[AggregateRow]) -> String {
    let body = rows
        .iter()
        .map(|r| {
            let a = &r.agg;
            vec![
                r.condition.to_string(),
                r.model.clone(),
                a.n.to_string(),
                a.schema_failures.to_string(),
                a.schema_ok_nights.to_string(),
                a.claim_nights.to_string(),
                a.claims_total.to_string(),
                a.claims_unsupported.to_string(),
                a.nights_with_unsupported.to_string(),
                a.sel_failures.to_string(),
                a.attr_failures.to_string(),
                a.compliance_failures.to_string(),
                percent_1dp(a.nights_with_unsupported, a.claim_nights),
                percent_1dp(a.compliance_failures, a.schema_ok_nights),
                percent_1dp(a.sel_failures, a.n),
                percent_1dp(a.attr_failures, a.n),
                percent_1dp(a.compliance_failures, a.n),
                a.cost_per_night.normalize().to_string(),
                a.latency_mean_ms.to_string(),
                a.latency_median_ms.to_string(),
            ]
        })
        .collect();
    to_csv(&DETAIL_HEADER, body)
}

pub const FRONTIER_HEADER: [&str; 5] = ["condition", "model", "cost_per_night", "num_err", "compliance_err"];

/// Cost against the two error axes, rates in percent.
pub fn frontier_csv(rows: &[AggregateRow]) -> String {
    let body = rows
        .iter()
        .map(|r| {
            let a = &r.agg;
            vec![
                r.condition.to_string(),
                r.model.clone(),
                a.cost_per_night.normalize().to_string(),
                percent_1dp(a.claims_unsupported, a.claims_total),
                percent_1dp(a.compliance_failures, a.schema_ok_nights),
            ]
        })
        .collect();
    to_csv(&FRONTIER_HEADER, body)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PriceRow {
    model: String,
    input_per_token: Decimal,
    output_per_token: Decimal,
}

/// `model,input_per_token,output_per_token`, USD per token.
pub fn load_prices(path: &Path) -> Result<PriceTable, IoError> {
    let fail = |message: String| IoError::Csv { path: path.to_path_buf(), message };
    let mut reader = csv::Reader::from_path(path).map_err(|e| fail(e.to_string()))?;
    let mut table = PriceTable::default();
    for row in reader.deserialize::<PriceRow>() {
        let row = row.map_err(|e| fail(e.to_string()))?;
        let price = ModelPrice { input_per_token: row.input_per_token, output_per_token: row.output_per_token };
        table.insert(&row.model, price).map_err(|e| fail(e.to_string()))?;
    }
    Ok(table)
}
