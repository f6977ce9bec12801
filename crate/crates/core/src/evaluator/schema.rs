//! Strict parsing of writer output against a versioned insight schema.
//!
//! Objects are checked in a fixed order (unknown keys first, then declared
//! fields in schema order) so the reported violation is always the same one.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use chrono::NaiveDate;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::metric::{MetricId, Tag};
use crate::model::{AnalysisCard, ChartPoint, Headline, InsightOutput, InsightSchema, OutputTag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaErrorKind {
    Parse,
    MissingField,
    WrongType,
    BoundViolation,
    UnknownField,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaError {
    pub kind: SchemaErrorKind,
    pub detail: String,
}

impl SchemaError {
    fn new(kind: SchemaErrorKind, detail: impl Into<String>) -> Self {
        SchemaError { kind, detail: detail.into() }
    }
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.detail)
    }
}

type Checked<T> = Result<T, SchemaError>;

/// Parses `raw` as an insight of schema `schema_id`, reporting the first violation.
pub fn parse_output(raw: &str, schema_id: &str) -> Checked<InsightOutput> {
    let schema = InsightSchema::by_id(schema_id)
        .ok_or_else(|| SchemaError::new(SchemaErrorKind::Parse, format!("unknown schema {schema_id}")))?;
    let root: Value = serde_json::from_str(raw).map_err(|e| SchemaError::new(SchemaErrorKind::Parse, e.to_string()))?;
    let root = object(&root, "$", &["headline", "analysis_card"])?;
    let bounds = schema.bounds;

    let headline = object(field(root, "$", "headline")?, "headline", &["title", "core_insight", "how_to_improve"])?;
    let headline = Headline {
        title: text(headline, "headline", "title", Some(bounds.title_max))?,
        core_insight: text(headline, "headline", "core_insight", Some(bounds.core_insight_max))?,
        how_to_improve: text(headline, "headline", "how_to_improve", Some(bounds.how_to_improve_max))?,
    };

    let card = object(
        field(root, "$", "analysis_card")?,
        "analysis_card",
        &["metric_id", "finding_statement", "tags", "chart"],
    )?;
    let metric_raw = string(field(card, "analysis_card", "metric_id")?, "analysis_card.metric_id")?;
    let metric_id: MetricId = serde_json::from_value(Value::String(metric_raw.to_owned())).map_err(|_| {
        SchemaError::new(
            SchemaErrorKind::BoundViolation,
            format!("analysis_card.metric_id: {metric_raw} is not a catalog metric"),
        )
    })?;
    let finding_statement = text(card, "analysis_card", "finding_statement", None)?;
    let tags = array(field(card, "analysis_card", "tags")?, "analysis_card.tags")?
        .iter()
        .enumerate()
        .map(|(i, v)| output_tag(v, &format!("analysis_card.tags[{i}]")))
        .collect::<Checked<Vec<_>>>()?;
    let chart = array(field(card, "analysis_card", "chart")?, "analysis_card.chart")?
        .iter()
        .enumerate()
        .map(|(i, v)| chart_point(v, &format!("analysis_card.chart[{i}]")))
        .collect::<Checked<Vec<_>>>()?;

    Ok(InsightOutput { headline, analysis_card: AnalysisCard { metric_id, finding_statement, tags, chart } })
}

fn object<'a>(value: &'a Value, path: &str, allowed: &[&str]) -> Checked<&'a Map<String, Value>> {
    let map = value
        .as_object()
        .ok_or_else(|| SchemaError::new(SchemaErrorKind::WrongType, format!("{path}: expected object")))?;
    if let Some(key) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(SchemaError::new(SchemaErrorKind::UnknownField, format!("{path}.{key}")));
    }
    Ok(map)
}

fn field<'a>(map: &'a Map<String, Value>, path: &str, name: &str) -> Checked<&'a Value> {
    map.get(name).ok_or_else(|| SchemaError::new(SchemaErrorKind::MissingField, format!("{path}.{name}")))
}

fn string<'a>(value: &'a Value, path: &str) -> Checked<&'a str> {
    value.as_str().ok_or_else(|| SchemaError::new(SchemaErrorKind::WrongType, format!("{path}: expected string")))
}

fn array<'a>(value: &'a Value, path: &str) -> Checked<&'a Vec<Value>> {
    value.as_array().ok_or_else(|| SchemaError::new(SchemaErrorKind::WrongType, format!("{path}: expected array")))
}

fn text(map: &Map<String, Value>, path: &str, name: &str, max_chars: Option<usize>) -> Checked<String> {
    let full = format!("{path}.{name}");
    let s = string(field(map, path, name)?, &full)?;
    if s.trim().is_empty() {
        return Err(SchemaError::new(SchemaErrorKind::BoundViolation, format!("{full}: empty")));
    }
    if let Some(max) = max_chars {
        let n = s.chars().count();
        if n > max {
            return Err(SchemaError::new(
                SchemaErrorKind::BoundViolation,
                format!("{full}: {n} characters exceeds {max}"),
            ));
        }
    }
    Ok(s.to_owned())
}

fn decimal(value: &Value, path: &str) -> Checked<Decimal> {
    let s = string(value, path)?;
    Decimal::from_str(s)
        .map_err(|_| SchemaError::new(SchemaErrorKind::WrongType, format!("{path}: {s} is not a decimal string")))
}

fn output_tag(value: &Value, path: &str) -> Checked<OutputTag> {
    let map = object(value, path, &["name", "evidence"])?;
    let name = text(map, path, "name", None)?;
    let evidence = match map.get("evidence") {
        None | Some(Value::Null) => None,
        Some(v) => Some(decimal(v, &format!("{path}.evidence"))?),
    };
    Ok(OutputTag { name: Tag(name), evidence })
}

fn chart_point(value: &Value, path: &str) -> Checked<ChartPoint> {
    let map = object(value, path, &["date", "value"])?;
    let date_path = format!("{path}.date");
    let date_raw = string(field(map, path, "date")?, &date_path)?;
    let date = NaiveDate::parse_from_str(date_raw, "%Y-%m-%d").map_err(|_| {
        SchemaError::new(SchemaErrorKind::WrongType, format!("{date_path}: {date_raw} is not YYYY-MM-DD"))
    })?;
    let value = decimal(field(map, path, "value")?, &format!("{path}.value"))?;
    Ok(ChartPoint { date, value })
}
