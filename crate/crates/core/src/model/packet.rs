use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::metric::MetricId;
use crate::model::facts::{AllowedNumber, ComparisonFact, TagEvidence};
use crate::model::output::{ChartPoint, InsightSchema, StyleConstraints};
use crate::model::record::NightKey;
use crate::num;

/// The bounded handoff given to the writer. It enumerates everything the writer
/// may say about the night.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WriterPacket {
    pub schema_id: String,
    pub night: NightKey,
    pub selected: MetricId,
    pub comparison: ComparisonFact,
    pub comparison_display: String,
    pub report_line: String,
    pub allowed_numbers: BTreeSet<AllowedNumber>,
    pub allowed_tags: Vec<TagEvidence>,
    pub chart: Vec<ChartPoint>,
    pub style_constraints: StyleConstraints,
}

/// Printed in place of the tag list when the evidence gate admitted nothing.
pub const NO_TAGS_MARKER: &str = "none (no tags permitted)";

impl WriterPacket {
    /// Deterministic prompt text for the bounded writer call.
    pub fn render_prompt(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "You write one sleep insight for a user as a single JSON object.");
        let _ = writeln!(out, "Use only the facts in this packet. Do not add tags. Do not recalculate numbers.");
        let _ = writeln!(out, "schema_id: {}", self.schema_id);
        let _ = writeln!(out, "night: {}", self.night.date);
        let _ = writeln!(out, "selected_metric: {}", self.selected);
        let _ = writeln!(out, "comparison: {}", self.comparison_display);
        if !self.report_line.is_empty() {
            let _ = writeln!(out, "report: {}", self.report_line);
        }
        let numbers: Vec<String> = self
            .allowed_numbers
            .iter()
            .map(|n| match n.unit {
                crate::metric::UnitClass::HoursMinutes => num::hours_minutes(n.value),
                unit => format!("{}{}", n.value, unit.suffix()),
            })
            .collect();
        let _ = writeln!(out, "allowed_numbers: {}", numbers.join(", "));
        if self.allowed_tags.is_empty() {
            let _ = writeln!(out, "allowed_tags: {NO_TAGS_MARKER}");
        } else {
            let tags: Vec<String> = self.allowed_tags.iter().map(|t| format!("{} ({})", t.tag, t.evidence)).collect();
            let _ = writeln!(out, "allowed_tags: {}", tags.join(", "));
        }
        let chart: Vec<String> = self.chart.iter().map(|p| format!("{} {}", p.date, p.value)).collect();
        let _ = writeln!(out, "chart: {}", chart.join("; "));
        let c = &self.style_constraints;
        let _ = writeln!(
            out,
            "constraints: title <= {} chars; core_insight <= {} chars; how_to_improve <= {} chars",
            c.title_max, c.core_insight_max, c.how_to_improve_max
        );
        if let Some(schema) = InsightSchema::by_id(&self.schema_id) {
            let _ = writeln!(out, "output schema:\n{}", schema.describe());
        }
        out
    }
}
