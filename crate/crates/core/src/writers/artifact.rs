//! Typed artifacts for the layer-replacement conditions.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::analysis::{ReferenceReport, ReportLine};
use crate::evaluator::{is_supported, NumericClaim};
use crate::metric::{MetricId, Tag};
use crate::model::{
    AllowedNumber, AttributionSet, ComparisonFact, LayerId, NightKey, RankingDecision, TagEvidence, TextField,
    WriterPacket,
};
use crate::num;
use crate::pipeline::{AnalysisConfig, NightContext};
use crate::rng::Stream;

/// One comparison as an artifact states it; direction and display are derived.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonRow {
    pub metric: MetricId,
    pub current: Decimal,
    pub baseline_mean: Decimal,
    pub pct_delta: i64,
}

impl ComparisonRow {
    pub fn to_fact(&self) -> ComparisonFact {
        ComparisonFact::new(self.metric, self.current, self.baseline_mean, self.pct_delta)
    }

    fn of(fact: &ComparisonFact) -> ComparisonRow {
        ComparisonRow {
            metric: fact.metric,
            current: fact.current,
            baseline_mean: fact.baseline_mean,
            pct_delta: fact.pct_delta,
        }
    }
}

/// The output of one analytical layer, as produced by a model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "layer", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerArtifact {
    ReferenceReport { lines: Vec<ReportLine> },
    Comparison { comparisons: Vec<ComparisonRow> },
    Ranker { selected: MetricId },
    Attribution { allowed: Vec<TagEvidence> },
    Handoff { comparison: ComparisonRow, allowed_tags: Vec<TagEvidence> },
}

impl LayerArtifact {
    pub fn layer(&self) -> LayerId {
        match self {
            LayerArtifact::ReferenceReport { .. } => LayerId::ReferenceReport,
            LayerArtifact::Comparison { .. } => LayerId::Comparison,
            LayerArtifact::Ranker { .. } => LayerId::Ranker,
            LayerArtifact::Attribution { .. } => LayerId::Attribution,
            LayerArtifact::Handoff { .. } => LayerId::Handoff,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("artifact serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ArtifactError {
    #[error("artifact parse failure: {0}")]
    Parse(String),
    #[error("artifact rejected downstream: {0}")]
    Rejected(String),
}

/// What the offline backends need to answer an artifact request.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactHint {
    pub night: NightKey,
    pub reference: LayerArtifact,
    pub eligible: BTreeSet<MetricId>,
    pub threshold: Decimal,
    pub allowed_numbers: BTreeSet<AllowedNumber>,
}

impl ArtifactHint {
    pub fn new(layer: LayerId, ctx: &NightContext) -> ArtifactHint {
        ArtifactHint {
            night: ctx.record.key(),
            reference: reference_artifact(layer, ctx),
            eligible: ctx.ranking.eligible.clone(),
            threshold: ctx.attribution.threshold,
            allowed_numbers: ctx.bank.allowed_numbers.clone(),
        }
    }
}

/// The deterministic layer's output in artifact form.
pub fn reference_artifact(layer: LayerId, ctx: &NightContext) -> LayerArtifact {
    match layer {
        LayerId::ReferenceReport => LayerArtifact::ReferenceReport { lines: ctx.report.lines.clone() },
        LayerId::Comparison => {
            LayerArtifact::Comparison { comparisons: ctx.comparisons.iter().map(ComparisonRow::of).collect() }
        }
        LayerId::Ranker => LayerArtifact::Ranker { selected: ctx.ranking.selected },
        LayerId::Attribution => LayerArtifact::Attribution { allowed: ctx.attribution.allowed.clone() },
        LayerId::Handoff => LayerArtifact::Handoff {
            comparison: ComparisonRow::of(&ctx.packet.comparison),
            allowed_tags: ctx.packet.allowed_tags.clone(),
        },
    }
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("context serializes")
}

/// Prompt asking for one layer's artifact, given only that layer's upstream inputs.
pub fn artifact_prompt(layer: LayerId, ctx: &NightContext, cfg: &AnalysisConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "You replace the `{}` step of a sleep insight pipeline.", layer.as_str());
    let _ = writeln!(out, "Reply with exactly one JSON object and nothing else.");
    let _ = writeln!(out, "night: {} {}", ctx.record.user_id, ctx.record.date);
    match layer {
        LayerId::ReferenceReport => {
            let _ = writeln!(out, "Format one line per metric present in the record, in catalog order.");
            let _ = writeln!(out, "record: {}", json(&ctx.record.values));
            let _ = writeln!(out, "comparisons: {}", json(&rows(&ctx.comparisons)));
            let _ = writeln!(
                out,
                "shape: {{\"layer\":\"reference_report\",\"lines\":[{{\"metric\":id,\"value\":\"decimal\",\"baseline\":\"decimal\"|null,\"pct_delta\":integer|null}}]}}"
            );
        }
        LayerId::Comparison => {
            let _ = writeln!(
                out,
                "For each metric with a baseline, compute pct_delta = round_half_away_from_zero(100 * (current - baseline_mean) / baseline_mean)."
            );
            let _ = writeln!(out, "record: {}", json(&ctx.record.values));
            let baselines: BTreeMap<MetricId, (Option<Decimal>, u32)> =
                ctx.baselines.iter().map(|(&m, b)| (m, (b.mean, b.count))).collect();
            let _ = writeln!(out, "baselines (mean, nights): {}", json(&baselines));
            let _ = writeln!(
                out,
                "shape: {{\"layer\":\"comparison\",\"comparisons\":[{{\"metric\":id,\"current\":\"decimal\",\"baseline_mean\":\"decimal\",\"pct_delta\":integer}}]}}"
            );
        }
        LayerId::Ranker => {
            let _ = writeln!(out, "{}", cfg.rule_text());
            let _ = writeln!(out, "comparisons: {}", json(&rows(&ctx.comparisons)));
            let counts: BTreeMap<MetricId, u32> = ctx.baselines.iter().map(|(&m, b)| (m, b.count)).collect();
            let _ = writeln!(out, "baseline nights: {}", json(&counts));
            let _ = writeln!(out, "shape: {{\"layer\":\"ranker\",\"selected\":id}}");
        }
        LayerId::Attribution => {
            let _ = writeln!(out, "{}", cfg.attribution_text());
            let _ = writeln!(out, "events: {}", json(&ctx.record.events));
            let _ = writeln!(
                out,
                "shape: {{\"layer\":\"attribution\",\"allowed\":[{{\"tag\":name,\"evidence\":\"decimal\"}}]}}"
            );
        }
        LayerId::Handoff => {
            let _ = writeln!(out, "Select the facts for the writer. Do not add tags or recalculate numbers.");
            let _ = writeln!(out, "selected_metric: {}", ctx.ranking.selected);
            let _ = writeln!(out, "comparisons: {}", json(&rows(&ctx.comparisons)));
            let _ = writeln!(out, "allowed_tags: {}", json(&ctx.attribution.allowed));
            let _ = writeln!(
                out,
                "shape: {{\"layer\":\"handoff\",\"comparison\":{{\"metric\":id,\"current\":\"decimal\",\"baseline_mean\":\"decimal\",\"pct_delta\":integer}},\"allowed_tags\":[{{\"tag\":name,\"evidence\":\"decimal\"}}]}}"
            );
        }
    }
    out
}

fn rows(comparisons: &[ComparisonFact]) -> Vec<ComparisonRow> {
    comparisons.iter().map(ComparisonRow::of).collect()
}

/// Strict parse of a layer artifact.
pub fn parse_artifact(raw: &str, layer: LayerId) -> Result<LayerArtifact, ArtifactError> {
    let artifact: LayerArtifact = serde_json::from_str(raw).map_err(|e| ArtifactError::Parse(e.to_string()))?;
    if artifact.layer() != layer {
        return Err(ArtifactError::Parse(format!(
            "expected a {} artifact, got {}",
            layer.as_str(),
            artifact.layer().as_str()
        )));
    }
    Ok(artifact)
}

/// Replays the layers downstream of the artifact and returns the packet the
/// writer receives. Upstream layers keep their reference outputs.
pub fn apply_artifact(
    artifact: &LayerArtifact,
    ctx: &NightContext,
    cfg: &AnalysisConfig,
) -> Result<WriterPacket, ArtifactError> {
    let reject = |e: String| ArtifactError::Rejected(e);
    match artifact {
        LayerArtifact::ReferenceReport { lines } => {
            let night = ctx.record.key();
            let text = ReferenceReport::render_text(&night, lines);
            let report = ReferenceReport { night, lines: lines.clone(), text };
            ctx.downstream(cfg, &report, &ctx.comparisons, &ctx.ranking, &ctx.attribution).map_err(reject)
        }
        LayerArtifact::Comparison { comparisons } => {
            let facts: Vec<ComparisonFact> = comparisons.iter().map(ComparisonRow::to_fact).collect();
            let ranking =
                crate::analysis::rank(&facts, &ctx.baselines, &cfg.rule).map_err(|e| reject(e.to_string()))?;
            ctx.downstream(cfg, &ctx.report, &facts, &ranking, &ctx.attribution).map_err(reject)
        }
        LayerArtifact::Ranker { selected } => {
            let ranking = RankingDecision { selected: *selected, ..ctx.ranking.clone() };
            ctx.downstream(cfg, &ctx.report, &ctx.comparisons, &ranking, &ctx.attribution).map_err(reject)
        }
        LayerArtifact::Attribution { allowed } => {
            let attribution = AttributionSet { allowed: allowed.clone(), threshold: ctx.attribution.threshold };
            ctx.downstream(cfg, &ctx.report, &ctx.comparisons, &ctx.ranking, &attribution).map_err(reject)
        }
        LayerArtifact::Handoff { comparison, allowed_tags } => {
            if !ctx.record.values.contains_key(&comparison.metric) {
                return Err(reject(format!("{} is not in the record", comparison.metric)));
            }
            let fact = comparison.to_fact();
            let metric = fact.metric;
            Ok(WriterPacket {
                schema_id: ctx.packet.schema_id.clone(),
                night: ctx.packet.night.clone(),
                selected: metric,
                comparison_display: fact.display.clone(),
                report_line: ctx.report.line_for(metric).map(ReportLine::render).unwrap_or_default(),
                comparison: fact,
                allowed_numbers: ctx.packet.allowed_numbers.clone(),
                allowed_tags: allowed_tags.clone(),
                chart: ctx.chart_for(metric, cfg),
                style_constraints: ctx.packet.style_constraints,
            })
        }
    }
}

/// Smallest upward move of `value` (at the metric's precision) that no allowed
/// number supports when written with the metric's unit.
fn unsupported_value(metric: MetricId, value: Decimal, allowed: &BTreeSet<AllowedNumber>) -> Decimal {
    let p = metric.precision();
    let mut claim = NumericClaim {
        value: num::round_to(value, p),
        precision: p,
        unit_class: metric.unit_class(),
        span: (0, 0),
        field: TextField::CoreInsight,
    };
    let step = Decimal::new(1, p);
    while is_supported(&claim, allowed) {
        claim.value += step;
    }
    claim.value
}

fn scaled(value: Decimal, k: i64) -> Decimal {
    value * Decimal::from(100 + k) / Decimal::from(100)
}

fn extra_tag(
    allowed: &[TagEvidence],
    vocabulary: &[Tag],
    evidence: Decimal,
    stream: &mut Stream,
) -> Option<TagEvidence> {
    let outside: Vec<&Tag> = vocabulary.iter().filter(|t| !allowed.iter().any(|a| &a.tag == *t)).collect();
    if outside.is_empty() {
        return None;
    }
    let tag = outside[stream.below(outside.len() as u64) as usize].clone();
    Some(TagEvidence { tag, evidence })
}

/// A plausible but wrong artifact for the layer, or `None` when the layer
/// leaves nothing to corrupt (a single eligible metric, every tag allowed).
pub fn corrupt_artifact(hint: &ArtifactHint, vocabulary: &[Tag], stream: &mut Stream) -> Option<LayerArtifact> {
    match &hint.reference {
        LayerArtifact::ReferenceReport { lines } => {
            if lines.is_empty() {
                return None;
            }
            let mut lines = lines.clone();
            let i = stream.below(lines.len() as u64) as usize;
            let k = stream.range_i64(8, 25);
            let line = &mut lines[i];
            line.value = num::round_to(scaled(line.value, k), line.metric.precision());
            Some(LayerArtifact::ReferenceReport { lines })
        }
        LayerArtifact::Comparison { comparisons } => {
            if comparisons.is_empty() {
                return None;
            }
            let k = stream.range_i64(8, 25);
            let comparisons = comparisons
                .iter()
                .map(|c| ComparisonRow {
                    baseline_mean: unsupported_value(c.metric, scaled(c.baseline_mean, k), &hint.allowed_numbers),
                    ..c.clone()
                })
                .collect();
            Some(LayerArtifact::Comparison { comparisons })
        }
        LayerArtifact::Ranker { selected } => {
            let others: Vec<MetricId> = hint.eligible.iter().copied().filter(|m| m != selected).collect();
            if others.is_empty() {
                return None;
            }
            Some(LayerArtifact::Ranker { selected: others[stream.below(others.len() as u64) as usize] })
        }
        LayerArtifact::Attribution { allowed } => {
            let extra = extra_tag(allowed, vocabulary, hint.threshold, stream)?;
            let mut allowed = allowed.clone();
            allowed.push(extra);
            Some(LayerArtifact::Attribution { allowed })
        }
        LayerArtifact::Handoff { comparison, allowed_tags } => {
            let k = stream.range_i64(8, 25);
            let current = unsupported_value(comparison.metric, scaled(comparison.current, k), &hint.allowed_numbers);
            let mut tags = allowed_tags.clone();
            if let Some(extra) = extra_tag(allowed_tags, vocabulary, hint.threshold, stream) {
                tags.push(extra);
            }
            Some(LayerArtifact::Handoff {
                comparison: ComparisonRow { current, ..comparison.clone() },
                allowed_tags: tags,
            })
        }
    }
}
