use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rust_decimal::Decimal;

use super::{offline_response, WriterBackend, WriterError, WriterHint, WriterRequest, WriterResponse};
use crate::metric::MetricId;
use crate::model::{AnalysisCard, Direction, Headline, InsightOutput, OutputTag, WriterPacket};
use crate::num;

/// Renders a value as it appears in prose: durations of an hour or more in
/// h/m form, everything else at catalog precision with its unit.
fn prose_value(metric: MetricId, value: Decimal) -> String {
    if metric.is_duration() {
        let minutes = num::round_to(value, 0);
        if minutes >= Decimal::from(60) {
            return num::hours_minutes(minutes);
        }
        return format!("{minutes} min");
    }
    metric.with_unit(&num::format_fixed(value, metric.precision()))
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn advice(metric: MetricId, direction: Direction) -> &'static str {
    match (metric, direction) {
        (_, Direction::Flat) => "Keep your current routine steady and check back after a few more nights.",
        (MetricId::HrvMs, Direction::Down) => {
            "A consistent bedtime and a calm wind-down routine can help your HRV recover."
        }
        (MetricId::HeartRateBpm, Direction::Up) => {
            "Give yourself a longer wind-down and avoid heavy exercise close to bedtime."
        }
        (MetricId::RespRateBrpm, Direction::Up) => {
            "Keep the bedroom cool and well ventilated, and rest if you feel unwell."
        }
        (MetricId::SnorePct, Direction::Up) => "Try sleeping on your side and keeping your nasal passages clear.",
        (MetricId::DurationMin | MetricId::DeepMin | MetricId::RemMin | MetricId::LightMin, Direction::Down) => {
            "Aim for an earlier, consistent bedtime so you get more time asleep."
        }
        (MetricId::SleepScore, Direction::Down) => "Protect a regular sleep window and limit screens before bed.",
        _ => "Keep doing what worked last night and stick to a regular sleep window.",
    }
}

fn tag_sentence(names: &[&str]) -> String {
    match names {
        [] => String::new(),
        [one] => format!(" Logged tag: {one}."),
        [rest @ .., last] => format!(" Logged tags: {} and {last}.", rest.join(", ")),
    }
}

/// Builds the oracle output for a packet.
pub fn template_output(packet: &WriterPacket) -> InsightOutput {
    let c = &packet.comparison;
    let metric = c.metric;
    let name = metric.prose_name();
    let current = prose_value(metric, c.current);
    let baseline = prose_value(metric, c.baseline_mean);
    let pct = c.pct_delta.unsigned_abs();
    let tag_names: Vec<&str> = packet.allowed_tags.iter().map(|t| t.tag.as_str()).collect();

    let (title, core, finding) = match c.direction {
        Direction::Down => (
            format!("{} down {pct}% from your baseline", capitalize(name)),
            format!("Your {name} dropped to {current}, down {pct}% from your baseline of {baseline}."),
            format!("{} down {pct}%", capitalize(name)),
        ),
        Direction::Up => (
            format!("{} up {pct}% from your baseline", capitalize(name)),
            format!("Your {name} rose to {current}, up {pct}% from your baseline of {baseline}."),
            format!("{} up {pct}%", capitalize(name)),
        ),
        Direction::Flat => (
            format!("{} steady against your baseline", capitalize(name)),
            format!("Your {name} held at {current}, matching your baseline of {baseline}."),
            format!("{} unchanged (0%)", capitalize(name)),
        ),
    };

    InsightOutput {
        headline: Headline {
            title,
            core_insight: core + &tag_sentence(&tag_names),
            how_to_improve: advice(metric, c.direction).to_string(),
        },
        analysis_card: AnalysisCard {
            metric_id: metric,
            finding_statement: finding,
            tags: packet
                .allowed_tags
                .iter()
                .map(|t| OutputTag { name: t.tag.clone(), evidence: Some(t.evidence) })
                .collect(),
            chart: packet.chart.clone(),
        },
    }
}

/// Deterministic writer that copies the packet's facts verbatim.
pub fn template_write(packet: &WriterPacket) -> String {
    template_output(packet).to_json()
}

/// Backend wrapper around [`template_write`]. Artifact requests are answered
/// with the faithful reference artifact.
#[derive(Clone, Debug, Default)]
pub struct TemplateBackend;

impl WriterBackend for TemplateBackend {
    fn model(&self) -> &str {
        "template"
    }

    fn write(&self, request: &WriterRequest) -> Result<WriterResponse, WriterError> {
        let raw = match &request.hint {
            Some(WriterHint::Packet(packet)) => template_write(packet),
            Some(WriterHint::Artifact(hint)) => hint.reference.to_json(),
            None => return Err(WriterError::BackendRefusal("template backend needs a structured hint".into())),
        };
        Ok(offline_response(request, raw))
    }
}
