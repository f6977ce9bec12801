//! Injected-versus-measured fault rates.
//!
//! Each grid point turns on a single fault class at probability `p`, runs the
//! TFTS condition with the fault backend and measures per-night incidence of
//! every evaluator failure over all nights.

use tfts_core::evaluator::{aggregate, score_night, ConditionAggregate, NightScore, NightUsage};
use tfts_core::model::{ConditionId, TraceRecord};
use tfts_core::pipeline::{AnalysisConfig, NightContext};
use tfts_core::writers::{FaultConfig, FaultKind, FaultyBackend};

use crate::runner::{run_nights, RunError};

pub const FAULT_KINDS: [FaultKind; 4] =
    [FaultKind::Numeric, FaultKind::TagAdd, FaultKind::MetricSwap, FaultKind::Schema];

pub fn kind_name(kind: FaultKind) -> &'static str {
    match kind {
        FaultKind::Numeric => "numeric",
        FaultKind::TagAdd => "tag_add",
        FaultKind::MetricSwap => "metric_swap",
        FaultKind::Schema => "schema",
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub fault: FaultKind,
    pub p: f64,
    pub n: u32,
    /// Nights on which the backend reports the fault fired.
    pub fired: u32,
    /// Nights failing each check, in `FAULT_KINDS` order.
    pub failing: [u32; 4],
}

impl SweepRow {
    pub fn measured(&self, kind: FaultKind) -> f64 {
        let i = FAULT_KINDS.iter().position(|k| *k == kind).expect("known kind");
        f64::from(self.failing[i]) / f64::from(self.n)
    }

    pub fn std_err(&self) -> f64 {
        (self.p * (1.0 - self.p) / f64::from(self.n)).sqrt()
    }

    /// Matching rate within three binomial standard errors of `p`, every other rate exactly zero.
    pub fn calibrated(&self) -> bool {
        let matching = (self.measured(self.fault) - self.p).abs() <= 3.0 * self.std_err() + 1e-12;
        let others_zero = FAULT_KINDS.iter().zip(self.failing).all(|(k, count)| *k == self.fault || count == 0);
        matching && others_zero
    }
}

fn failing_counts(agg: &ConditionAggregate) -> [u32; 4] {
    [agg.nights_with_unsupported, agg.attr_failures, agg.sel_failures, agg.schema_failures]
}

fn config_for(kind: FaultKind, p: f64, seed: u64) -> FaultConfig {
    let mut c = FaultConfig::none(seed);
    match kind {
        FaultKind::Numeric => c.p_numeric = p,
        FaultKind::TagAdd => c.p_tag_add = p,
        FaultKind::MetricSwap => c.p_metric_swap = p,
        FaultKind::Schema => c.p_schema = p,
    }
    c
}

fn measure(kind: FaultKind, p: f64, traces: &[TraceRecord]) -> SweepRow {
    let scores: Vec<NightScore> = traces.iter().map(|t| score_night(t, &t.reference)).collect();
    let usage: Vec<NightUsage> =
        traces.iter().map(|t| NightUsage { cost_usd: Default::default(), latency_ms: t.latency_ms }).collect();
    let agg = aggregate(&scores, &usage).expect("non-empty sweep");
    let fired = traces.iter().filter(|t| t.faults.as_ref().is_some_and(|f| f.has(kind))).count() as u32;
    SweepRow { fault: kind, p, n: agg.n, fired, failing: failing_counts(&agg) }
}

/// One row per (fault class, probability), in the order given.
pub fn fault_sweep(
    nights: &[NightContext],
    grid: &[(FaultKind, Vec<f64>)],
    seed: u64,
    cfg: &AnalysisConfig,
    threads: usize,
) -> Result<Vec<SweepRow>, RunError> {
    if nights.is_empty() {
        return Err(RunError::Config("no scoreable nights to sweep".into()));
    }
    let mut rows = Vec::new();
    for (kind, ps) in grid {
        for &p in ps {
            let backend = FaultyBackend::new(config_for(*kind, p, seed))?;
            let traces = run_nights(nights, ConditionId::Tfts, &backend, cfg, &[], None, threads)?;
            rows.push(measure(*kind, p, &traces));
        }
    }
    Ok(rows)
}

pub const SWEEP_HEADER: [&str; 11] = [
    "fault",
    "p_injected",
    "n",
    "fired",
    "measured_numeric",
    "measured_tag_add",
    "measured_metric_swap",
    "measured_schema",
    "measured_matching",
    "std_err",
    "within_3se",
];

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_HEADER).expect("in-memory write");
    for r in rows {
        let mut record = vec![kind_name(r.fault).to_string(), r.p.to_string(), r.n.to_string(), r.fired.to_string()];
        record.extend(FAULT_KINDS.iter().map(|k| format!("{:.4}", r.measured(*k))));
        record.push(format!("{:.4}", r.measured(r.fault)));
        record.push(format!("{:.4}", r.std_err()));
        record.push(r.calibrated().to_string());
        w.write_record(&record).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}
