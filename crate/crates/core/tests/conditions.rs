mod common;

use tfts_core::cohort::CohortSpec;
use tfts_core::evaluator::{aggregate, score_night, ConditionAggregate, NightScore, NightUsage};
use tfts_core::harness::NightRunner;
use tfts_core::model::{CallKind, ConditionId, TraceRecord};
use tfts_core::pipeline::{AnalysisConfig, NightContext};
use tfts_core::prompts::demonstrations;
use tfts_core::writers::{FaultConfig, FaultKind, FaultyBackend, TemplateBackend, WriterBackend};

use common::*;

fn run(backend: &dyn WriterBackend, condition: ConditionId, nights: &[NightContext]) -> Vec<TraceRecord> {
    let cfg = AnalysisConfig::default();
    let demos = demonstrations();
    let runner = NightRunner { backend, cfg: &cfg, demos: &demos, prices: None };
    nights.iter().map(|ctx| runner.run_night(condition, ctx).unwrap()).collect()
}

fn scores(traces: &[TraceRecord], nights: &[NightContext]) -> Vec<NightScore> {
    traces.iter().zip(nights).map(|(t, n)| score_night(t, &n.reference_facts())).collect()
}

fn agg(traces: &[TraceRecord], nights: &[NightContext]) -> ConditionAggregate {
    let usage: Vec<NightUsage> =
        traces.iter().map(|t| NightUsage { cost_usd: Default::default(), latency_ms: t.latency_ms }).collect();
    aggregate(&scores(traces, nights), &usage).unwrap()
}

fn assert_clean(a: &ConditionAggregate) {
    assert_eq!((a.schema_failures, a.claims_unsupported, a.sel_failures, a.attr_failures), (0, 0, 0, 0), "{a:?}");
}

#[test]
fn template_oracle_over_default_cohort() {
    let nights = cohort_nights(&CohortSpec::default());
    assert!(nights.len() >= 270, "{} scoreable nights", nights.len());
    for condition in [ConditionId::Tfts, ConditionId::StructuredZeroShot, ConditionId::StructuredFewShot] {
        let traces = run(&TemplateBackend, condition, &nights);
        assert!(traces.iter().all(|t| t.calls.len() == 1));
        let a = agg(&traces, &nights);
        assert_clean(&a);
        assert!(a.claims_total > 0);
    }
}

#[test]
fn cold_start_nights_are_skipped() {
    let spec = CohortSpec { warmup_nights: 0, n_users: 2, ..CohortSpec::default() };
    let nights = cohort_nights(&spec);
    // the first five nights of each user lack a five-night baseline
    assert_eq!(nights.len(), 2 * (14 - 5));
}

#[test]
fn faithful_artifacts_reproduce_the_oracle() {
    let nights = cohort_nights(&CohortSpec { n_users: 6, ..CohortSpec::default() });
    let oracle = run(&TemplateBackend, ConditionId::Tfts, &nights);
    for condition in ConditionId::ALL.into_iter().filter(|c| c.replaced_layer().is_some()) {
        let traces = run(&TemplateBackend, condition, &nights);
        for (t, o) in traces.iter().zip(&oracle) {
            assert_eq!(t.calls.len(), 2);
            assert_eq!(t.calls[0].kind, CallKind::Artifact);
            let artifact = t.artifact.as_ref().unwrap();
            assert!(artifact.applied, "{condition}: {:?}", artifact.error);
            assert_eq!(t.raw_output, o.raw_output, "{condition}");
            assert_eq!(t.packet, o.packet, "{condition}");
            assert_eq!(t.reference, o.reference);
        }
    }
}

fn faulty(config: FaultConfig) -> FaultyBackend {
    FaultyBackend::new(config).unwrap()
}

#[test]
fn zero_probability_faults_are_the_template() {
    let nights = cohort_nights(&CohortSpec { n_users: 3, ..CohortSpec::default() });
    let a = run(&TemplateBackend, ConditionId::Tfts, &nights);
    let b = run(&faulty(FaultConfig::none(3)), ConditionId::Tfts, &nights);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.raw_output, y.raw_output);
    }
}

#[test]
fn every_fired_fault_is_seen_by_its_metric_only() {
    let nights = cohort_nights(&CohortSpec { n_users: 5, ..CohortSpec::default() });
    let template = run(&TemplateBackend, ConditionId::Tfts, &nights);
    type Case = (FaultKind, fn(&mut FaultConfig));
    let cases: [Case; 4] = [
        (FaultKind::Numeric, |c| c.p_numeric = 1.0),
        (FaultKind::TagAdd, |c| c.p_tag_add = 1.0),
        (FaultKind::MetricSwap, |c| c.p_metric_swap = 1.0),
        (FaultKind::Schema, |c| c.p_schema = 1.0),
    ];
    for (kind, set) in cases {
        let mut config = FaultConfig::none(11);
        set(&mut config);
        let traces = run(&faulty(config), ConditionId::Tfts, &nights);
        for ((t, s), o) in traces.iter().zip(scores(&traces, &nights)).zip(&template) {
            assert!(t.faults.as_ref().unwrap().has(kind));
            match kind {
                FaultKind::Numeric => {
                    assert!(s.schema_ok && s.claims_unsupported == 1, "{:?}", s.unsupported);
                    assert_eq!((s.sel_ok, s.attr_ok), (Some(true), Some(true)));
                    let changed = t.raw_output.lines().zip(o.raw_output.lines()).filter(|(a, b)| a != b).count();
                    assert_eq!(changed, 1);
                }
                FaultKind::TagAdd => {
                    assert!(s.schema_ok && s.claims_unsupported == 0);
                    assert_eq!((s.sel_ok, s.attr_ok), (Some(true), Some(false)));
                }
                FaultKind::MetricSwap => {
                    assert!(s.schema_ok && s.claims_unsupported == 0);
                    assert_eq!((s.sel_ok, s.attr_ok), (Some(false), Some(true)));
                }
                FaultKind::Schema => assert!(!s.schema_ok),
            }
        }
    }
}

#[test]
fn corrupted_layers_fail_in_different_ways() {
    let nights = cohort_nights(&CohortSpec::default());
    let config = FaultConfig { p_artifact: 0.3, ..FaultConfig::none(5) };
    let backend = faulty(config);
    let oracle = agg(&run(&TemplateBackend, ConditionId::Tfts, &nights), &nights);
    let of = |c| agg(&run(&backend, c, &nights), &nights);

    let cmp = of(ConditionId::ReplaceComparison);
    assert!(cmp.num_err > oracle.num_err && cmp.sel_failures == 0, "{cmp:?}");
    let rank = of(ConditionId::ReplaceRanker);
    assert!(rank.sel_err > 0.0 && rank.claims_unsupported == 0, "{rank:?}");
    let attr = of(ConditionId::ReplaceAttribution);
    assert!(attr.attr_err > 0.0 && attr.sel_failures == 0 && attr.claims_unsupported == 0, "{attr:?}");
    let handoff = of(ConditionId::ReplaceHandoff);
    assert!(handoff.num_err > 0.0 && handoff.attr_err > 0.0, "{handoff:?}");
}
