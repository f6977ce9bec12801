mod common;

use std::collections::BTreeMap;

use chrono::{Days, NaiveDate};
use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;
use rust_decimal::Decimal;

use tfts_core::analysis::{attribute, compare, compute_baseline, rank, SelectionRule};
use tfts_core::cohort::{generate_cohort, CohortSpec};
use tfts_core::evaluator::{aggregate, extract_from_text, NightScore, NightUsage};
use tfts_core::metric::{MetricId, Tag, UnitClass};
use tfts_core::model::{
    BaselineStats, ComparisonFact, ConditionId, FactBank, LoggedEvent, NightKey, TextField, UserNightRecord,
};
use tfts_core::num;
use tfts_core::pipeline::AnalysisConfig;

use common::cohort_nights;

fn rational(d: Decimal) -> BigRational {
    BigRational::new(BigInt::from(d.mantissa()), BigInt::from(10).pow(d.scale()))
}

/// Round half away from zero, on exact rationals.
fn round_half_away(r: &BigRational) -> BigInt {
    let half = BigRational::new(1.into(), 2.into());
    if r >= &BigRational::from_integer(0.into()) {
        (r + half).floor().to_integer()
    } else {
        -((-r + half).floor().to_integer())
    }
}

fn decimal(mantissa: i64, scale: u32) -> Decimal {
    Decimal::new(mantissa, scale)
}

fn hrv_history(values: &[i64]) -> Vec<UserNightRecord> {
    let start = NaiveDate::from_ymd_opt(2026, 1, 1).unwrap();
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| UserNightRecord {
            user_id: "u01".into(),
            date: start + Days::new(i as u64),
            values: [(MetricId::HrvMs, decimal(v, 1))].into_iter().collect(),
            events: Vec::new(),
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn pct_delta_matches_rational_oracle(c in 0i64..2_000_000, m in 1i64..2_000_000, cs in 0u32..3, ms in 0u32..3) {
        let current = decimal(c, cs);
        let mean = decimal(m, ms);
        let exact = BigRational::from_integer(100.into()) * (rational(current) - rational(mean)) / rational(mean);
        let got = num::pct_delta(current, mean).unwrap();
        prop_assert_eq!(BigInt::from(got), round_half_away(&exact));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn baseline_matches_rational_oracle(values in prop::collection::vec(1i64..2000, 1..20)) {
        let history = hrv_history(&values);
        let stats = compute_baseline(&history, MetricId::HrvMs, 14);
        let window = &values[values.len().saturating_sub(14)..];
        let n = BigInt::from(window.len());
        let xs: Vec<BigRational> = window.iter().map(|&v| rational(decimal(v, 1))).collect();
        let mean: BigRational = xs.iter().cloned().fold(BigRational::from_integer(0.into()), |a, b| a + b)
            / BigRational::from_integer(n.clone());
        prop_assert_eq!(stats.count as usize, window.len());
        let ten = BigRational::from_integer(10.into());
        prop_assert_eq!(BigInt::from(stats.mean.unwrap().mantissa()), round_half_away(&(mean.clone() * ten.clone())));

        // std at three fractional digits: the integer r with (r - 1/2)^2 <= var * 10^6 < (r + 1/2)^2
        let var: BigRational = xs.iter().map(|x| (x - &mean) * (x - &mean)).fold(BigRational::from_integer(0.into()), |a, b| a + b)
            / BigRational::from_integer(n);
        let target = var * ten.pow(6);
        let std = stats.std.unwrap();
        prop_assert_eq!(std.scale(), 3);
        let r = BigRational::from_integer(BigInt::from(std.mantissa()));
        let half = BigRational::new(1.into(), 2.into());
        let lo = &r - &half;
        let hi = &r + &half;
        if r > BigRational::from_integer(0.into()) {
            prop_assert!(&lo * &lo <= target);
        }
        prop_assert!(target < &hi * &hi);
    }

    #[test]
    fn comparison_display_regenerates(c in 1i64..5000, m in 1i64..5000, metric in 0usize..9) {
        let metric = MetricId::ALL[metric];
        let p = metric.precision();
        let base = BaselineStats { metric, mean: Some(decimal(m, p)), std: None, count: 7 };
        let fact = compare(decimal(c, p), &base, metric).unwrap();
        prop_assert!(fact.is_consistent());
        let rebuilt = ComparisonFact::new(metric, fact.current, fact.baseline_mean, fact.pct_delta);
        prop_assert_eq!(&rebuilt, &fact);
        let round_trip: ComparisonFact = serde_json::from_str(&serde_json::to_string(&fact).unwrap()).unwrap();
        prop_assert_eq!(round_trip, fact);
    }

    #[test]
    fn ranking_ignores_weight_scale(deltas in prop::collection::vec(-60i64..60, 9), k in 1i64..50) {
        let comparisons: Vec<ComparisonFact> = MetricId::ALL
            .iter()
            .zip(&deltas)
            .map(|(&m, &d)| ComparisonFact::new(m, Decimal::from(100 + d), Decimal::ONE_HUNDRED, d))
            .collect();
        let baselines: BTreeMap<MetricId, BaselineStats> = MetricId::ALL
            .iter()
            .map(|&m| (m, BaselineStats { metric: m, mean: Some(Decimal::ONE_HUNDRED), std: None, count: 14 }))
            .collect();
        let rule = SelectionRule::default();
        let mut scaled = rule.clone();
        for w in scaled.priority_weights.values_mut() {
            *w *= Decimal::from(k);
        }
        let a = rank(&comparisons, &baselines, &rule).unwrap();
        let b = rank(&comparisons, &baselines, &scaled).unwrap();
        prop_assert_eq!(a.selected, b.selected);
    }

    #[test]
    fn raising_the_threshold_never_admits_more(
        strengths in prop::collection::vec((0usize..6, 0i64..=10), 0..8),
        t1 in 0i64..=10,
        t2 in 0i64..=10,
    ) {
        let vocab = ["Alcohol", "Stress", "Sick", "Fever", "Caffeine", "LateMeal"];
        let events: Vec<LoggedEvent> = strengths
            .iter()
            .map(|&(t, s)| LoggedEvent { tag: Tag::new(vocab[t]), strength: decimal(s, 1), note: None })
            .collect();
        let candidates = tfts_core::metric::default_candidates();
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        let loose = attribute(&events, &candidates, decimal(lo, 1)).tag_names();
        let strict = attribute(&events, &candidates, decimal(hi, 1)).tag_names();
        prop_assert!(strict.is_subset(&loose));
        prop_assert!(loose.iter().all(|t| candidates.contains(t)));
    }

    #[test]
    fn extraction_recovers_written_numbers(int in 0u32..10_000, frac in prop::option::of(0u32..10), unit in 0usize..5) {
        let number = match frac {
            Some(f) => format!("{int}.{f}"),
            None => int.to_string(),
        };
        let (suffix, class) = [(" ms", UnitClass::Ms), (" bpm", UnitClass::Bpm), ("%", UnitClass::Percent), (" min", UnitClass::Minutes), ("", UnitClass::Unitless)][unit];
        let literal = format!("{number}{suffix}");
        let text = format!("Last night it was {literal}, noted.");
        let claims = extract_from_text(&text, TextField::CoreInsight);
        prop_assert_eq!(claims.len(), 1);
        let claim = &claims[0];
        prop_assert_eq!(&text[claim.span.0..claim.span.1], literal.as_str());
        prop_assert_eq!(claim.unit_class, class);
        prop_assert_eq!(claim.value, number.parse::<Decimal>().unwrap());
        prop_assert_eq!(claim.precision, u32::from(frac.is_some()));
    }

    #[test]
    fn compliance_error_sits_between_max_and_sum(verdicts in prop::collection::vec((any::<bool>(), any::<bool>(), any::<bool>()), 1..60)) {
        let date = NaiveDate::from_ymd_opt(2026, 2, 1).unwrap();
        let scores: Vec<NightScore> = verdicts
            .iter()
            .enumerate()
            .map(|(i, &(ok, sel, attr))| NightScore {
                condition: ConditionId::Tfts,
                model: "m".into(),
                night: NightKey { user_id: format!("u{i}"), date },
                schema_ok: ok,
                schema_error: None,
                claims_total: 0,
                claims_unsupported: 0,
                unsupported: Vec::new(),
                sel_ok: ok.then_some(sel),
                attr_ok: ok.then_some(attr),
            })
            .collect();
        let usage = vec![NightUsage { cost_usd: Decimal::ZERO, latency_ms: 0 }; scores.len()];
        let a = aggregate(&scores, &usage).unwrap();
        prop_assert!(a.compliance_failures <= a.sel_failures + a.attr_failures);
        prop_assert!(a.compliance_failures >= a.sel_failures.max(a.attr_failures));
        prop_assert!(a.compliance_err <= a.sel_err + a.attr_err + 1e-12);
    }
}

fn small_spec() -> impl Strategy<Value = CohortSpec> {
    (any::<u64>(), 1u32..5, 1u32..20, 0i64..=10).prop_map(|(seed, n_users, nights, rate)| CohortSpec {
        seed,
        n_users,
        nights_per_user: nights,
        event_rate: decimal(rate, 1),
        ..CohortSpec::default()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cohorts_stay_in_bounds(spec in small_spec()) {
        let cohort = generate_cohort(&spec).unwrap();
        prop_assert_eq!(cohort.len(), (spec.n_users * spec.nights_per_user) as usize);
        prop_assert_eq!(&cohort, &generate_cohort(&spec).unwrap());
        let vocab = AnalysisConfig::default().vocabulary;
        for r in &cohort {
            prop_assert!(r.validate(&vocab).is_ok(), "{:?}", r.validate(&vocab));
            let v = |m| r.value(m).unwrap();
            prop_assert!(v(MetricId::DeepMin) + v(MetricId::RemMin) + v(MetricId::LightMin) <= v(MetricId::DurationMin));
            prop_assert!(v(MetricId::SleepScore) <= Decimal::ONE_HUNDRED);
            prop_assert!(v(MetricId::SnorePct) <= Decimal::ONE_HUNDRED);
            for m in MetricId::ALL {
                prop_assert!(v(m) >= Decimal::ZERO);
                prop_assert_eq!(v(m).scale(), m.precision());
            }
            prop_assert!(r.events.len() <= 1);
        }
        if spec.event_rate.is_zero() {
            prop_assert!(cohort.iter().all(|r| r.events.is_empty()));
        }
    }

    #[test]
    fn alcohol_nights_have_lower_hrv(seed in any::<u64>()) {
        let spec = CohortSpec { seed, n_users: 4, nights_per_user: 30, event_rate: decimal(5, 1), ..CohortSpec::default() };
        let cohort = generate_cohort(&spec).unwrap();
        for user in 0..spec.n_users {
            let id = spec.user_id(user);
            let nights: Vec<&UserNightRecord> = cohort.iter().filter(|r| r.user_id == id).collect();
            let hrv = |r: &&UserNightRecord| r.value(MetricId::HrvMs).unwrap();
            let drinking = nights.iter().filter(|r| r.events.iter().any(|e| e.tag.as_str() == "Alcohol")).map(hrv).max();
            let quiet = nights.iter().filter(|r| r.events.is_empty()).map(hrv).min();
            if let (Some(d), Some(q)) = (drinking, quiet) {
                prop_assert!(d < q, "user {}: alcohol max {} vs quiet min {}", id, d, q);
            }
        }
    }

    #[test]
    fn packets_and_fact_banks_are_stable(seed in any::<u64>()) {
        let spec = CohortSpec { seed, n_users: 2, nights_per_user: 4, ..CohortSpec::default() };
        let a = cohort_nights(&spec);
        let b = cohort_nights(&spec);
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.packet.render_prompt(), y.packet.render_prompt());
            let json = serde_json::to_string(&x.bank).unwrap();
            let back: FactBank = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(&back, &x.bank);
            prop_assert_eq!(serde_json::to_string(&back).unwrap(), json);
            prop_assert!(x.comparisons.iter().all(|c| c.is_consistent()));
            prop_assert!(x.report.is_consistent());
        }
    }
}
