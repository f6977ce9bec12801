//! Seeded synthetic cohorts.
//!
//! Each user gets a fixed profile drawn from stream `[USER_PROFILE, user_index]`.
//! Each night draws from stream `[NIGHT, user_index, day_number(date)]`, in this
//! order: event roll (`below(10000) < event_rate * 10000`), event tag index,
//! strength index, then one noise draw per metric in catalog order, each an
//! integer `k` in `[-1000, 1000]` applied as `value * (10000 + k) / 10000`.
//! Only integer arithmetic and exact decimals are involved, so any
//! implementation of the same streams reproduces a cohort byte for byte.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use chrono::{Days, NaiveDate};
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::metric::{MetricId, Tag};
use crate::model::{LoggedEvent, UserNightRecord};
use crate::num::{self, div_round_half_away};
use crate::rng::{day_number, purpose, Stream};

pub const DEFAULT_WARMUP_NIGHTS: u32 = 14;
const STRENGTHS: [i64; 3] = [3, 6, 9];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortSpec {
    pub seed: u64,
    pub n_users: u32,
    pub nights_per_user: u32,
    pub start_date: NaiveDate,
    pub event_rate: Decimal,
    /// Multiplicative shift applied to each listed metric on a night with that event.
    pub effect_profiles: BTreeMap<Tag, BTreeMap<MetricId, Decimal>>,
    /// Nights of history generated before `start_date` so that the first
    /// cohort nights already have baselines.
    #[serde(default = "default_warmup")]
    pub warmup_nights: u32,
}

fn default_warmup() -> u32 {
    DEFAULT_WARMUP_NIGHTS
}

fn d(mantissa: i64, scale: u32) -> Decimal {
    Decimal::new(mantissa, scale)
}

pub fn default_effect_profiles() -> BTreeMap<Tag, BTreeMap<MetricId, Decimal>> {
    use MetricId::*;
    let profile = |shifts: &[(MetricId, i64)]| shifts.iter().map(|&(m, f)| (m, d(f, 2))).collect();
    [
        ("Alcohol", profile(&[(HrvMs, 80), (HeartRateBpm, 108), (DeepMin, 85), (SleepScore, 92)])),
        ("Stress", profile(&[(HrvMs, 88), (HeartRateBpm, 105), (DurationMin, 93), (SleepScore, 94)])),
        ("Sick", profile(&[(RespRateBrpm, 110), (HeartRateBpm, 106), (SnorePct, 130), (SleepScore, 90)])),
        ("Fever", profile(&[(HeartRateBpm, 112), (RespRateBrpm, 112), (HrvMs, 85), (SleepScore, 88)])),
    ]
    .into_iter()
    .map(|(t, p)| (Tag::new(t), p))
    .collect()
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            seed: 7,
            n_users: 20,
            nights_per_user: 14,
            start_date: NaiveDate::from_ymd_opt(2026, 2, 10).expect("valid date"),
            event_rate: d(3, 1),
            effect_profiles: default_effect_profiles(),
            warmup_nights: DEFAULT_WARMUP_NIGHTS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("invalid cohort spec: {0}")]
pub struct InvalidSpec(pub String);

impl CohortSpec {
    pub fn validate(&self) -> Result<(), InvalidSpec> {
        if self.n_users < 1 {
            return Err(InvalidSpec("n_users must be at least 1".into()));
        }
        if self.nights_per_user < 1 {
            return Err(InvalidSpec("nights_per_user must be at least 1".into()));
        }
        if self.event_rate < Decimal::ZERO || self.event_rate > Decimal::ONE {
            return Err(InvalidSpec(format!("event_rate {} is outside [0, 1]", self.event_rate)));
        }
        if self.event_rate > Decimal::ZERO && self.effect_profiles.is_empty() {
            return Err(InvalidSpec("events need at least one effect profile".into()));
        }
        for (tag, profile) in &self.effect_profiles {
            if let Some((m, f)) = profile.iter().find(|(_, f)| **f <= Decimal::ZERO) {
                return Err(InvalidSpec(format!("{tag}: shift {f} for {m} is not positive")));
            }
        }
        let span = u64::from(self.warmup_nights) + u64::from(self.nights_per_user);
        if self.start_date.checked_sub_days(Days::new(u64::from(self.warmup_nights))).is_none()
            || self.start_date.checked_add_days(Days::new(span)).is_none()
        {
            return Err(InvalidSpec("dates out of range".into()));
        }
        Ok(())
    }

    pub fn user_id(&self, index: u32) -> String {
        let width = self.n_users.to_string().len().max(2);
        format!("u{:0width$}", index + 1)
    }
}

/// Per-user stable baselines, as scaled integers at catalog precision.
struct Profile {
    score: i64,
    duration: i64,
    deep_bp: i64,
    rem_bp: i64,
    awake_bp: i64,
    hrv: i64,
    heart_rate: i64,
    resp_rate: i64,
    snore: i64,
}

impl Profile {
    fn draw(seed: u64, user: u32) -> Profile {
        let mut s = Stream::new(seed, &[purpose::USER_PROFILE, u64::from(user)]);
        Profile {
            score: s.range_i64(65, 90),
            duration: s.range_i64(380, 500),
            deep_bp: s.range_i64(1400, 2200),
            rem_bp: s.range_i64(1800, 2500),
            awake_bp: s.range_i64(500, 1000),
            hrv: s.range_i64(250, 800),
            heart_rate: s.range_i64(480, 700),
            resp_rate: s.range_i64(120, 180),
            snore: s.range_i64(10, 150),
        }
    }
}

fn noisy(units: i64, k: i64) -> i64 {
    div_round_half_away(i128::from(units) * i128::from(10_000 + k), 10_000) as i64
}

fn shifted(metric: MetricId, units: i64, shift: Option<&Decimal>) -> Decimal {
    let p = metric.precision();
    let value = Decimal::new(units, p);
    match shift {
        Some(f) => num::round_to(value * f, p),
        None => value,
    }
}

fn night(spec: &CohortSpec, user: u32, profile: &Profile, date: NaiveDate) -> UserNightRecord {
    use MetricId::*;
    let mut s = Stream::new(spec.seed, &[purpose::NIGHT, u64::from(user), day_number(date)]);
    let rate_bp = num::round_to(spec.event_rate * Decimal::from(10_000), 0).mantissa() as u64;
    let has_event = s.below(10_000) < rate_bp;
    let tag_index = s.below(spec.effect_profiles.len().max(1) as u64) as usize;
    let strength = STRENGTHS[s.below(3) as usize];
    let mut noise = [0i64; 9];
    for k in &mut noise {
        *k = s.range_i64(-1000, 1000);
    }

    let event = has_event.then(|| spec.effect_profiles.iter().nth(tag_index)).flatten();
    let shift = |m: MetricId| event.and_then(|(_, p)| p.get(&m));
    let value = |m: MetricId, units: i64| shifted(m, noisy(units, noise[m as usize]), shift(m));

    let duration = value(DurationMin, profile.duration);
    let stage = |m: MetricId, bp: i64| {
        let base = div_round_half_away(duration.mantissa() * i128::from(bp), 10_000) as i64;
        value(m, base)
    };
    let deep = stage(DeepMin, profile.deep_bp).min(duration);
    let rem = stage(RemMin, profile.rem_bp).min(duration - deep);
    let light_bp = 10_000 - profile.deep_bp - profile.rem_bp - profile.awake_bp;
    let light = stage(LightMin, light_bp).min(duration - deep - rem);
    let hundred = Decimal::ONE_HUNDRED;

    let values: BTreeMap<MetricId, Decimal> = [
        (SleepScore, value(SleepScore, profile.score).min(hundred)),
        (DurationMin, duration),
        (DeepMin, deep),
        (RemMin, rem),
        (LightMin, light),
        (HrvMs, value(HrvMs, profile.hrv)),
        (HeartRateBpm, value(HeartRateBpm, profile.heart_rate)),
        (RespRateBrpm, value(RespRateBrpm, profile.resp_rate)),
        (SnorePct, num::round_to(value(SnorePct, profile.snore).min(hundred), 1)),
    ]
    .into_iter()
    .collect();

    UserNightRecord {
        user_id: spec.user_id(user),
        date,
        values,
        events: event
            .map(|(tag, _)| LoggedEvent { tag: tag.clone(), strength: Decimal::new(strength, 1), note: None })
            .into_iter()
            .collect(),
    }
}

fn generate_range(spec: &CohortSpec, first: NaiveDate, nights: u32) -> Vec<UserNightRecord> {
    let mut out = Vec::with_capacity((spec.n_users * nights) as usize);
    for user in 0..spec.n_users {
        let profile = Profile::draw(spec.seed, user);
        for i in 0..nights {
            out.push(night(spec, user, &profile, first + Days::new(u64::from(i))));
        }
    }
    out.sort_by(|a, b| (&a.user_id, a.date).cmp(&(&b.user_id, b.date)));
    out
}

/// Exactly `n_users * nights_per_user` records starting at `start_date`,
/// sorted by (user_id, date).
pub fn generate_cohort(spec: &CohortSpec) -> Result<Vec<UserNightRecord>, InvalidSpec> {
    spec.validate()?;
    Ok(generate_range(spec, spec.start_date, spec.nights_per_user))
}

/// The `warmup_nights` nights before `start_date`, for baselines only.
pub fn generate_history(spec: &CohortSpec) -> Result<Vec<UserNightRecord>, InvalidSpec> {
    spec.validate()?;
    let first = spec.start_date - Days::new(u64::from(spec.warmup_nights));
    Ok(generate_range(spec, first, spec.warmup_nights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::TagVocabulary;

    #[test]
    fn default_shape() {
        let spec = CohortSpec::default();
        let cohort = generate_cohort(&spec).unwrap();
        assert_eq!(cohort.len(), 280);
        assert_eq!(cohort[0].user_id, "u01");
        assert_eq!(cohort[279].user_id, "u20");
        assert_eq!(generate_history(&spec).unwrap().len(), 280);
        let vocab = TagVocabulary(crate::metric::DEFAULT_VOCABULARY.iter().map(|t| Tag::new(t)).collect());
        for r in &cohort {
            r.validate(&vocab).unwrap();
        }
    }

    #[test]
    fn minimal_cohort() {
        let spec = CohortSpec { n_users: 1, nights_per_user: 1, event_rate: Decimal::ZERO, ..CohortSpec::default() };
        let cohort = generate_cohort(&spec).unwrap();
        assert_eq!(cohort.len(), 1);
        assert!(cohort[0].events.is_empty());
    }

    #[test]
    fn invalid_specs() {
        assert!(generate_cohort(&CohortSpec { n_users: 0, ..CohortSpec::default() }).is_err());
        assert!(generate_cohort(&CohortSpec { nights_per_user: 0, ..CohortSpec::default() }).is_err());
        assert!(generate_cohort(&CohortSpec { event_rate: d(11, 1), ..CohortSpec::default() }).is_err());
    }

    #[test]
    fn warmup_does_not_change_cohort_nights() {
        let a = generate_cohort(&CohortSpec::default()).unwrap();
        let b = generate_cohort(&CohortSpec { warmup_nights: 0, ..CohortSpec::default() }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wide_user_ids_sort() {
        let spec = CohortSpec { n_users: 120, nights_per_user: 1, ..CohortSpec::default() };
        assert_eq!(spec.user_id(0), "u001");
        assert_eq!(spec.user_id(119), "u120");
    }
}
