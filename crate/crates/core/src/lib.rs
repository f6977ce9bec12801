//! Core of the partitioned sleep-insight pipeline: deterministic analytical
//! layers, the bounded writer interface, the evaluator and the per-night
//! condition runner. `no_std` with `alloc`; file and network IO live in the
//! `tfts` crate.

#![no_std]

extern crate alloc;

pub mod analysis;
pub mod cohort;
pub mod evaluator;
pub mod harness;
pub mod metric;
pub mod model;
pub mod num;
pub mod pipeline;
pub mod prompts;
pub mod rng;
pub mod writers;

pub use metric::{MetricId, Tag, TagVocabulary, UnitClass};
pub use model::ConditionId;
pub use pipeline::{AnalysisConfig, NightContext};
