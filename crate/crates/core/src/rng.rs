//! Seeded random streams.
//!
//! Every stream is a SplitMix64 generator whose 64-bit state is derived from a
//! root seed and a list of integer stream coordinates:
//!
//! ```text
//! state = seed
//! for part in parts: state = mix64(state ^ mix64(part + 0x9E3779B97F4A7C15))
//! ```
//!
//! `mix64` is the SplitMix64 output finalizer. User ids are folded to integers
//! with 64-bit FNV-1a and dates with their day number from 0001-01-01.

use chrono::{Datelike, NaiveDate};
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

pub fn day_number(date: NaiveDate) -> u64 {
    date.num_days_from_ce() as u64
}

/// Stream purposes, so that draws for different concerns never share a stream.
pub mod purpose {
    pub const USER_PROFILE: u64 = 1;
    pub const NIGHT: u64 = 2;
    pub const WRITER_FAULT: u64 = 3;
    pub const ARTIFACT_FAULT: u64 = 4;
}

pub struct Stream(SplitMix64);

impl Stream {
    pub fn new(seed: u64, parts: &[u64]) -> Stream {
        let state = parts.iter().fold(seed, |s, &p| mix64(s ^ mix64(p.wrapping_add(GOLDEN))));
        Stream(SplitMix64::from_seed(state.to_le_bytes()))
    }

    /// Stream keyed by a night (user id and date).
    pub fn for_night(seed: u64, purpose: u64, user_id: &str, date: NaiveDate) -> Stream {
        Stream::new(seed, &[purpose, fnv1a(user_id.as_bytes()), day_number(date)])
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Integer in `[0, n)` by multiply-shift. `n > 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        ((u128::from(self.next_u64()) * u128::from(n)) >> 64) as u64
    }

    /// Integer in `[lo, hi]`.
    pub fn range_i64(&mut self, lo: i64, hi: i64) -> i64 {
        lo + self.below((hi - lo + 1) as u64) as i64
    }

    /// True with probability `p` (53-bit resolution; `p >= 1` always fires, `p <= 0` never).
    pub fn chance(&mut self, p: f64) -> bool {
        let u = (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        u < p
    }
}
