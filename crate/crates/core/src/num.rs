//! Exact decimal helpers shared by every layer.
//!
//! All metric values are `rust_decimal::Decimal`s (96-bit scaled integers).
//! Rounding is always half away from zero.

use alloc::format;
use alloc::string::{String, ToString};

use rust_decimal::{Decimal, RoundingStrategy};

/// Rounds half away from zero to `dp` fractional digits and pins the scale to
/// exactly `dp`, so `34` at one digit renders as `34.0`.
pub fn round_to(value: Decimal, dp: u32) -> Decimal {
    let mut out = value.round_dp_with_strategy(dp, RoundingStrategy::MidpointAwayFromZero);
    out.rescale(dp);
    out
}

/// Renders `value` with exactly `dp` fractional digits.
pub fn format_fixed(value: Decimal, dp: u32) -> String {
    round_to(value, dp).to_string()
}

/// Integer division of `num / den` rounded half away from zero. `den != 0`.
pub fn div_round_half_away(num: i128, den: i128) -> i128 {
    debug_assert!(den != 0);
    let q = num / den;
    let r = num % den;
    if r == 0 {
        return q;
    }
    if 2 * r.unsigned_abs() >= den.unsigned_abs() {
        if (num < 0) == (den < 0) {
            q + 1
        } else {
            q - 1
        }
    } else {
        q
    }
}

/// `round_half_away(100 * (current - mean) / mean)` computed on the exact
/// scaled-integer representations. Returns `None` when `mean == 0`.
pub fn pct_delta(current: Decimal, mean: Decimal) -> Option<i64> {
    if mean.is_zero() {
        return None;
    }
    let scale = current.scale().max(mean.scale());
    let c = widen(current, scale);
    let m = widen(mean, scale);
    Some(div_round_half_away(100 * (c - m), m) as i64)
}

/// Mantissa of `value` expressed at `scale` (which must be >= its own scale).
fn widen(value: Decimal, scale: u32) -> i128 {
    value.mantissa() * 10i128.pow(scale - value.scale())
}

/// "+25", "-17", "0".
pub fn signed_pct(pct: i64) -> String {
    if pct > 0 {
        format!("+{pct}")
    } else {
        pct.to_string()
    }
}

/// Whole minutes rendered as "7h 50m". `minutes` must be a non-negative integer value.
pub fn hours_minutes(minutes: Decimal) -> String {
    let total = round_to(minutes, 0).mantissa();
    format!("{}h {}m", total / 60, total % 60)
}

/// Number of fractional digits in `value`'s representation.
pub fn precision_of(value: Decimal) -> u32 {
    value.scale()
}
