//! Numeric claim extraction and fact-bank support checks.
//!
//! Grammar (`claims-v1`), applied left to right without overlap:
//!
//! ```text
//! claim    := sign? number (space* unit)?  |  sign? int space* hour space* int space* minute
//! number   := digit+ ("." digit+)?
//! unit     := "%" | "percent" | "brpm" | "bpm" | "ms" | minute | hour
//! minute   := "minutes" | "minute" | "mins" | "min" | "m"
//! hour     := "hours" | "hour" | "hrs" | "hr" | "h"
//! ```
//!
//! A number glued to a preceding word character is not a claim ("HRV2"), and
//! neither is one glued to trailing letters that are not a unit ("2nd").
//! ISO dates (`YYYY-MM-DD`) are skipped. Alphabetic units need a word boundary
//! after them (digits may follow, as in "7h50m"). A sign counts only when it does not follow a word character.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::str::FromStr;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::metric::UnitClass;
use crate::model::{AllowedNumber, FactBank, InsightOutput, TextField};
use crate::num;

pub const GRAMMAR_VERSION: &str = "claims-v1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NumericClaim {
    /// Claimed value; total minutes for `hours_minutes`.
    pub value: Decimal,
    /// Fractional digits as written.
    pub precision: u32,
    pub unit_class: UnitClass,
    /// Byte offsets into the field text, unit included.
    pub span: (usize, usize),
    pub field: TextField,
}

impl NumericClaim {
    pub fn literal<'a>(&self, output: &'a InsightOutput) -> &'a str {
        &output.field(self.field)[self.span.0..self.span.1]
    }
}

const MINUTE_UNITS: [&str; 5] = ["minutes", "minute", "mins", "min", "m"];
const HOUR_UNITS: [&str; 5] = ["hours", "hour", "hrs", "hr", "h"];

fn is_word(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_' || c >= 0x80
}

fn digits_end(b: &[u8], mut i: usize) -> usize {
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    i
}

fn skip_spaces(b: &[u8], mut i: usize) -> usize {
    while i < b.len() && b[i] == b' ' {
        i += 1;
    }
    i
}

/// Matches an alphabetic unit token at `i` not followed by another letter.
fn match_word(b: &[u8], i: usize, tokens: &[&str]) -> Option<usize> {
    tokens.iter().find_map(|t| {
        let end = i + t.len();
        let fits = end <= b.len()
            && b[i..end].eq_ignore_ascii_case(t.as_bytes())
            && (end == b.len() || !(b[end].is_ascii_alphabetic() || b[end] == b'_' || b[end] >= 0x80));
        fits.then_some(end)
    })
}

fn match_unit(b: &[u8], i: usize) -> Option<(UnitClass, usize)> {
    if i < b.len() && b[i] == b'%' {
        return Some((UnitClass::Percent, i + 1));
    }
    if let Some(end) = match_word(b, i, &["percent"]) {
        return Some((UnitClass::Percent, end));
    }
    if let Some(end) = match_word(b, i, &["brpm"]) {
        return Some((UnitClass::Brpm, end));
    }
    if let Some(end) = match_word(b, i, &["bpm"]) {
        return Some((UnitClass::Bpm, end));
    }
    if let Some(end) = match_word(b, i, &["ms"]) {
        return Some((UnitClass::Ms, end));
    }
    if let Some(end) = match_word(b, i, &MINUTE_UNITS) {
        return Some((UnitClass::Minutes, end));
    }
    match_word(b, i, &HOUR_UNITS).map(|end| (UnitClass::Hours, end))
}

fn is_iso_date(b: &[u8], i: usize) -> bool {
    let pat = b"dddd-dd-dd";
    i + pat.len() <= b.len()
        && pat.iter().zip(&b[i..]).all(|(p, c)| if *p == b'd' { c.is_ascii_digit() } else { c == p })
        && (i + pat.len() == b.len() || !b[i + pat.len()].is_ascii_digit())
}

/// Length in bytes of a sign immediately before `i`, if it counts as one.
fn sign_before(b: &[u8], i: usize) -> Option<(usize, bool)> {
    const UNICODE_MINUS: &[u8] = "\u{2212}".as_bytes();
    let (len, negative) = if i >= 1 && (b[i - 1] == b'-' || b[i - 1] == b'+') {
        (1, b[i - 1] == b'-')
    } else if i >= UNICODE_MINUS.len() && &b[i - UNICODE_MINUS.len()..i] == UNICODE_MINUS {
        (UNICODE_MINUS.len(), true)
    } else {
        return None;
    };
    let start = i - len;
    (start == 0 || !is_word(b[start - 1])).then_some((len, negative))
}

/// Scans one text field.
pub fn extract_from_text(text: &str, field: TextField) -> Vec<NumericClaim> {
    let b = text.as_bytes();
    let mut claims = Vec::new();
    let mut i = 0;
    while i < b.len() {
        if !b[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        if is_iso_date(b, i) {
            i += 10;
            continue;
        }
        let unicode_minus = i >= 3 && &b[i - 3..i] == "\u{2212}".as_bytes();
        if i > 0 && !unicode_minus && (is_word(b[i - 1]) || b[i - 1] == b'.') {
            // part of an identifier or a malformed number; skip the whole run
            while i < b.len() && (is_word(b[i]) || b[i] == b'.') {
                i += 1;
            }
            continue;
        }
        let int_end = digits_end(b, i);
        let mut end = int_end;
        if end + 1 < b.len() && b[end] == b'.' && b[end + 1].is_ascii_digit() {
            end = digits_end(b, end + 1);
        }
        let number = &text[i..end];
        let (start, negative) = match sign_before(b, i) {
            Some((len, neg)) => (i - len, neg),
            None => (i, false),
        };
        let glued = end < b.len() && b[end].is_ascii_alphabetic();
        let unit_at = skip_spaces(b, end);
        let unit = match_unit(b, unit_at);
        if glued && unit.is_none() {
            while i < b.len() && (is_word(b[i]) || b[i] == b'.') {
                i += 1;
            }
            continue;
        }
        let mut value = Decimal::from_str(number).expect("digits parse as decimal");
        if negative {
            value.set_sign_negative(true);
        }
        let precision = num::precision_of(value);

        if let Some((UnitClass::Hours, hour_end)) = unit {
            if precision == 0 && !negative {
                if let Some(claim) = compound(b, text, start, value, hour_end, field) {
                    i = claim.span.1;
                    claims.push(claim);
                    continue;
                }
            }
        }

        let (unit_class, claim_end) = match unit {
            Some((class, unit_end)) => (class, unit_end),
            None => (UnitClass::Unitless, end),
        };
        claims.push(NumericClaim { value, precision, unit_class, span: (start, claim_end), field });
        i = claim_end;
    }
    claims
}

fn compound(
    b: &[u8],
    text: &str,
    start: usize,
    hours: Decimal,
    hour_end: usize,
    field: TextField,
) -> Option<NumericClaim> {
    let m_start = skip_spaces(b, hour_end);
    if m_start >= b.len() || !b[m_start].is_ascii_digit() {
        return None;
    }
    let m_end = digits_end(b, m_start);
    if m_end < b.len() && b[m_end] == b'.' && m_end + 1 < b.len() && b[m_end + 1].is_ascii_digit() {
        return None;
    }
    let unit_at = skip_spaces(b, m_end);
    let end = match_word(b, unit_at, &MINUTE_UNITS)?;
    let minutes = Decimal::from_str(&text[m_start..m_end]).ok()?;
    let value = hours * Decimal::from(60) + minutes;
    Some(NumericClaim { value, precision: 0, unit_class: UnitClass::HoursMinutes, span: (start, end), field })
}

/// All claims in the output's free-text fields, in field order then text order.
/// Chart data and tags are not scanned.
pub fn extract_claims(output: &InsightOutput) -> Vec<NumericClaim> {
    TextField::ALL.iter().flat_map(|&f| extract_from_text(output.field(f), f)).collect()
}

/// Whether some allowed number of a compatible unit class, rounded half away
/// from zero to the claim's precision, equals the claimed value.
pub fn is_supported(claim: &NumericClaim, allowed: &BTreeSet<AllowedNumber>) -> bool {
    allowed
        .iter()
        .any(|a| claim.unit_class.compatible_with(a.unit) && num::round_to(a.value, claim.precision) == claim.value)
}

pub fn check_claim(claim: &NumericClaim, bank: &FactBank) -> bool {
    is_supported(claim, &bank.allowed_numbers)
}
