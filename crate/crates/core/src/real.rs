//! Thin helpers around [`rug::Float`] for working at a configurable precision.

use rug::float::Round;
use rug::ops::Pow;
use rug::Float;

use crate::error::{Error, Result};

/// Default working precision in mantissa bits.
pub const DEFAULT_PRECISION: u32 = 256;

/// Smallest precision accepted anywhere in the crate.
pub const MIN_PRECISION: u32 = 32;

pub type Real = Float;

#[inline]
pub fn zero(prec: u32) -> Real {
    Float::new(prec)
}

#[inline]
pub fn one(prec: u32) -> Real {
    Float::with_val(prec, 1)
}

#[inline]
pub fn from_f64(prec: u32, v: f64) -> Real {
    Float::with_val(prec, v)
}

#[inline]
pub fn from_int(prec: u32, v: i64) -> Real {
    Float::with_val(prec, v)
}

/// `2^e` at the given precision.
pub fn pow2(prec: u32, e: i32) -> Real {
    Float::with_val(prec, 2).pow(e)
}

/// Re-rounds `x` to `prec` bits.
pub fn round_to(x: &Real, prec: u32) -> Real {
    Float::with_val_round(prec, x, Round::Nearest).0
}

/// Parses a decimal string ("1.5", "-2e-3", "0.25") at `prec` bits.
pub fn parse(prec: u32, s: &str) -> Result<Real> {
    let t = s.trim();
    let parsed = Float::parse(t).map_err(|e| Error::Parse(format!("{t:?}: {e}")))?;
    let v = Float::with_val(prec, parsed);
    if !v.is_finite() {
        return Err(Error::Parse(format!("{t:?} is not finite")));
    }
    Ok(v)
}

/// Number of significant decimal digits carried by `prec` bits.
pub fn decimal_digits(prec: u32) -> usize {
    ((prec as f64) * std::f64::consts::LOG10_2).floor().max(1.0) as usize
}

/// Full-precision decimal rendering.
pub fn to_decimal(x: &Real) -> String {
    to_decimal_digits(x, decimal_digits(x.prec()))
}

/// Decimal rendering with a fixed number of significant digits.
pub fn to_decimal_digits(x: &Real, digits: usize) -> String {
    if x.is_zero() {
        return "0".to_string();
    }
    x.to_string_radix(10, Some(digits.max(1)))
}

/// Decimal rendering that parses back to the same value at the same
/// precision, with redundant trailing zeros removed.
pub fn to_exact_decimal(x: &Real) -> String {
    if x.is_zero() {
        return "0".to_string();
    }
    let s = x.to_string_radix(10, None);
    let (mantissa, exp) = match s.find('e') {
        Some(i) => (&s[..i], &s[i..]),
        None => (s.as_str(), ""),
    };
    let mantissa = if mantissa.contains('.') {
        mantissa.trim_end_matches('0').trim_end_matches('.')
    } else {
        mantissa
    };
    format!("{mantissa}{exp}")
}

/// Short scientific rendering used for residuals and tolerances.
pub fn to_sci(x: &Real) -> String {
    to_decimal_digits(x, 6)
}

pub fn max_abs<'a>(prec: u32, xs: impl IntoIterator<Item = &'a Real>) -> Real {
    let mut m = zero(prec);
    for x in xs {
        let a = Float::with_val(prec, x.abs_ref());
        if a > m {
            m = a;
        }
    }
    m
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_diff(a: &Real, b: &Real, floor: &Real) -> Real {
    let prec = a.prec().max(b.prec());
    let diff = Float::with_val(prec, a - b).abs();
    let mut scale = Float::with_val(prec, a.abs_ref());
    let bb = Float::with_val(prec, b.abs_ref());
    if bb > scale {
        scale = bb;
    }
    if *floor > scale {
        scale = Float::with_val(prec, floor);
    }
    if scale.is_zero() {
        return diff;
    }
    diff / scale
}
