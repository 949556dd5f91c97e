//! Exact scalars and their decimal text forms.

use num::bigint::{BigInt, Sign};
use num::{BigRational, Integer, One, Signed, ToPrimitive, Zero};

use super::LinalgError;

/// Arbitrary-precision rational, always in lowest terms with a positive denominator.
pub type Rational = BigRational;

/// Largest number of significant digits a rendered decimal may carry before
/// the renderer falls back to the fraction form.
pub const MAX_DECIMAL_DIGITS: usize = 17;

pub fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Parses `[+-]digits[.digits][(e|E)[+-]digits]` exactly.
///
/// A leading or trailing dot is accepted as long as at least one digit is
/// present in the mantissa (`.5`, `5.`).
pub fn parse_decimal(text: &str) -> Result<Rational, LinalgError> {
    let bytes = text.as_bytes();
    let err = |offset: usize, reason: &str| LinalgError::Parse {
        text: text.to_string(),
        offset,
        reason: reason.to_string(),
    };
    let mut pos = 0;
    let mut negative = false;
    if pos < bytes.len() && (bytes[pos] == b'+' || bytes[pos] == b'-') {
        negative = bytes[pos] == b'-';
        pos += 1;
    }
    let int_start = pos;
    while pos < bytes.len() && bytes[pos].is_ascii_digit() {
        pos += 1;
    }
    let int_digits = &text[int_start..pos];
    let mut frac_digits = "";
    if pos < bytes.len() && bytes[pos] == b'.' {
        pos += 1;
        let frac_start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        frac_digits = &text[frac_start..pos];
    }
    if int_digits.is_empty() && frac_digits.is_empty() {
        return Err(err(int_start, "expected digits"));
    }
    let mut exponent: i64 = 0;
    if pos < bytes.len() && (bytes[pos] == b'e' || bytes[pos] == b'E') {
        pos += 1;
        let mut exp_negative = false;
        if pos < bytes.len() && (bytes[pos] == b'+' || bytes[pos] == b'-') {
            exp_negative = bytes[pos] == b'-';
            pos += 1;
        }
        let exp_start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if exp_start == pos {
            return Err(err(exp_start, "expected exponent digits"));
        }
        exponent = text[exp_start..pos]
            .parse::<i64>()
            .map_err(|_| err(exp_start, "exponent out of range"))?;
        if exponent > 100_000 {
            return Err(err(exp_start, "exponent out of range"));
        }
        if exp_negative {
            exponent = -exponent;
        }
    }
    if pos != bytes.len() {
        return Err(err(pos, "unexpected character"));
    }

    let digits = format!("{int_digits}{frac_digits}");
    let mantissa: BigInt = digits.parse().map_err(|_| err(int_start, "bad digits"))?;
    let scale = exponent - frac_digits.len() as i64;
    let ten = BigInt::from(10);
    let mut value = if scale >= 0 {
        Rational::from_integer(mantissa * num::pow(ten, scale as usize))
    } else {
        Rational::new(mantissa, num::pow(ten, (-scale) as usize))
    };
    if negative {
        value = -value;
    }
    Ok(value)
}

/// Renders `r` as a plain decimal when its expansion terminates within
/// [`MAX_DECIMAL_DIGITS`] significant digits.
pub fn render_decimal(r: &Rational) -> Option<String> {
    if r.is_zero() {
        return Some("0".to_string());
    }
    // Terminating iff the denominator is 2^a 5^b.
    let mut den = r.denom().clone();
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    let mut twos = 0usize;
    let mut fives = 0usize;
    while den.is_even() {
        den /= &two;
        twos += 1;
    }
    while (&den % &five).is_zero() {
        den /= &five;
        fives += 1;
    }
    if !den.is_one() {
        return None;
    }
    let places = twos.max(fives);
    let scaled = r * Rational::from_integer(num::pow(BigInt::from(10), places));
    debug_assert!(scaled.is_integer());
    let (sign, magnitude) = scaled.to_integer().into_parts();
    let mut digits = magnitude.to_str_radix(10);
    let significant = digits.trim_start_matches('0').trim_end_matches('0').len();
    if significant > MAX_DECIMAL_DIGITS {
        return None;
    }
    if places > 0 {
        if digits.len() <= places {
            digits = format!("{}{}", "0".repeat(places - digits.len() + 1), digits);
        }
        let split = digits.len() - places;
        digits = format!("{}.{}", &digits[..split], &digits[split..]);
        // `places` is minimal, so the fraction never ends in a zero.
    }
    Some(if sign == Sign::Minus { format!("-{digits}") } else { digits })
}

/// Decimal when possible, `(num/den)` otherwise. Negative fractions are
/// written `-(num/den)`.
pub fn render_exact(r: &Rational) -> String {
    match render_decimal(r) {
        Some(s) => s,
        None => {
            let sign = if r.is_negative() { "-" } else { "" };
            format!("{sign}({}/{})", r.numer().abs(), r.denom())
        }
    }
}

/// Shortest decimal that round-trips through the nearest `f64`.
pub fn render_f64(r: &Rational) -> String {
    format!("{}", to_f64(r))
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Exact lift of a finite float.
pub fn from_f64(v: f64) -> Option<Rational> {
    Rational::from_float(v)
}
