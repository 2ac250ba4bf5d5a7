//! Math answer normalization and equivalence.
//!
//! Answers are cleaned of LaTeX wrappers and formatting noise, then classified
//! as an exact rational (integers, decimals, `a/b`, `\frac{a}{b}`) or left as a
//! cleaned string. Two rationals are equal only when exactly equal, except that
//! a decimal literal may approximate a rational with a non-terminating
//! expansion to within [`DECIMAL_RELATIVE_TOLERANCE`].

use std::fmt;
use std::sync::LazyLock;

use num::bigint::BigInt;
use num::{BigRational, One, Signed, Zero};
use regex::Regex;

use super::extract::matching_brace;

pub const DECIMAL_RELATIVE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Unit {
    Percent,
    Degree,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MathValue {
    /// `decimal` marks values written as decimal literals.
    Number {
        value: BigRational,
        decimal: bool,
    },
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedAnswer {
    pub value: MathValue,
    pub unit: Option<Unit>,
}

impl NormalizedAnswer {
    pub fn as_rational(&self) -> Option<&BigRational> {
        match &self.value {
            MathValue::Number { value, .. } => Some(value),
            MathValue::Text(_) => None,
        }
    }
}

/// Canonical text; normalizing it again yields the same answer.
impl fmt::Display for NormalizedAnswer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.value {
            MathValue::Number {
                value,
                decimal: true,
            } => {
                let s = decimal_string(value);
                f.write_str(&s)?;
                if !s.contains('.') {
                    f.write_str(".0")?;
                }
            }
            MathValue::Number {
                value,
                decimal: false,
            } => {
                if value.denom().is_one() {
                    write!(f, "{}", value.numer())?
                } else {
                    write!(f, "{}/{}", value.numer(), value.denom())?
                }
            }
            MathValue::Text(s) => f.write_str(s)?,
        }
        match self.unit {
            Some(Unit::Percent) => f.write_str("\\%"),
            Some(Unit::Degree) => f.write_str("^\\circ"),
            None => Ok(()),
        }
    }
}

pub fn normalize_math_answer(s: &str) -> NormalizedAnswer {
    let mut unit = None;
    let mut current = s.to_string();
    loop {
        let (next, stripped) = clean_once(&current);
        if unit.is_none() {
            unit = stripped;
        }
        if next == current {
            break;
        }
        current = next;
    }
    let value = match parse_rational(&current) {
        Some((value, decimal)) => MathValue::Number { value, decimal },
        None => MathValue::Text(current),
    };
    NormalizedAnswer { value, unit }
}

pub fn math_equivalent(a: &str, b: &str) -> bool {
    equivalent_normalized(&normalize_math_answer(a), &normalize_math_answer(b))
}

pub fn equivalent_normalized(a: &NormalizedAnswer, b: &NormalizedAnswer) -> bool {
    if let (Some(ua), Some(ub)) = (a.unit, b.unit) {
        if ua != ub {
            return false;
        }
    }
    match (&a.value, &b.value) {
        (
            MathValue::Number {
                value: x,
                decimal: dx,
            },
            MathValue::Number {
                value: y,
                decimal: dy,
            },
        ) => {
            if x == y {
                return true;
            }
            let approximates = |dec: bool, other: &BigRational, other_dec: bool| {
                dec && !other_dec && !terminates(other)
            };
            if approximates(*dx, y, *dy) || approximates(*dy, x, *dx) {
                within_relative_tolerance(x, y)
            } else {
                false
            }
        }
        (MathValue::Text(x), MathValue::Text(y)) => x.to_lowercase() == y.to_lowercase(),
        _ => false,
    }
}

fn within_relative_tolerance(x: &BigRational, y: &BigRational) -> bool {
    let diff = (x - y).abs();
    let scale = std::cmp::max(x.abs(), y.abs());
    // |x - y| <= tol * max(|x|, |y|), with tol = 1e-6 held exactly
    diff * BigRational::from_integer(BigInt::from(1_000_000)) <= scale
}

/// True when the rational has a finite decimal expansion.
pub fn terminates(r: &BigRational) -> bool {
    let mut d = r.denom().clone();
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    while (&d % &two).is_zero() {
        d /= &two;
    }
    while (&d % &five).is_zero() {
        d /= &five;
    }
    d.is_one()
}

fn decimal_string(r: &BigRational) -> String {
    let negative = r.is_negative();
    let r = r.abs();
    let mut scale = 0usize;
    let mut scaled = r.clone();
    let ten = BigRational::from_integer(BigInt::from(10));
    while !scaled.denom().is_one() {
        scaled *= &ten;
        scale += 1;
    }
    let digits = scaled.numer().to_string();
    let body = if scale == 0 {
        digits
    } else {
        let padded = format!("{digits:0>width$}", width = scale + 1);
        let (int, frac) = padded.split_at(padded.len() - scale);
        format!("{int}.{frac}")
    };
    if negative {
        format!("-{body}")
    } else {
        body
    }
}

static THOUSANDS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[+-]?\d{1,3}(,\d{3})+(\.\d+)?$").unwrap());
static DECIMAL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^([+-])?(\d+)?(?:\.(\d*))?$").unwrap());
static SLASH_FRACTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^([+-]?\d+)/([+-]?\d+)$").unwrap());
static LATEX_FRACTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^([+-])?\\frac\{([+-]?\d+)\}\{([+-]?\d+)\}$").unwrap());
static SHORT_FRACTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^([+-])?\\frac(\d)(\d)$").unwrap());

const WRAPPERS: [&str; 6] = [
    "\\boxed",
    "\\text",
    "\\textbf",
    "\\mathrm",
    "\\mathbf",
    "\\displaystyle",
];

const UNIT_SUFFIXES: [(&str, Unit); 8] = [
    ("\\%", Unit::Percent),
    ("%", Unit::Percent),
    ("^{\\circ}", Unit::Degree),
    ("^\\circ", Unit::Degree),
    ("\\circ", Unit::Degree),
    ("\\degree", Unit::Degree),
    ("^{°}", Unit::Degree),
    ("°", Unit::Degree),
];

/// One pass of cleanup. Every step either shrinks the string or leaves it
/// untouched, so iterating to a fixpoint terminates.
fn clean_once(s: &str) -> (String, Option<Unit>) {
    let mut t: String = s.chars().filter(|c| !c.is_whitespace()).collect();

    for (open, close) in [("$$", "$$"), ("$", "$"), ("\\(", "\\)"), ("\\[", "\\]")] {
        if t.len() >= open.len() + close.len() && t.starts_with(open) && t.ends_with(close) {
            t = t[open.len()..t.len() - close.len()].to_string();
            break;
        }
    }

    for cmd in WRAPPERS {
        if let Some(inner) = strip_whole_command(&t, cmd) {
            t = inner;
            break;
        }
    }

    t = remove_sizing(&t, "\\left");
    t = remove_sizing(&t, "\\right");
    for spacing in ["\\!", "\\,", "\\;", "\\:", "\\ "] {
        t = t.replace(spacing, "");
    }
    t = t.replace("\\dfrac", "\\frac").replace("\\tfrac", "\\frac");
    t = t.replace("{,}", ",");

    if t.len() > 1 && t.ends_with('.') {
        t.pop();
    }

    let mut unit = None;
    for (suffix, u) in UNIT_SUFFIXES {
        if t.len() > suffix.len() && t.ends_with(suffix) {
            t.truncate(t.len() - suffix.len());
            unit = Some(u);
            break;
        }
    }

    if THOUSANDS.is_match(&t) {
        t = t.replace(',', "");
    }

    (t, unit)
}

/// `\cmd{inner}` spanning the entire string -> `inner`.
fn strip_whole_command(t: &str, cmd: &str) -> Option<String> {
    let rest = t.strip_prefix(cmd)?;
    if !rest.starts_with('{') {
        return None;
    }
    let open = cmd.len();
    let close = matching_brace(t, open)?;
    (close == t.len() - 1).then(|| t[open + 1..close].to_string())
}

/// Drop `\left` / `\right` when used as a sizing prefix (not `\rightarrow`).
fn remove_sizing(t: &str, cmd: &str) -> String {
    let mut out = String::with_capacity(t.len());
    let mut rest = t;
    while let Some(pos) = rest.find(cmd) {
        let after = &rest[pos + cmd.len()..];
        let is_word = after
            .chars()
            .next()
            .is_some_and(|c| c.is_ascii_alphabetic());
        out.push_str(&rest[..pos]);
        if is_word {
            out.push_str(cmd);
        }
        rest = after;
    }
    out.push_str(rest);
    out
}

fn parse_int(s: &str) -> Option<BigInt> {
    s.strip_prefix('+').unwrap_or(s).parse().ok()
}

fn signed(negative: bool, r: BigRational) -> BigRational {
    if negative {
        -r
    } else {
        r
    }
}

fn ratio(num: &str, den: &str) -> Option<BigRational> {
    let n = parse_int(num)?;
    let d = parse_int(den)?;
    (!d.is_zero()).then(|| BigRational::new(n, d))
}

fn parse_rational(t: &str) -> Option<(BigRational, bool)> {
    if let Some(c) = DECIMAL.captures(t) {
        let int = c.get(2).map_or("", |m| m.as_str());
        let frac = c.get(3).map(|m| m.as_str());
        if int.is_empty() && frac.is_none_or(str::is_empty) {
            return None;
        }
        let negative = c.get(1).is_some_and(|m| m.as_str() == "-");
        let frac_digits = frac.unwrap_or("");
        let digits = format!("{int}{frac_digits}");
        let numer: BigInt = if digits.is_empty() {
            BigInt::zero()
        } else {
            digits.parse().ok()?
        };
        let denom = num::pow(BigInt::from(10), frac_digits.len());
        return Some((
            signed(negative, BigRational::new(numer, denom)),
            frac.is_some(),
        ));
    }
    if let Some(c) = SLASH_FRACTION.captures(t) {
        return ratio(&c[1], &c[2]).map(|r| (r, false));
    }
    for re in [&*LATEX_FRACTION, &*SHORT_FRACTION] {
        if let Some(c) = re.captures(t) {
            let negative = c.get(1).is_some_and(|m| m.as_str() == "-");
            return ratio(&c[2], &c[3]).map(|r| (signed(negative, r), false));
        }
    }
    None
}
