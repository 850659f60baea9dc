use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LiteralKind {
    Time,
    Quantity,
    String,
}

impl LiteralKind {
    /// Type name used in relation tail constraints.
    pub fn type_name(self) -> &'static str {
        match self {
            LiteralKind::Time => "time",
            LiteralKind::Quantity => "quantity",
            LiteralKind::String => "string",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TimePrecision {
    Year,
    Month,
    Day,
}

/// A calendar date with year, month or day precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Date {
    pub year: u16,
    pub month: Option<u8>,
    pub day: Option<u8>,
}

impl Date {
    pub fn precision(&self) -> TimePrecision {
        match (self.month, self.day) {
            (Some(_), Some(_)) => TimePrecision::Day,
            (Some(_), None) => TimePrecision::Month,
            _ => TimePrecision::Year,
        }
    }

    fn parse(s: &str) -> Option<Date> {
        let parts: Vec<&str> = s.split('-').collect();
        let digits = |p: &str, n: usize| p.len() == n && p.bytes().all(|b| b.is_ascii_digit());
        match parts.as_slice() {
            [y] if digits(y, 4) => Some(Date { year: y.parse().ok()?, month: None, day: None }),
            [y, m] if digits(y, 4) && digits(m, 2) => {
                let month: u8 = m.parse().ok()?;
                (1..=12).contains(&month).then_some(Date {
                    year: y.parse().ok()?,
                    month: Some(month),
                    day: None,
                })
            }
            [y, m, d] if digits(y, 4) && digits(m, 2) && digits(d, 2) => {
                let month: u8 = m.parse().ok()?;
                let day: u8 = d.parse().ok()?;
                ((1..=12).contains(&month) && (1..=31).contains(&day)).then_some(Date {
                    year: y.parse().ok()?,
                    month: Some(month),
                    day: Some(day),
                })
            }
            _ => None,
        }
    }
}

impl fmt::Display for Date {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}", self.year)?;
        if let Some(m) = self.month {
            write!(f, "-{m:02}")?;
            if let Some(d) = self.day {
                write!(f, "-{d:02}")?;
            }
        }
        Ok(())
    }
}

/// A non-entity claim value.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Literal {
    Time(Date),
    /// Canonical decimal: optional `-`, no leading zeros, no trailing fractional zeros.
    Quantity(String),
    String(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid {kind:?} literal `{value}`")]
pub struct LiteralError {
    pub kind: LiteralKind,
    pub value: String,
}

impl Literal {
    pub fn parse(kind: LiteralKind, value: &str) -> Result<Literal, LiteralError> {
        let err = || LiteralError { kind, value: value.to_string() };
        match kind {
            LiteralKind::Time => Date::parse(value.trim()).map(Literal::Time).ok_or_else(err),
            LiteralKind::Quantity => canonical_decimal(value.trim()).map(Literal::Quantity).ok_or_else(err),
            LiteralKind::String => {
                if value.is_empty() {
                    Err(err())
                } else {
                    Ok(Literal::String(value.to_string()))
                }
            }
        }
    }

    pub fn kind(&self) -> LiteralKind {
        match self {
            Literal::Time(_) => LiteralKind::Time,
            Literal::Quantity(_) => LiteralKind::Quantity,
            Literal::String(_) => LiteralKind::String,
        }
    }

    /// Canonical value string.
    pub fn value(&self) -> String {
        match self {
            Literal::Time(d) => d.to_string(),
            Literal::Quantity(q) => q.clone(),
            Literal::String(s) => s.clone(),
        }
    }
}

fn canonical_decimal(s: &str) -> Option<String> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    if int.is_empty() || !int.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if let Some(f) = frac {
        if f.is_empty() || !f.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
    }
    let int = int.trim_start_matches('0');
    let int = if int.is_empty() { "0" } else { int };
    let frac = frac.map(|f| f.trim_end_matches('0')).filter(|f| !f.is_empty());
    let mut out = String::new();
    let is_zero = int == "0" && frac.is_none();
    if neg && !is_zero {
        out.push('-');
    }
    out.push_str(int);
    if let Some(f) = frac {
        out.push('.');
        out.push_str(f);
    }
    Some(out)
}

#[derive(Serialize, Deserialize)]
struct LiteralRepr {
    kind: LiteralKind,
    value: String,
}

impl Serialize for Literal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        LiteralRepr { kind: self.kind(), value: self.value() }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Literal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = LiteralRepr::deserialize(deserializer)?;
        Literal::parse(repr.kind, &repr.value).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn date_precisions() {
        let d = Literal::parse(LiteralKind::Time, "1960-11-01").unwrap();
        assert_eq!(d.value(), "1960-11-01");
        let Literal::Time(date) = d else { panic!() };
        assert_eq!(date.precision(), TimePrecision::Day);
        let y = Literal::parse(LiteralKind::Time, "2011").unwrap();
        let Literal::Time(date) = y else { panic!() };
        assert_eq!(date.precision(), TimePrecision::Year);
        assert!(Literal::parse(LiteralKind::Time, "1960-13-01").is_err());
        assert!(Literal::parse(LiteralKind::Time, "60-11-01").is_err());
    }

    #[test]
    fn quantities_canonicalize() {
        let q = |s| Literal::parse(LiteralKind::Quantity, s).map(|l| l.value());
        assert_eq!(q("+828").unwrap(), "828");
        assert_eq!(q("0828.50").unwrap(), "828.5");
        assert_eq!(q("-0.0").unwrap(), "0");
        assert!(q("8,28").is_err());
        assert!(q("").is_err());
    }

    proptest! {
        #[test]
        fn canonical_form_round_trips(
            y in 1000u16..=2999, m in 1u8..=12, d in 1u8..=28, prec in 0..3usize,
            int in 0u64..10_000_000, frac in proptest::option::of(0u32..1000), neg in any::<bool>(),
        ) {
            let date = Date {
                year: y,
                month: (prec >= 1).then_some(m),
                day: (prec == 2).then_some(d),
            };
            let lit = Literal::Time(date);
            prop_assert_eq!(Literal::parse(LiteralKind::Time, &lit.value()).unwrap(), lit);

            let raw = match frac {
                Some(f) => format!("{}{int}.{f:03}", if neg { "-" } else { "" }),
                None => format!("{}{int}", if neg { "-" } else { "" }),
            };
            let q = Literal::parse(LiteralKind::Quantity, &raw).unwrap();
            prop_assert_eq!(Literal::parse(LiteralKind::Quantity, &q.value()).unwrap(), q);
        }
    }
}
