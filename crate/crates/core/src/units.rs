//! Engineering-unit ingestion.
//!
//! Every quantity inside the crate is SI (W, VAr, V, A, rad/s, H, Ω, F, s).
//! Text values such as `"2.08e-2 rad/s/kW"` or `"215 µH"` are converted here.
//! A unit expression is a `/`-separated list of prefixed base units; the first
//! term is the numerator and every following term divides.

use crate::error::{Error, Result};

const BASES: &[(&str, &str)] = &[
    ("VAr", "VAr"),
    ("var", "VAr"),
    ("VA", "VA"),
    ("Hz", "Hz"),
    ("rad", "rad"),
    ("ohm", "Ω"),
    ("Ω", "Ω"),
    ("W", "W"),
    ("V", "V"),
    ("A", "A"),
    ("s", "s"),
    ("H", "H"),
    ("F", "F"),
];

const PREFIXES: &[(&str, i32)] = &[
    ("M", 6),
    ("k", 3),
    ("m", -3),
    ("µ", -6),
    ("μ", -6),
    ("u", -6),
    ("n", -9),
];

/// A parsed quantity in SI together with its canonical (prefix-free) unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantity {
    pub value: f64,
    pub unit: String,
}

/// Decimal exponent and canonical form of a unit expression.
///
/// ```
/// let (exp, canon) = droopgrid::units::unit_scale("rad/s/kW").unwrap();
/// assert_eq!((exp, canon.as_str()), (-3, "rad/s/W"));
/// ```
pub fn unit_scale(unit: &str) -> Result<(i32, String)> {
    let unit = unit.trim();
    if unit.is_empty() {
        return Ok((0, String::new()));
    }
    let mut exp = 0;
    let mut canon = Vec::new();
    for (k, term) in unit.split('/').enumerate() {
        let (e, base) = parse_term(term.trim()).ok_or_else(|| Error::Unit {
            text: unit.to_string(),
            msg: format!("unrecognized unit `{term}`"),
        })?;
        exp += if k == 0 { e } else { -e };
        canon.push(base);
    }
    Ok((exp, canon.join("/")))
}

fn parse_term(term: &str) -> Option<(i32, &'static str)> {
    if let Some(&(_, canon)) = BASES.iter().find(|(b, _)| *b == term) {
        return Some((0, canon));
    }
    PREFIXES.iter().find_map(|&(p, e)| {
        let rest = term.strip_prefix(p)?;
        BASES
            .iter()
            .find(|(b, _)| *b == rest)
            .map(|&(_, canon)| (e, canon))
    })
}

fn apply_exp(value: f64, exp: i32) -> f64 {
    // one correctly rounded operation so "33 ms" lands on the literal 0.033
    if exp >= 0 {
        value * 10f64.powi(exp)
    } else {
        value / 10f64.powi(-exp)
    }
}

/// Parses `"<number> [unit]"` into SI.
pub fn parse_quantity(text: &str) -> Result<Quantity> {
    let text = text.trim();
    let split = text
        .find(|c: char| c.is_whitespace())
        .unwrap_or(text.len());
    let (num, unit) = text.split_at(split);
    let value: f64 = num.parse().map_err(|_| Error::Unit {
        text: text.to_string(),
        msg: format!("`{num}` is not a number"),
    })?;
    if !value.is_finite() {
        return Err(Error::Unit {
            text: text.to_string(),
            msg: "value is not finite".into(),
        });
    }
    let (exp, unit) = unit_scale(unit)?;
    Ok(Quantity {
        value: apply_exp(value, exp),
        unit,
    })
}

/// SI value of a suffixed quantity.
///
/// ```
/// use droopgrid::units::to_internal_units;
/// assert_eq!(to_internal_units("33 ms").unwrap(), 0.033);
/// assert_eq!(to_internal_units("0 kW").unwrap(), 0.0);
/// ```
pub fn to_internal_units(text: &str) -> Result<f64> {
    parse_quantity(text).map(|q| q.value)
}

/// Expresses an SI value in `unit`; inverse of [`to_internal_units`].
pub fn from_internal_units(si: f64, unit: &str) -> Result<f64> {
    let (exp, _) = unit_scale(unit)?;
    Ok(apply_exp(si, -exp))
}

/// Parses a quantity and checks its canonical unit against `expected`.
/// Bare numbers are taken as already SI.
pub fn parse_expecting(text: &str, expected: &str) -> Result<f64> {
    let q = parse_quantity(text)?;
    if !q.unit.is_empty() && q.unit != expected {
        return Err(Error::Unit {
            text: text.to_string(),
            msg: format!("expected a quantity in {expected}, found {}", q.unit),
        });
    }
    Ok(q.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_gains_convert_to_per_watt() {
        let n = to_internal_units("2.08e-2 rad/s/kW").unwrap();
        assert!((n - 2.08e-5).abs() <= 1e-15 * 2.08e-5);
        let m = to_internal_units("208.3e-3 V/kVAr").unwrap();
        assert!((m - 2.083e-4).abs() <= 1e-15 * 2.083e-4);
        let mi = to_internal_units("0.67 V/s/kVAr").unwrap();
        assert!((mi - 6.7e-4).abs() <= 1e-15 * 6.7e-4);
    }

    #[test]
    fn suffixes() {
        assert_eq!(to_internal_units("33 ms").unwrap(), 0.033);
        assert_eq!(to_internal_units("0 kW").unwrap(), 0.0);
        assert_eq!(to_internal_units("150 µH").unwrap(), 150e-6);
        assert_eq!(to_internal_units("150 uH").unwrap(), 150e-6);
        assert_eq!(to_internal_units("110 µF").unwrap(), 110e-6);
        assert_eq!(to_internal_units("0.55 mΩ").unwrap(), 0.55e-3);
        assert_eq!(to_internal_units("0.48 kV").unwrap(), 480.0);
        assert_eq!(to_internal_units("220 kVAr").unwrap(), 220e3);
        assert_eq!(to_internal_units("60 Hz").unwrap(), 60.0);
        assert_eq!(to_internal_units("7").unwrap(), 7.0);
    }

    #[test]
    fn unknown_suffix_is_rejected() {
        assert!(matches!(to_internal_units("3 furlongs"), Err(Error::Unit { .. })));
        assert!(matches!(to_internal_units("3 kX/s"), Err(Error::Unit { .. })));
        assert!(to_internal_units("abc kW").is_err());
        assert!(to_internal_units("inf kW").is_err());
    }

    #[test]
    fn dimension_check() {
        assert_eq!(parse_expecting("33 ms", "s").unwrap(), 0.033);
        assert!(parse_expecting("33 kW", "s").is_err());
        assert_eq!(parse_expecting("0.033", "s").unwrap(), 0.033);
    }
}
