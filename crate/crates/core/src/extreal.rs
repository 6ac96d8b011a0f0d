use std::fmt;
use std::ops::{Add, Mul};

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A value in `R ∪ {+∞}`.
///
/// Serializes as a JSON number or the string `"+inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    PosInf,
}

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal::Finite(0.0);

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::PosInf => None,
        }
    }

    pub fn min(self, other: ExtReal) -> ExtReal {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a.min(b)),
            (ExtReal::PosInf, o) | (o, ExtReal::PosInf) => o,
        }
    }

    /// Converts an `f64`; `+∞` maps to `PosInf`, NaN and `−∞` are rejected.
    pub fn from_f64(v: f64) -> Option<ExtReal> {
        if v.is_finite() {
            Some(ExtReal::Finite(v))
        } else if v == f64::INFINITY {
            Some(ExtReal::PosInf)
        } else {
            None
        }
    }

    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::Finite(v) => v,
            ExtReal::PosInf => f64::INFINITY,
        }
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        use std::cmp::Ordering;
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a.partial_cmp(b),
            (ExtReal::Finite(_), ExtReal::PosInf) => Some(Ordering::Less),
            (ExtReal::PosInf, ExtReal::Finite(_)) => Some(Ordering::Greater),
            (ExtReal::PosInf, ExtReal::PosInf) => Some(Ordering::Equal),
        }
    }
}

impl From<f64> for ExtReal {
    fn from(v: f64) -> Self {
        ExtReal::Finite(v)
    }
}

impl Add for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: ExtReal) -> ExtReal {
        match (self, rhs) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a + b),
            _ => ExtReal::PosInf,
        }
    }
}

impl Add<f64> for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: f64) -> ExtReal {
        self + ExtReal::Finite(rhs)
    }
}

/// Scaling by a nonnegative factor. `0 · (+∞)` is taken as `+∞` so that
/// indicator values are never silently erased.
impl Mul<ExtReal> for f64 {
    type Output = ExtReal;
    fn mul(self, rhs: ExtReal) -> ExtReal {
        debug_assert!(self >= 0.0);
        match rhs {
            ExtReal::Finite(v) => ExtReal::Finite(self * v),
            ExtReal::PosInf => ExtReal::PosInf,
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::PosInf => f.write_str("+inf"),
        }
    }
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(v) => s.serialize_f64(*v),
            ExtReal::PosInf => s.serialize_str("+inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = ExtReal;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a finite number or the string \"+inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<ExtReal, E> {
                Ok(ExtReal::Finite(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<ExtReal, E> {
                Ok(ExtReal::Finite(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<ExtReal, E> {
                Ok(ExtReal::Finite(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<ExtReal, E> {
                if v == "+inf" {
                    Ok(ExtReal::PosInf)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_absorbs_infinity() {
        assert_eq!(ExtReal::Finite(1.0) + ExtReal::Finite(2.0), ExtReal::Finite(3.0));
        assert_eq!(ExtReal::Finite(1.0) + ExtReal::PosInf, ExtReal::PosInf);
        assert_eq!(ExtReal::PosInf + 5.0, ExtReal::PosInf);
        assert_eq!(3.0 * ExtReal::PosInf, ExtReal::PosInf);
        assert_eq!(2.0 * ExtReal::Finite(1.5), ExtReal::Finite(3.0));
    }

    #[test]
    fn json_encoding() {
        assert_eq!(serde_json::to_string(&ExtReal::PosInf).unwrap(), "\"+inf\"");
        assert_eq!(serde_json::to_string(&ExtReal::Finite(2.5)).unwrap(), "2.5");
        let back: ExtReal = serde_json::from_str("\"+inf\"").unwrap();
        assert_eq!(back, ExtReal::PosInf);
        let back: ExtReal = serde_json::from_str("-3").unwrap();
        assert_eq!(back, ExtReal::Finite(-3.0));
        assert!(serde_json::from_str::<ExtReal>("\"-inf\"").is_err());
    }
}
