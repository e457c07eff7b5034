//! Runtime values that contract expressions evaluate over.
//!
//! Decimals are IEEE binary64 so that NaN and the infinities can be bound and
//! tested. On the interchange format (JSON) the non-finite decimals travel as
//! the sentinel texts `"NaN"`, `"Infinity"` and `"-Infinity"`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Deserializer, MapAccess, SeqAccess, Visitor};
use serde::ser::{SerializeMap, SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

pub const NAN_SENTINEL: &str = "NaN";
pub const POS_INF_SENTINEL: &str = "Infinity";
pub const NEG_INF_SENTINEL: &str = "-Infinity";

/// Largest magnitude at which every integer is exactly representable as f64.
const EXACT_F64_INT: i64 = 1 << 53;

#[derive(Debug, Clone, Default)]
pub enum Value {
    #[default]
    Null,
    Bool(bool),
    Int(i64),
    Decimal(f64),
    Text(String),
    List(Vec<Value>),
    Map(BTreeMap<String, Value>),
}

/// Semantic parameter types a subject unit can declare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticType {
    Int,
    Decimal,
    Text,
    Bool,
}

impl fmt::Display for SemanticType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SemanticType::Int => "int",
            SemanticType::Decimal => "decimal",
            SemanticType::Text => "text",
            SemanticType::Bool => "bool",
        })
    }
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Null => "null",
            Value::Bool(_) => "boolean",
            Value::Int(_) => "integer",
            Value::Decimal(_) => "decimal",
            Value::Text(_) => "text",
            Value::List(_) => "list",
            Value::Map(_) => "map",
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Value::Int(_) | Value::Decimal(_))
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    /// Bitwise identity: unlike `==` semantics in the contract language, two
    /// NaNs with the same payload are identical and `0.0` differs from `-0.0`.
    pub fn identical(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Null, Value::Null) => true,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Decimal(a), Value::Decimal(b)) => a.to_bits() == b.to_bits(),
            (Value::Text(a), Value::Text(b)) => a == b,
            (Value::List(a), Value::List(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.identical(y))
            }
            (Value::Map(a), Value::Map(b)) => {
                a.len() == b.len()
                    && a.iter()
                        .zip(b)
                        .all(|((ka, va), (kb, vb))| ka == kb && va.identical(vb))
            }
            _ => false,
        }
    }

    /// Does this value inhabit the given semantic type? `Null` is accepted for
    /// text, mirroring nullable reference types on the generated-code side.
    pub fn conforms_to(&self, ty: SemanticType) -> bool {
        match (ty, self) {
            (SemanticType::Int, Value::Int(_)) => true,
            (SemanticType::Decimal, Value::Int(_) | Value::Decimal(_)) => true,
            (SemanticType::Text, Value::Text(_) | Value::Null) => true,
            (SemanticType::Bool, Value::Bool(_)) => true,
            // Sentinel texts decode to non-finite decimals.
            (SemanticType::Decimal, Value::Text(t)) => sentinel_decimal(t).is_some(),
            _ => false,
        }
    }

    /// Converts a freshly decoded value into the representation the declared
    /// type calls for. Returns `None` when the value does not conform.
    pub fn coerce(self, ty: SemanticType) -> Option<Value> {
        match (ty, self) {
            (SemanticType::Decimal, Value::Int(n)) => Some(Value::Decimal(n as f64)),
            (SemanticType::Decimal, Value::Text(t)) => sentinel_decimal(&t).map(Value::Decimal),
            (SemanticType::Text, Value::Decimal(d)) if !d.is_finite() => {
                Some(Value::Text(decimal_sentinel(d).to_string()))
            }
            (ty, v) if v.conforms_to(ty) => Some(v),
            _ => None,
        }
    }
}

fn sentinel_decimal(text: &str) -> Option<f64> {
    match text {
        NAN_SENTINEL => Some(f64::NAN),
        POS_INF_SENTINEL => Some(f64::INFINITY),
        NEG_INF_SENTINEL => Some(f64::NEG_INFINITY),
        _ => None,
    }
}

fn decimal_sentinel(d: f64) -> &'static str {
    if d.is_nan() {
        NAN_SENTINEL
    } else if d > 0.0 {
        POS_INF_SENTINEL
    } else {
        NEG_INF_SENTINEL
    }
}

/// Formats a finite f64 so that it re-reads as a decimal (always carries a
/// `.`, `e` or `E`) and round-trips bit-exactly.
pub fn format_decimal(d: f64) -> String {
    if !d.is_finite() {
        return decimal_sentinel(d).to_string();
    }
    let s = format!("{d:?}");
    if s.contains(['.', 'e', 'E']) {
        s
    } else {
        format!("{s}.0")
    }
}

/// Exact comparison between an integer and a decimal. `None`
/// means unordered (NaN on the decimal side).
pub fn cmp_int_decimal(i: i64, d: f64) -> Option<Ordering> {
    if d.is_nan() {
        return None;
    }
    if d.is_infinite() {
        return Some(if d > 0.0 { Ordering::Less } else { Ordering::Greater });
    }
    if (-EXACT_F64_INT..=EXACT_F64_INT).contains(&i) {
        return (i as f64).partial_cmp(&d);
    }
    // |i| > 2^53: compare by sign and magnitude without rounding i.
    const TWO_63: f64 = 9_223_372_036_854_775_808.0;
    if d >= TWO_63 {
        return Some(Ordering::Less);
    }
    if d < -TWO_63 {
        return Some(Ordering::Greater);
    }
    let whole = d.trunc();
    // |whole| < 2^63 (or exactly -2^63), so the conversion is exact.
    let whole_int = whole as i64;
    match i.cmp(&whole_int) {
        Ordering::Equal => {
            let frac = d - whole;
            Some(if frac > 0.0 {
                Ordering::Less
            } else if frac < 0.0 {
                Ordering::Greater
            } else {
                Ordering::Equal
            })
        }
        other => Some(other),
    }
}

/// Numeric ordering under the contract language's promotion rules.
pub fn numeric_cmp(a: &Value, b: &Value) -> Option<Option<Ordering>> {
    Some(match (a, b) {
        (Value::Int(x), Value::Int(y)) => Some(x.cmp(y)),
        (Value::Decimal(x), Value::Decimal(y)) => x.partial_cmp(y),
        (Value::Int(x), Value::Decimal(y)) => cmp_int_decimal(*x, *y),
        (Value::Decimal(x), Value::Int(y)) => cmp_int_decimal(*y, *x).map(Ordering::reverse),
        _ => return None,
    })
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("null"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(n) => write!(f, "{n}"),
            Value::Decimal(d) => f.write_str(&format_decimal(*d)),
            Value::Text(t) => write!(f, "{t:?}"),
            Value::List(items) => {
                f.write_str("[")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str("]")
            }
            Value::Map(entries) => {
                f.write_str("{")?;
                for (i, (k, v)) in entries.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{k:?}: {v}")?;
                }
                f.write_str("}")
            }
        }
    }
}

/// Structural equality where decimals compare bitwise (so a NaN witness
/// equals itself). Contract-language `==` lives in the evaluator.
impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.identical(other)
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Null => serializer.serialize_unit(),
            Value::Bool(b) => serializer.serialize_bool(*b),
            Value::Int(n) => serializer.serialize_i64(*n),
            Value::Decimal(d) if d.is_finite() => serializer.serialize_f64(*d),
            Value::Decimal(d) => serializer.serialize_str(decimal_sentinel(*d)),
            Value::Text(t) => serializer.serialize_str(t),
            Value::List(items) => {
                let mut seq = serializer.serialize_seq(Some(items.len()))?;
                for item in items {
                    seq.serialize_element(item)?;
                }
                seq.end()
            }
            Value::Map(entries) => {
                let mut map = serializer.serialize_map(Some(entries.len()))?;
                for (k, v) in entries {
                    map.serialize_entry(k, v)?;
                }
                map.end()
            }
        }
    }
}

struct ValueVisitor;

impl<'de> Visitor<'de> for ValueVisitor {
    type Value = Value;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a contract value")
    }

    fn visit_unit<E: de::Error>(self) -> Result<Value, E> {
        Ok(Value::Null)
    }

    fn visit_none<E: de::Error>(self) -> Result<Value, E> {
        Ok(Value::Null)
    }

    fn visit_bool<E: de::Error>(self, v: bool) -> Result<Value, E> {
        Ok(Value::Bool(v))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Value, E> {
        Ok(Value::Int(v))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Value, E> {
        match i64::try_from(v) {
            Ok(n) => Ok(Value::Int(n)),
            Err(_) => Ok(Value::Decimal(v as f64)),
        }
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Value, E> {
        Ok(Value::Decimal(v))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Value, E> {
        Ok(match sentinel_decimal(v) {
            Some(d) => Value::Decimal(d),
            None => Value::Text(v.to_string()),
        })
    }

    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Value, A::Error> {
        let mut items = Vec::new();
        while let Some(item) = seq.next_element()? {
            items.push(item);
        }
        Ok(Value::List(items))
    }

    fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Value, A::Error> {
        let mut entries = BTreeMap::new();
        while let Some((k, v)) = map.next_entry::<String, Value>()? {
            entries.insert(k, v);
        }
        Ok(Value::Map(entries))
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        deserializer.deserialize_any(ValueVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentinels_round_trip_through_json() {
        for d in [f64::NAN, f64::INFINITY, f64::NEG_INFINITY, -0.0, 100.0, 1e12] {
            let text = serde_json::to_string(&Value::Decimal(d)).unwrap();
            let back: Value = serde_json::from_str(&text).unwrap();
            assert!(back.identical(&Value::Decimal(d)) || (d.is_nan() && matches!(back, Value::Decimal(x) if x.is_nan())), "{text}");
        }
        assert_eq!(serde_json::to_string(&Value::Decimal(f64::NAN)).unwrap(), "\"NaN\"");
        assert_eq!(serde_json::to_string(&Value::Decimal(f64::NEG_INFINITY)).unwrap(), "\"-Infinity\"");
    }

    #[test]
    fn integers_and_decimals_stay_distinct() {
        let v: Value = serde_json::from_str("[1, 1.0]").unwrap();
        assert_eq!(v, Value::List(vec![Value::Int(1), Value::Decimal(1.0)]));
    }

    #[test]
    fn coercion_follows_declared_type() {
        assert_eq!(Value::Int(3).coerce(SemanticType::Decimal), Some(Value::Decimal(3.0)));
        assert_eq!(
            Value::Decimal(f64::INFINITY).coerce(SemanticType::Text),
            Some(Value::Text("Infinity".into()))
        );
        assert_eq!(Value::Decimal(1.5).coerce(SemanticType::Int), None);
        assert_eq!(Value::Null.coerce(SemanticType::Text), Some(Value::Null));
        assert_eq!(Value::Null.coerce(SemanticType::Int), None);
    }

    #[test]
    fn large_integers_compare_exactly_against_decimals() {
        let big = (1i64 << 53) + 1;
        // As f64, `big` rounds to 2^53, which would claim equality.
        assert_eq!(cmp_int_decimal(big, 9_007_199_254_740_992.0), Some(Ordering::Greater));
        assert_eq!(cmp_int_decimal(i64::MAX, 9.223372036854775807e18), Some(Ordering::Less));
        assert_eq!(cmp_int_decimal(i64::MIN, -9.223372036854775808e18), Some(Ordering::Equal));
        assert_eq!(cmp_int_decimal(-big, -9_007_199_254_740_992.0), Some(Ordering::Less));
        assert_eq!(cmp_int_decimal(5, f64::NAN), None);
        assert_eq!(cmp_int_decimal(i64::MAX, f64::INFINITY), Some(Ordering::Less));
        assert_eq!(cmp_int_decimal(3, 2.5), Some(Ordering::Greater));
    }

    #[test]
    fn decimal_formatting_round_trips() {
        for d in [0.0, -0.0, 1e12, 1e300, 0.1, 5e-324, -2.5] {
            let s = format_decimal(d);
            assert!(s.contains(['.', 'e']), "{s}");
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), d.to_bits());
        }
    }
}
