// Copyright 2020 Alibaba Group Holding Limited.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Typed scalar property values.
//!
//! Comparisons are tag-strict: comparing two non-null values of different
//! types is an error rather than a coercion. `Null` never satisfies an
//! equality or ordering test, but for grouping purposes it forms its own key,
//! which is why [`PropertyValue`] also implements a total structural order.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropertyType {
    Null,
    Int,
    Float,
    Text,
    Bool,
    Date,
}

impl PropertyType {
    /// Parses the type half of a `name:type` CSV header cell.
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.trim().to_ascii_lowercase().as_str() {
            "int" | "integer" | "long" | "i64" => PropertyType::Int,
            "float" | "double" | "f64" => PropertyType::Float,
            "string" | "text" | "str" => PropertyType::Text,
            "bool" | "boolean" => PropertyType::Bool,
            "date" => PropertyType::Date,
            _ => return None,
        })
    }

    pub fn is_orderable(self) -> bool {
        matches!(
            self,
            PropertyType::Int | PropertyType::Float | PropertyType::Text | PropertyType::Date
        )
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, PropertyType::Int | PropertyType::Float)
    }
}

impl fmt::Display for PropertyType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PropertyType::Null => "null",
            PropertyType::Int => "int",
            PropertyType::Float => "float",
            PropertyType::Text => "string",
            PropertyType::Bool => "bool",
            PropertyType::Date => "date",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Default)]
pub enum PropertyValue {
    #[default]
    Null,
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
    Date(NaiveDate),
}

impl PropertyValue {
    pub fn tag(&self) -> PropertyType {
        match self {
            PropertyValue::Null => PropertyType::Null,
            PropertyValue::Int(_) => PropertyType::Int,
            PropertyValue::Float(_) => PropertyType::Float,
            PropertyValue::Text(_) => PropertyType::Text,
            PropertyValue::Bool(_) => PropertyType::Bool,
            PropertyValue::Date(_) => PropertyType::Date,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, PropertyValue::Null)
    }

    /// Parses a CSV cell according to a declared column type. Empty cells are null.
    pub fn parse_typed(ty: PropertyType, raw: &str) -> std::result::Result<Self, String> {
        if raw.is_empty() {
            return Ok(PropertyValue::Null);
        }
        match ty {
            PropertyType::Null => Ok(PropertyValue::Null),
            PropertyType::Int => raw
                .trim()
                .parse::<i64>()
                .map(PropertyValue::Int)
                .map_err(|e| format!("cannot parse `{raw}` as int: {e}")),
            PropertyType::Float => raw
                .trim()
                .parse::<f64>()
                .map(PropertyValue::Float)
                .map_err(|e| format!("cannot parse `{raw}` as float: {e}")),
            PropertyType::Text => Ok(PropertyValue::Text(raw.to_string())),
            PropertyType::Bool => match raw.trim().to_ascii_lowercase().as_str() {
                "true" | "1" => Ok(PropertyValue::Bool(true)),
                "false" | "0" => Ok(PropertyValue::Bool(false)),
                _ => Err(format!("cannot parse `{raw}` as bool")),
            },
            PropertyType::Date => NaiveDate::parse_from_str(raw.trim(), "%Y-%m-%d")
                .map(PropertyValue::Date)
                .map_err(|e| format!("cannot parse `{raw}` as date: {e}")),
        }
    }

    /// Parses an untyped literal as written in scripts: integers, floats,
    /// `true`/`false`, `null`, ISO dates, optionally quoted text.
    pub fn parse_literal(raw: &str) -> Self {
        let s = raw.trim();
        if s.eq_ignore_ascii_case("null") {
            return PropertyValue::Null;
        }
        if s.len() >= 2 && s.starts_with('"') && s.ends_with('"') {
            return PropertyValue::Text(s[1..s.len() - 1].to_string());
        }
        if let Ok(i) = s.parse::<i64>() {
            return PropertyValue::Int(i);
        }
        if let Ok(f) = s.parse::<f64>() {
            return PropertyValue::Float(f);
        }
        if s == "true" || s == "false" {
            return PropertyValue::Bool(s == "true");
        }
        if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
            return PropertyValue::Date(d);
        }
        PropertyValue::Text(s.to_string())
    }

    /// Tag-strict ordering. `Ok(None)` when either side is null.
    pub fn compare(&self, other: &PropertyValue) -> Result<Option<Ordering>> {
        use PropertyValue::*;
        match (self, other) {
            (Null, _) | (_, Null) => Ok(None),
            (Int(a), Int(b)) => Ok(Some(a.cmp(b))),
            (Float(a), Float(b)) => Ok(Some(a.total_cmp(b))),
            (Text(a), Text(b)) => Ok(Some(a.cmp(b))),
            (Date(a), Date(b)) => Ok(Some(a.cmp(b))),
            (Bool(_), Bool(_)) => Err(Error::TypeMismatch("bool values are not orderable".into())),
            (a, b) => Err(Error::TypeMismatch(format!(
                "cannot compare {} with {}",
                a.tag(),
                b.tag()
            ))),
        }
    }

    /// Tag-strict equality where null equals nothing, including null.
    pub fn strict_eq(&self, other: &PropertyValue) -> Result<bool> {
        use PropertyValue::*;
        match (self, other) {
            (Null, _) | (_, Null) => Ok(false),
            (Int(a), Int(b)) => Ok(a == b),
            (Float(a), Float(b)) => Ok(a == b),
            (Text(a), Text(b)) => Ok(a == b),
            (Bool(a), Bool(b)) => Ok(a == b),
            (Date(a), Date(b)) => Ok(a == b),
            (a, b) => Err(Error::TypeMismatch(format!(
                "cannot compare {} with {}",
                a.tag(),
                b.tag()
            ))),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            PropertyValue::Int(i) => Some(*i as f64),
            PropertyValue::Float(f) => Some(*f),
            PropertyValue::Date(d) => Some(d.num_days_from_ce() as f64),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            PropertyValue::Text(s) => Some(s),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            PropertyValue::Null => 0,
            PropertyValue::Bool(_) => 1,
            PropertyValue::Int(_) => 2,
            PropertyValue::Float(_) => 3,
            PropertyValue::Date(_) => 4,
            PropertyValue::Text(_) => 5,
        }
    }
}

// Structural equality/order, used for group keys and deterministic sorting.
// Engine-level comparisons go through `compare`/`strict_eq`.
impl PartialEq for PropertyValue {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for PropertyValue {}

impl PartialOrd for PropertyValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PropertyValue {
    fn cmp(&self, other: &Self) -> Ordering {
        use PropertyValue::*;
        match (self, other) {
            (Null, Null) => Ordering::Equal,
            (Bool(a), Bool(b)) => a.cmp(b),
            (Int(a), Int(b)) => a.cmp(b),
            (Float(a), Float(b)) => a.total_cmp(b),
            (Date(a), Date(b)) => a.cmp(b),
            (Text(a), Text(b)) => a.cmp(b),
            (a, b) => a.rank().cmp(&b.rank()),
        }
    }
}

impl Hash for PropertyValue {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self {
            PropertyValue::Null => {}
            PropertyValue::Bool(b) => b.hash(state),
            PropertyValue::Int(i) => i.hash(state),
            PropertyValue::Float(f) => f.to_bits().hash(state),
            PropertyValue::Date(d) => d.hash(state),
            PropertyValue::Text(s) => s.hash(state),
        }
    }
}

impl fmt::Display for PropertyValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PropertyValue::Null => Ok(()),
            PropertyValue::Int(i) => write!(f, "{i}"),
            PropertyValue::Float(x) => write!(f, "{x}"),
            PropertyValue::Text(s) => f.write_str(s),
            PropertyValue::Bool(b) => write!(f, "{b}"),
            PropertyValue::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
        }
    }
}

impl From<i64> for PropertyValue {
    fn from(v: i64) -> Self {
        PropertyValue::Int(v)
    }
}

impl From<f64> for PropertyValue {
    fn from(v: f64) -> Self {
        PropertyValue::Float(v)
    }
}

impl From<&str> for PropertyValue {
    fn from(v: &str) -> Self {
        PropertyValue::Text(v.to_string())
    }
}

impl From<String> for PropertyValue {
    fn from(v: String) -> Self {
        PropertyValue::Text(v)
    }
}

impl From<bool> for PropertyValue {
    fn from(v: bool) -> Self {
        PropertyValue::Bool(v)
    }
}

impl From<NaiveDate> for PropertyValue {
    fn from(v: NaiveDate) -> Self {
        PropertyValue::Date(v)
    }
}

// JSON form: null, numbers, strings and booleans map onto themselves; dates are
// written as `{"date": "YYYY-MM-DD"}` so they never collide with text.
impl Serialize for PropertyValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PropertyValue::Null => s.serialize_unit(),
            PropertyValue::Int(i) => s.serialize_i64(*i),
            PropertyValue::Float(f) => s.serialize_f64(*f),
            PropertyValue::Text(t) => s.serialize_str(t),
            PropertyValue::Bool(b) => s.serialize_bool(*b),
            PropertyValue::Date(d) => {
                use serde::ser::SerializeMap;
                let mut m = s.serialize_map(Some(1))?;
                m.serialize_entry("date", &d.format("%Y-%m-%d").to_string())?;
                m.end()
            }
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ValueRepr {
    Null(()),
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
    Date { date: NaiveDate },
}

impl<'de> Deserialize<'de> for PropertyValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(match ValueRepr::deserialize(d)? {
            ValueRepr::Null(()) => PropertyValue::Null,
            ValueRepr::Bool(b) => PropertyValue::Bool(b),
            ValueRepr::Int(i) => PropertyValue::Int(i),
            ValueRepr::Float(f) => PropertyValue::Float(f),
            ValueRepr::Text(t) => PropertyValue::Text(t),
            ValueRepr::Date { date } => PropertyValue::Date(date),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn date(s: &str) -> PropertyValue {
        PropertyValue::Date(NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap())
    }

    #[test]
    fn mixed_tags_are_errors() {
        assert!(PropertyValue::Int(1).compare(&PropertyValue::Float(1.0)).is_err());
        assert!(PropertyValue::Int(1).strict_eq(&"1".into()).is_err());
        assert!(PropertyValue::Bool(true)
            .compare(&PropertyValue::Bool(false))
            .is_err());
    }

    #[test]
    fn null_equals_nothing() {
        assert!(!PropertyValue::Null.strict_eq(&PropertyValue::Null).unwrap());
        assert!(!PropertyValue::Null.strict_eq(&PropertyValue::Int(3)).unwrap());
        assert_eq!(PropertyValue::Null.compare(&PropertyValue::Int(3)).unwrap(), None);
    }

    #[test]
    fn typed_cells() {
        assert_eq!(
            PropertyValue::parse_typed(PropertyType::Date, "2020-01-31").unwrap(),
            date("2020-01-31")
        );
        assert!(PropertyValue::parse_typed(PropertyType::Int, "x1").is_err());
        assert!(PropertyValue::parse_typed(PropertyType::Int, "").unwrap().is_null());
    }

    #[test]
    fn literals() {
        assert_eq!(PropertyValue::parse_literal("12"), PropertyValue::Int(12));
        assert_eq!(PropertyValue::parse_literal("1.5"), PropertyValue::Float(1.5));
        assert_eq!(PropertyValue::parse_literal("RU"), PropertyValue::from("RU"));
        assert_eq!(PropertyValue::parse_literal("\"12\""), PropertyValue::from("12"));
        assert_eq!(PropertyValue::parse_literal("2022-02-24"), date("2022-02-24"));
    }

    #[test]
    fn json_forms() {
        let v: Vec<PropertyValue> =
            serde_json::from_str(r#"[null, 3, 2.5, "a", true, {"date": "2020-01-02"}]"#).unwrap();
        assert_eq!(
            v,
            vec![
                PropertyValue::Null,
                PropertyValue::Int(3),
                PropertyValue::Float(2.5),
                "a".into(),
                true.into(),
                date("2020-01-02"),
            ]
        );
        let back = serde_json::to_string(&v).unwrap();
        assert_eq!(back, r#"[null,3,2.5,"a",true,{"date":"2020-01-02"}]"#);
    }

    fn arb_value() -> impl Strategy<Value = PropertyValue> {
        prop_oneof![
            Just(PropertyValue::Null),
            any::<i64>().prop_map(PropertyValue::Int),
            (-1e12f64..1e12).prop_map(PropertyValue::Float),
            "[a-z]{0,6}".prop_map(PropertyValue::Text),
            any::<bool>().prop_map(PropertyValue::Bool),
            (1i32..700_000).prop_map(|d| PropertyValue::Date(
                NaiveDate::from_num_days_from_ce_opt(d).unwrap()
            )),
        ]
    }

    proptest! {
        #[test]
        fn json_round_trip(v in arb_value()) {
            let s = serde_json::to_string(&v).unwrap();
            let back: PropertyValue = serde_json::from_str(&s).unwrap();
            prop_assert_eq!(back, v);
        }
    }
}
