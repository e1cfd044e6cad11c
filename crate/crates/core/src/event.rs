use std::fmt;

use chrono::{NaiveDateTime, Timelike};
use indexmap::IndexMap;
use serde::de::{self, Deserialize, Deserializer, MapAccess, Visitor};

/// Timestamp layout used in event lines, scenario files and logs.
pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// A payload value: events only carry numbers and strings.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Number(f64),
    Text(String),
}

impl Value {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(x) => Some(*x),
            Value::Text(_) => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            Value::Number(_) => None,
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Number(x)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_owned())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Text(s)
    }
}

/// Ordered key-value payload. Keys keep their insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Payload(IndexMap<String, Value>);

impl Payload {
    pub fn new() -> Self {
        Payload(IndexMap::new())
    }

    /// Inserts or replaces a key, keeping the position of an existing key.
    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<Value>) -> &mut Self {
        self.0.insert(key.into(), value.into());
        self
    }

    pub fn with(mut self, key: impl Into<String>, value: impl Into<Value>) -> Self {
        self.insert(key, value);
        self
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.0.get(key)
    }

    pub fn number(&self, key: &str) -> Option<f64> {
        self.0.get(key).and_then(Value::as_number)
    }

    pub fn text(&self, key: &str) -> Option<&str> {
        self.0.get(key).and_then(Value::as_text)
    }

    pub fn contains_key(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<K: Into<String>, V: Into<Value>> FromIterator<(K, V)> for Payload {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        let mut p = Payload::new();
        for (k, v) in iter {
            p.insert(k, v);
        }
        p
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ValueVisitor;

        impl Visitor<'_> for ValueVisitor {
            type Value = Value;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or a string")
            }
            fn visit_f64<E: de::Error>(self, x: f64) -> Result<Value, E> {
                if x.is_finite() {
                    Ok(Value::Number(x))
                } else {
                    Err(E::custom(format!("non-finite number {x}")))
                }
            }
            fn visit_i64<E: de::Error>(self, x: i64) -> Result<Value, E> {
                Ok(Value::Number(x as f64))
            }
            fn visit_u64<E: de::Error>(self, x: u64) -> Result<Value, E> {
                Ok(Value::Number(x as f64))
            }
            fn visit_str<E: de::Error>(self, s: &str) -> Result<Value, E> {
                Ok(Value::Text(s.to_owned()))
            }
            fn visit_string<E: de::Error>(self, s: String) -> Result<Value, E> {
                Ok(Value::Text(s))
            }
        }

        deserializer.deserialize_any(ValueVisitor)
    }
}

impl<'de> Deserialize<'de> for Payload {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct PayloadVisitor;

        impl<'de> Visitor<'de> for PayloadVisitor {
            type Value = Payload;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a payload object")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Payload, A::Error> {
                let mut out = IndexMap::new();
                while let Some((key, value)) = map.next_entry::<String, Value>()? {
                    if out.contains_key(&key) {
                        return Err(de::Error::custom(format!("duplicate key `{key}`")));
                    }
                    out.insert(key, value);
                }
                Ok(Payload(out))
            }
        }

        deserializer.deserialize_map(PayloadVisitor)
    }
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (key, value)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}:", serde_json::Value::from(key.as_str()))?;
            match value {
                Value::Number(x) => match serde_json::Number::from_f64(*x) {
                    Some(n) => write!(f, "{n}")?,
                    None => write!(f, "{x}")?,
                },
                Value::Text(s) => write!(f, "{}", serde_json::Value::from(s.as_str()))?,
            }
        }
        f.write_str("}")
    }
}

/// The universal message exchanged by every model.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub id: String,
    pub source: String,
    pub timestamp: NaiveDateTime,
    pub payload: Payload,
}

impl Event {
    /// Builds an event; the timestamp is truncated to whole seconds.
    pub fn new(id: impl Into<String>, source: impl Into<String>, timestamp: NaiveDateTime) -> Self {
        Event {
            id: id.into(),
            source: source.into(),
            timestamp: truncate_secs(timestamp),
            payload: Payload::new(),
        }
    }

    pub fn with(mut self, key: impl Into<String>, value: impl Into<Value>) -> Self {
        self.payload.insert(key, value);
        self
    }

    pub fn with_payload(mut self, payload: Payload) -> Self {
        self.payload = payload;
        self
    }

    /// Numeric payload entry named after the event id, as carried by sensor readings.
    pub fn reading(&self) -> Option<f64> {
        self.payload.number(&self.id)
    }

    /// Checks the structural invariants that keep an event serializable.
    pub fn validate(&self) -> Result<(), String> {
        for (what, field) in [("id", &self.id), ("source", &self.source)] {
            if field.is_empty() {
                return Err(format!("empty {what}"));
            }
            if field.trim() != field || field.contains(',') || field.contains('\n') {
                return Err(format!("{what} `{field}` contains a separator or surrounding whitespace"));
            }
        }
        if let Some((key, _)) = self.payload.iter().find(|(_, v)| matches!(v, Value::Number(x) if !x.is_finite())) {
            return Err(format!("payload key `{key}` is not finite"));
        }
        Ok(())
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.id, self.source, self.timestamp.format(TIMESTAMP_FORMAT), self.payload)
    }
}

pub(crate) fn truncate_secs(t: NaiveDateTime) -> NaiveDateTime {
    t.with_nanosecond(0).unwrap_or(t)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime, String> {
    NaiveDateTime::parse_from_str(s.trim(), TIMESTAMP_FORMAT)
        .map_err(|e| format!("unparsable timestamp `{}`: {e}", s.trim()))
}

/// Parses `id,source,timestamp,{payload}`. Single- and double-quoted
/// payload objects are both accepted.
pub fn parse_event_line(line: &str) -> Result<Event, ParseError> {
    parse_event_line_at(line, 1)
}

/// Like [`parse_event_line`], reporting errors against `line_no`.
pub fn parse_event_line_at(line: &str, line_no: usize) -> Result<Event, ParseError> {
    let err = |message: String| ParseError { line: line_no, message };
    let mut fields = line.trim().splitn(4, ',');
    let mut next = |name: &str| {
        fields
            .next()
            .map(str::trim)
            .filter(|f| !f.is_empty())
            .ok_or_else(|| err(format!("missing {name} field")))
    };
    let id = next("id")?;
    let source = next("source")?;
    let timestamp = parse_timestamp(next("timestamp")?).map_err(err)?;
    let raw_payload = next("payload")?;
    if !raw_payload.starts_with('{') {
        return Err(err(format!("payload must be an object, got `{raw_payload}`")));
    }
    let payload: Payload = json5::from_str(raw_payload).map_err(|e| err(format!("malformed payload: {e}")))?;
    let event = Event { id: id.to_owned(), source: source.to_owned(), timestamp, payload };
    event.validate().map_err(err)?;
    Ok(event)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_single_quoted_logged_reading() {
        let e = parse_event_line("DOX,SimSenO,2008-08-23 01:30:05,{'Lat':47.5050,'Lon':-122.2150,'Depth':0.0,'DOX':11.8}")
            .unwrap();
        assert_eq!(e.id, "DOX");
        assert_eq!(e.source, "SimSenO");
        assert_eq!(e.timestamp.to_string(), "2008-08-23 01:30:05");
        assert_eq!(e.payload.keys().collect::<Vec<_>>(), ["Lat", "Lon", "Depth", "DOX"]);
        assert_eq!(e.reading(), Some(11.8));
        assert_eq!(e.to_string(), r#"DOX,SimSenO,2008-08-23 01:30:05,{"Lat":47.505,"Lon":-122.215,"Depth":0.0,"DOX":11.8}"#);
    }

    #[test]
    fn parses_irradiance_with_spaces() {
        let e = parse_event_line("IRA,VirSenI,2008-08-23 08:30:02,{'Lat':47.5000,'Lon':-122.2200,'IRA': 0.60}").unwrap();
        assert_eq!(e.reading(), Some(0.6));
    }

    #[test]
    fn empty_payload() {
        let e = parse_event_line("START,file,2008-08-23 00:00:00,{}").unwrap();
        assert!(e.payload.is_empty());
        assert_eq!(e.to_string(), "START,file,2008-08-23 00:00:00,{}");
    }

    #[test]
    fn text_values_and_integers() {
        let e = parse_event_line(
            "DOX,SimSenO,2008-08-23 00:00:00,{'id':'DOX','description':'Oxigen Sensor(mg/L)','delay':5,'max':30.0}",
        )
        .unwrap();
        assert_eq!(e.payload.text("description"), Some("Oxigen Sensor(mg/L)"));
        assert_eq!(e.payload.number("delay"), Some(5.0));
    }

    #[test]
    fn rejects_malformed_lines() {
        for bad in [
            "DOX,SimSenO,2008-08-23 00:00:00",
            "DOX,SimSenO,yesterday,{}",
            "DOX,,2008-08-23 00:00:00,{}",
            "DOX,SimSenO,2008-08-23 00:00:00,{'a':1,'a':2}",
            "DOX,SimSenO,2008-08-23 00:00:00,{'a':[1]}",
            "DOX,SimSenO,2008-08-23 00:00:00,{'a':true}",
            "DOX,SimSenO,2008-08-23 00:00:00,{'a':1",
            "DOX,SimSenO,2008-08-23 00:00:00,{'a':NaN}",
            "DOX,SimSenO,2008-08-23 00:00:00,[1]",
        ] {
            assert!(parse_event_line(bad).is_err(), "{bad}");
        }
        assert_eq!(parse_event_line_at("x", 17).unwrap_err().line, 17);
    }
}
