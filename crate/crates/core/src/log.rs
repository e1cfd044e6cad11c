use std::collections::HashMap;
use std::io::{self, Write};
use std::sync::{Arc, RwLock};

use chrono::NaiveDateTime;

use crate::event::Event;

#[derive(Default)]
struct Inner {
    records: Vec<Event>,
    by_key: HashMap<(String, String), Vec<usize>>,
}

/// Append-only event store shared between a model and its readers.
///
/// Clones share the same records. Readers always see a consistent prefix of
/// the appends.
#[derive(Clone, Default)]
pub struct EventLog {
    inner: Arc<RwLock<Inner>>,
}

/// Filter for [`EventLog::query`]. Unset fields match everything; time
/// bounds are inclusive.
#[derive(Debug, Clone, Default)]
pub struct Query {
    pub source: Option<String>,
    pub id: Option<String>,
    pub from: Option<NaiveDateTime>,
    pub to: Option<NaiveDateTime>,
}

impl Query {
    pub fn new() -> Self {
        Query::default()
    }

    pub fn source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }

    pub fn id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn from(mut self, t0: NaiveDateTime) -> Self {
        self.from = Some(t0);
        self
    }

    pub fn to(mut self, t1: NaiveDateTime) -> Self {
        self.to = Some(t1);
        self
    }

    pub fn matches(&self, e: &Event) -> bool {
        self.source.as_ref().is_none_or(|s| *s == e.source)
            && self.id.as_ref().is_none_or(|i| *i == e.id)
            && self.from.is_none_or(|t0| e.timestamp >= t0)
            && self.to.is_none_or(|t1| e.timestamp <= t1)
    }
}

impl EventLog {
    pub fn new() -> Self {
        EventLog::default()
    }

    pub fn append(&self, event: Event) {
        let mut inner = self.inner.write().expect("event log poisoned");
        let index = inner.records.len();
        inner.by_key.entry((event.source.clone(), event.id.clone())).or_default().push(index);
        inner.records.push(event);
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("event log poisoned").records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn snapshot(&self) -> Vec<Event> {
        self.inner.read().expect("event log poisoned").records.clone()
    }

    /// Matching events in append order.
    pub fn query(&self, q: &Query) -> Vec<Event> {
        let inner = self.inner.read().expect("event log poisoned");
        if let (Some(from), Some(to)) = (q.from, q.to) {
            if from > to {
                return Vec::new();
            }
        }
        match (&q.source, &q.id) {
            (Some(source), Some(id)) => inner
                .by_key
                .get(&(source.clone(), id.clone()))
                .map(|idx| idx.iter().map(|&i| &inner.records[i]).filter(|e| q.matches(e)).cloned().collect())
                .unwrap_or_default(),
            _ => inner.records.iter().filter(|e| q.matches(e)).cloned().collect(),
        }
    }

    /// Writes one canonical event line per record.
    pub fn write_lines<W: Write>(&self, mut out: W) -> io::Result<()> {
        let inner = self.inner.read().expect("event log poisoned");
        for e in &inner.records {
            writeln!(out, "{e}")?;
        }
        out.flush()
    }
}

impl std::fmt::Debug for EventLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EventLog").field("len", &self.len()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::parse_timestamp;

    fn ev(id: &str, source: &str, ts: &str) -> Event {
        Event::new(id, source, parse_timestamp(ts).unwrap()).with(id, 1.0)
    }

    #[test]
    fn query_filters_in_append_order() {
        let log = EventLog::new();
        log.append(ev("DOX", "SimSenO", "2008-08-23 01:30:05"));
        log.append(ev("NOX", "SimSenN", "2008-08-23 01:30:06"));
        log.append(ev("DOX", "SimSenO", "2008-08-23 02:00:05"));

        let dox = log.query(&Query::new().id("DOX"));
        assert_eq!(dox.len(), 2);
        assert!(dox[0].timestamp < dox[1].timestamp);
        assert!(log.query(&Query::new().source("SimSenO").id("TEM")).is_empty());

        let t = parse_timestamp("2008-08-23 01:45:00").unwrap();
        assert!(log.query(&Query::new().from(t).to(t)).is_empty());
        let t = parse_timestamp("2008-08-23 01:30:06").unwrap();
        assert_eq!(log.query(&Query::new().from(t).to(t)).len(), 1);
        assert_eq!(log.query(&Query::new().source("SimSenO").id("DOX").from(t)).len(), 1);
    }

    #[test]
    fn clones_share_records() {
        let log = EventLog::new();
        let reader = log.clone();
        log.append(ev("DOX", "SimSenO", "2008-08-23 01:30:05"));
        assert_eq!(reader.len(), 1);
        let mut buf = Vec::new();
        reader.write_lines(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "DOX,SimSenO,2008-08-23 01:30:05,{\"DOX\":1.0}\n");
    }
}
