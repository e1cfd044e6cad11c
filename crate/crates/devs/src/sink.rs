use std::fmt::Debug;
use std::io::Write;

use crate::time::Time;

/// One message emitted by an atomic model (or injected at the root), as seen
/// by trace sinks.
#[derive(Debug, Clone, Copy)]
pub struct TraceRecord<'a, M> {
    pub time: Time,
    /// Full path of the emitting atomic model, or the root name for
    /// injected messages.
    pub source: &'a str,
    pub port: &'a str,
    pub message: &'a M,
}

/// Receives every routed message in `(time, source, port)` order.
pub trait TraceSink<M> {
    fn record(&mut self, record: &TraceRecord<'_, M>);
}

#[derive(Debug, Clone, PartialEq)]
pub struct OwnedRecord<M> {
    pub time: Time,
    pub source: String,
    pub port: String,
    pub message: M,
}

/// Keeps every record in memory.
#[derive(Debug, Clone)]
pub struct MemorySink<M> {
    pub records: Vec<OwnedRecord<M>>,
}

impl<M> Default for MemorySink<M> {
    fn default() -> Self {
        MemorySink { records: Vec::new() }
    }
}

impl<M> MemorySink<M> {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<M: Clone> TraceSink<M> for MemorySink<M> {
    fn record(&mut self, r: &TraceRecord<'_, M>) {
        self.records.push(OwnedRecord {
            time: r.time,
            source: r.source.to_owned(),
            port: r.port.to_owned(),
            message: r.message.clone(),
        });
    }
}

/// Writes one `time_us,source,port,message` line per record, using the
/// message's `Debug` form.
pub struct LineSink<W: Write> {
    writer: W,
    error: Option<std::io::Error>,
}

impl<W: Write> LineSink<W> {
    pub fn new(writer: W) -> Self {
        LineSink { writer, error: None }
    }

    /// Returns the writer, or the first I/O error hit while recording.
    pub fn finish(mut self) -> std::io::Result<W> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.writer.flush()?;
        Ok(self.writer)
    }
}

impl<M: Debug, W: Write> TraceSink<M> for LineSink<W> {
    fn record(&mut self, r: &TraceRecord<'_, M>) {
        if self.error.is_some() {
            return;
        }
        if let Err(e) = writeln!(self.writer, "{},{},{},{:?}", r.time.as_micros(), r.source, r.port, r.message) {
            self.error = Some(e);
        }
    }
}

/// Counts records without storing them.
#[derive(Debug, Default, Clone, Copy)]
pub struct CountingSink {
    pub count: u64,
}

impl<M> TraceSink<M> for CountingSink {
    fn record(&mut self, _r: &TraceRecord<'_, M>) {
        self.count += 1;
    }
}
