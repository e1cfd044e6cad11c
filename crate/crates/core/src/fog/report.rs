use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;

use super::analysis::{is_signal_reading, SignalStats};
use crate::event::{Event, TIMESTAMP_FORMAT};

/// Inclusive time window of a report; open ends cover the whole log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReportWindow {
    pub from: Option<NaiveDateTime>,
    pub to: Option<NaiveDateTime>,
}

impl ReportWindow {
    pub fn all() -> Self {
        ReportWindow::default()
    }

    pub fn contains(&self, t: NaiveDateTime) -> bool {
        self.from.is_none_or(|f| t >= f) && self.to.is_none_or(|e| t <= e)
    }

    /// Label used in report file names.
    pub fn label(&self) -> String {
        let fmt = |t: Option<NaiveDateTime>, open: &str| t.map_or(open.to_owned(), |t| t.format("%Y%m%dT%H%M%S").to_string());
        match (self.from, self.to) {
            (None, None) => "all".to_owned(),
            (f, t) => format!("{}-{}", fmt(f, "begin"), fmt(t, "end")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportBundle {
    pub signals: PathBuf,
    pub inference: PathBuf,
    pub usv: PathBuf,
    pub summary: PathBuf,
    pub signal_rows: usize,
    pub inference_rows: usize,
    pub usv_rows: usize,
    pub summary_rows: usize,
    pub notice: Option<String>,
}

impl ReportBundle {
    pub fn files(&self) -> [&Path; 4] {
        [&self.signals, &self.inference, &self.usv, &self.summary]
    }
}

fn num(p: &Event, key: &str) -> String {
    p.payload.number(key).map(|v| v.to_string()).unwrap_or_default()
}

fn ts(e: &Event) -> String {
    e.timestamp.format(TIMESTAMP_FORMAT).to_string()
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), String> {
    let mut w = csv::Writer::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    w.write_record(header).map_err(|e| e.to_string())?;
    for r in rows {
        w.write_record(r).map_err(|e| e.to_string())?;
    }
    w.flush().map_err(|e| format!("{}: {e}", path.display()))
}

/// Writes the plot-ready CSV files for the events of a fog log that fall in
/// `window`: sensor signals, inference evolution, USV status and per-signal
/// summary statistics.
pub fn build_report(events: &[Event], window: ReportWindow, scenario: &str, dir: &Path) -> Result<ReportBundle, String> {
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let label = window.label();
    let path = |kind: &str| dir.join(format!("{scenario}_{label}_{kind}.csv"));
    let events: Vec<&Event> = events.iter().filter(|e| window.contains(e.timestamp)).collect();

    let mut stats: BTreeMap<String, SignalStats> = BTreeMap::new();
    let mut signals = Vec::new();
    let mut inference = Vec::new();
    let mut usv = Vec::new();
    let mut power: Option<&Event> = None;
    for &e in &events {
        if e.id == "BLM" && e.payload.contains_key("R") {
            inference.push(vec![ts(e), num(e, "Detected"), num(e, "R"), num(e, "Lat"), num(e, "Lon"), num(e, "Photo"), num(e, "Breath")]);
        } else if e.id == "PWR" {
            power = Some(e);
        } else if e.id == "POS" {
            let pwr = power.map(|p| num(p, "PWR")).unwrap_or_default();
            usv.push(vec![ts(e), e.source.clone(), pwr, num(e, "Speed"), num(e, "Lat"), num(e, "Lon")]);
        } else if is_signal_reading(e) {
            let v = e.reading().expect("signal reading");
            stats.entry(e.id.clone()).or_default().add(v);
            signals.push(vec![ts(e), e.source.clone(), e.id.clone(), num(e, "Lat"), num(e, "Lon"), num(e, "Depth"), v.to_string()]);
        }
    }
    let summary: Vec<Vec<String>> = stats
        .iter()
        .map(|(k, s)| vec![k.clone(), s.count.to_string(), s.min.to_string(), s.max.to_string(), s.mean().to_string()])
        .collect();

    let bundle = ReportBundle {
        signals: path("signals"),
        inference: path("inference"),
        usv: path("usv"),
        summary: path("summary"),
        signal_rows: signals.len(),
        inference_rows: inference.len(),
        usv_rows: usv.len(),
        summary_rows: summary.len(),
        notice: events.is_empty().then(|| format!("no events in window {label}")),
    };
    write_csv(&bundle.signals, &["timestamp", "source", "id", "lat", "lon", "depth", "value"], &signals)?;
    write_csv(&bundle.inference, &["timestamp", "detected", "r", "lat", "lon", "photo", "breath"], &inference)?;
    write_csv(&bundle.usv, &["timestamp", "source", "power", "speed", "lat", "lon"], &usv)?;
    write_csv(&bundle.summary, &["signal", "count", "min", "max", "mean"], &summary)?;
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::parse_event_line;

    #[test]
    fn constant_series_summary_and_empty_window() {
        let dir = tempfile::tempdir().unwrap();
        let events: Vec<Event> = (0..3)
            .map(|k| parse_event_line(&format!("DOX,SimSenO,2008-08-23 0{k}:30:05,{{'Lat':47.5,'Lon':-122.2,'DOX':9.0}}")).unwrap())
            .collect();
        let b = build_report(&events, ReportWindow::all(), "demo", dir.path()).unwrap();
        assert_eq!(b.signal_rows, 3);
        let summary = std::fs::read_to_string(&b.summary).unwrap();
        assert_eq!(summary, "signal,count,min,max,mean\nDOX,3,9,9,9\n");

        let late = crate::event::parse_timestamp("2009-01-01 00:00:00").unwrap();
        let b = build_report(&events, ReportWindow { from: Some(late), to: None }, "demo", dir.path()).unwrap();
        assert!(b.notice.is_some());
        assert_eq!(std::fs::read_to_string(&b.signals).unwrap(), "timestamp,source,id,lat,lon,depth,value\n");
    }
}
