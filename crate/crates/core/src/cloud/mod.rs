//! Cloud layer: the central event store and the bloom prediction service.

mod prediction;

use std::collections::HashSet;
use std::fmt;
use std::io::{self, Write};
use std::sync::{Arc, RwLock};

use chrono::{Duration, NaiveDateTime};
use habsim_devs::{Atomic, Bag, Interface, ModelError, Time};
use serde::{Deserialize, Serialize};

use crate::env::Dataset;
use crate::epoch::Epoch;
use crate::event::Event;
use crate::geo::Geo;
use crate::scenario::{classify, CommandKind, Service};

pub use prediction::{
    infer_sediment, infer_water_speed, predict_bloom, BloomForecast, PredictedPoint, PredictionParams, SedimentParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    Raw,
    Estimated,
    Predicted,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Raw => "raw",
            Channel::Estimated => "estimated",
            Channel::Predicted => "predicted",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CloudRecord {
    pub water_body: String,
    pub channel: Channel,
    pub event: Event,
}

impl fmt::Display for CloudRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.water_body, self.channel, self.event)
    }
}

type Key = (String, Channel, String, String, NaiveDateTime);

#[derive(Default)]
struct Inner {
    records: Vec<CloudRecord>,
    seen: HashSet<Key>,
}

/// Central log of every water body, tagged by channel. Clones share the
/// same records.
#[derive(Clone, Default)]
pub struct CloudStore {
    inner: Arc<RwLock<Inner>>,
}

impl CloudStore {
    pub fn new() -> Self {
        CloudStore::default()
    }

    /// Stores the event unless the same (source, id, timestamp) was already
    /// stored for this water body and channel. Returns whether it was new.
    pub fn ingest(&self, water_body: &str, channel: Channel, event: Event) -> bool {
        let key = (water_body.to_owned(), channel, event.source.clone(), event.id.clone(), event.timestamp);
        let mut inner = self.inner.write().expect("cloud store lock");
        if !inner.seen.insert(key) {
            return false;
        }
        inner.records.push(CloudRecord { water_body: water_body.to_owned(), channel, event });
        true
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("cloud store lock").records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn records(&self) -> Vec<CloudRecord> {
        self.inner.read().expect("cloud store lock").records.clone()
    }

    pub fn query(&self, water_body: Option<&str>, channel: Option<Channel>) -> Vec<CloudRecord> {
        let inner = self.inner.read().expect("cloud store lock");
        inner
            .records
            .iter()
            .filter(|r| water_body.is_none_or(|w| r.water_body == w) && channel.is_none_or(|c| r.channel == c))
            .cloned()
            .collect()
    }

    pub fn write_lines<W: Write>(&self, mut out: W) -> io::Result<()> {
        for r in self.inner.read().expect("cloud store lock").records.iter() {
            writeln!(out, "{r}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CloudConfig {
    pub prediction: PredictionParams,
    /// Default prediction horizon (h) when PREDICT gives none.
    pub horizon_hours: f64,
}

impl Default for CloudConfig {
    fn default() -> Self {
        CloudConfig { prediction: PredictionParams::default(), horizon_hours: 48.0 }
    }
}

/// Port names on which the cloud receives the raw and the estimated streams
/// of a water body.
pub fn cloud_ports(water_body: &str) -> (String, String) {
    (format!("d1_{water_body}"), format!("dh1_{water_body}"))
}

/// Cloud atomic model.
///
/// Stores everything arriving on `d1_<wb>` (raw) and `dh1_<wb>` (estimated).
/// A PREDICT command runs the prediction service on the weather forecast
/// and stores the predicted track on the predicted channel. The forecast is
/// replayed from the start of the dataset so the sediment state reflects
/// past rain; only points from the command time on are stored.
pub struct Cloud {
    water_bodies: Vec<String>,
    cfg: CloudConfig,
    env: Arc<Dataset>,
    epoch: Epoch,
    geo: Geo,
    store: CloudStore,
}

impl Cloud {
    pub fn new(water_bodies: Vec<String>, cfg: CloudConfig, env: Arc<Dataset>, epoch: Epoch, geo: Geo, store: CloudStore) -> Self {
        Cloud { water_bodies, cfg, env, epoch, geo, store }
    }

    fn predict(&self, now: Time, cmd: &Event) -> Result<(), String> {
        let at = self.epoch.at(now);
        let hours = cmd.payload.number("horizon").unwrap_or(self.cfg.horizon_hours);
        if !(hours > 0.0) {
            return Err(format!("PREDICT horizon {hours} must be positive"));
        }
        let wb = cmd.payload.text("wb").map(str::to_owned).or_else(|| self.water_bodies.first().cloned()).unwrap_or_else(|| "wb1".to_owned());
        let until = at + Duration::seconds((hours * 3600.0) as i64);
        let forecast: Vec<_> = self.env.forecast.iter().filter(|f| f.t <= until).copied().collect();
        let result = predict_bloom(&forecast, &self.cfg.prediction, &self.geo)?;
        for (k, p) in result.horizon.iter().enumerate().filter(|(_, p)| p.t >= at) {
            let e = Event::new("PRD", "Prediction", p.t)
                .with("Lat", p.lat)
                .with("Lon", p.lon)
                .with("R", p.r)
                .with("Detected", if p.detected { 1.0 } else { 0.0 })
                .with("Precursor", result.precursor[k])
                .with("Sediment", result.sediment[k]);
            self.store.ingest(&wb, Channel::Predicted, e);
        }
        Ok(())
    }
}

impl Atomic<Event> for Cloud {
    fn interface(&self) -> Interface {
        let mut iface = Interface::new().with_input("cmd");
        for wb in &self.water_bodies {
            let (raw, est) = cloud_ports(wb);
            iface.add_input(raw);
            iface.add_input(est);
        }
        iface
    }

    fn time_advance(&self) -> Time {
        Time::INFINITY
    }

    fn output(&self, _out: &mut Bag<Event>) {}

    fn internal(&mut self, _now: Time) -> Result<(), ModelError> {
        Ok(())
    }

    fn external(&mut self, now: Time, _elapsed: Time, inputs: &Bag<Event>) -> Result<(), ModelError> {
        for (port, e) in inputs.iter() {
            if port == "cmd" {
                if classify(e) == Some(CommandKind::Trigger(Service::Predict)) {
                    if let Err(why) = self.predict(now, e) {
                        let err = Event::new("ERR", "Prediction", self.epoch.at(now)).with("Error", why);
                        let wb = self.water_bodies.first().cloned().unwrap_or_default();
                        self.store.ingest(&wb, Channel::Predicted, err);
                    }
                }
            } else if let Some(wb) = port.strip_prefix("dh1_") {
                self.store.ingest(wb, Channel::Estimated, e.clone());
            } else if let Some(wb) = port.strip_prefix("d1_") {
                self.store.ingest(wb, Channel::Raw, e.clone());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::parse_event_line;

    #[test]
    fn ingest_is_idempotent_and_tagged() {
        let store = CloudStore::new();
        let dox = parse_event_line("DOX,SimSenO,2008-08-23 01:30:05,{'DOX':11.8}").unwrap();
        assert!(store.ingest("wb1", Channel::Raw, dox.clone()));
        assert!(!store.ingest("wb1", Channel::Raw, dox.clone()));
        assert!(store.ingest("wb1", Channel::Estimated, dox.clone()));
        assert!(store.ingest("wb2", Channel::Raw, dox.clone()));
        assert_eq!(store.len(), 3);
        assert_eq!(store.query(Some("wb2"), None).len(), 1);
        assert_eq!(store.query(Some("wb1"), Some(Channel::Estimated)).len(), 1);
        let mut buf = Vec::new();
        store.write_lines(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("wb1,raw,DOX,SimSenO,2008-08-23 01:30:05,{\"DOX\":11.8}\n"));
    }
}
