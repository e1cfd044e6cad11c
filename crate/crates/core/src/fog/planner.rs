use chrono::NaiveDateTime;
use habsim_devs::{Atomic, Bag, Interface, ModelError, Time};
use serde::{Deserialize, Serialize};

use super::inference::BloomEstimate;
use crate::edge::{until, Outbox};
use crate::event::Event;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// USV fixes older than this (s) are not used.
    pub staleness: f64,
    /// Steer towards estimates that are below the detection threshold.
    pub track_undetected: bool,
    /// Name of the USV the commands are addressed to.
    pub usv: String,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig { staleness: 3600.0, track_undetected: false, usv: "usv".to_owned() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackCommand {
    pub t: NaiveDateTime,
    pub e_lat: f64,
    pub e_lon: f64,
}

impl TrackCommand {
    pub fn to_event(&self, source: &str, usv: &str) -> Event {
        Event::new("TRK", source, self.t).with("ELat", self.e_lat).with("ELon", self.e_lon).with("Usv", usv)
    }
}

/// Last known USV position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fix {
    pub t: NaiveDateTime,
    pub lat: f64,
    pub lon: f64,
}

/// Error from the USV to the estimated bloom, or why no command can be
/// issued.
pub fn plan_track(est: &BloomEstimate, usv: Option<&Fix>, staleness_secs: f64) -> Result<TrackCommand, String> {
    let fix = usv.ok_or_else(|| "no usv position fix".to_owned())?;
    let age = est.t.signed_duration_since(fix.t).num_milliseconds() as f64 / 1000.0;
    if age > staleness_secs {
        return Err(format!("usv fix is {age} s old"));
    }
    Ok(TrackCommand { t: est.t, e_lat: est.lat - fix.lat, e_lon: est.lon - fix.lon })
}

/// Path planner: one track command (or warning) per bloom estimate once a
/// PLAN request has been received.
pub struct Planner {
    name: String,
    cfg: PlannerConfig,
    enabled: bool,
    fix: Option<Fix>,
    last: Time,
    outbox: Outbox,
}

impl Planner {
    pub fn new(name: &str, cfg: PlannerConfig) -> Self {
        Planner { name: name.to_owned(), cfg, enabled: false, fix: None, last: Time::ZERO, outbox: Outbox::default() }
    }

    fn plan(&mut self, now: Time, est: &BloomEstimate) {
        let event = match plan_track(est, self.fix.as_ref(), self.cfg.staleness) {
            Ok(mut cmd) => {
                if !est.detected && !self.cfg.track_undetected {
                    cmd.e_lat = 0.0;
                    cmd.e_lon = 0.0;
                }
                cmd.to_event(&self.name, &self.cfg.usv)
            }
            Err(why) => Event::new("WRN", self.name.clone(), est.t).with("Warning", why),
        };
        self.outbox.push(now, "out", event);
    }
}

impl Atomic<Event> for Planner {
    fn interface(&self) -> Interface {
        Interface::new().with_input("req").with_input("est").with_input("data").with_output("out")
    }

    fn time_advance(&self) -> Time {
        until(self.last, self.outbox.next_time())
    }

    fn output(&self, out: &mut Bag<Event>) {
        self.outbox.emit_due(self.outbox.next_time(), out);
    }

    fn internal(&mut self, now: Time) -> Result<(), ModelError> {
        self.last = now;
        self.outbox.drop_due(now);
        Ok(())
    }

    fn external(&mut self, now: Time, _elapsed: Time, inputs: &Bag<Event>) -> Result<(), ModelError> {
        self.last = now;
        if inputs.on("req").next().is_some() {
            self.enabled = true;
        }
        for e in inputs.on("data").filter(|e| e.id == "POS") {
            if let (Some(lat), Some(lon)) = (e.payload.number("Lat"), e.payload.number("Lon")) {
                self.fix = Some(Fix { t: e.timestamp, lat, lon });
            }
        }
        if self.enabled {
            let estimates: Vec<BloomEstimate> = inputs.on("est").filter_map(BloomEstimate::from_event).collect();
            for est in estimates {
                self.plan(now, &est);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::parse_timestamp;
    use crate::fog::BloomParams;

    fn est(lat: f64, lon: f64) -> BloomEstimate {
        BloomEstimate::initial(parse_timestamp("2008-08-23 12:00:00").unwrap(), lat, lon, &BloomParams::default())
    }

    fn fix(at: &str, lat: f64, lon: f64) -> Fix {
        Fix { t: parse_timestamp(at).unwrap(), lat, lon }
    }

    #[test]
    fn coincident_is_zero() {
        let cmd = plan_track(&est(47.5, -122.2), Some(&fix("2008-08-23 11:30:01", 47.5, -122.2)), 3600.0).unwrap();
        assert_eq!((cmd.e_lat, cmd.e_lon), (0.0, 0.0));
    }

    #[test]
    fn subtracts_positions() {
        let cmd = plan_track(&est(47.51, -122.21), Some(&fix("2008-08-23 11:30:01", 47.50, -122.22)), 3600.0).unwrap();
        assert!((cmd.e_lat - 0.01).abs() < 1e-12 && (cmd.e_lon - 0.01).abs() < 1e-12);
    }

    #[test]
    fn missing_or_stale_fix() {
        assert!(plan_track(&est(47.5, -122.2), None, 3600.0).is_err());
        assert!(plan_track(&est(47.5, -122.2), Some(&fix("2008-08-23 10:00:00", 47.5, -122.2)), 3600.0).is_err());
    }
}
