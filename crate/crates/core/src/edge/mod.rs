//! Edge layer: sensor digital twins, the unmanned surface vehicle and the
//! simulation-file source.

mod outbox;
mod sensor;
mod source;
mod usv;

use std::sync::Arc;

use chrono::NaiveDateTime;
use habsim_devs::{Atomic, Bag, Interface, ModelError, Time};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Dataset, SampleError};
use crate::epoch::Epoch;
use crate::event::Event;
use crate::scenario::{classify, CommandKind};

pub use outbox::{until, Outbox};
pub use sensor::{quantize, sensor_measure, stream_id, SensorConfig};
pub use source::SimulationFile;
pub use usv::{usv_position_step, usv_power_step, Usv, UsvConfig, UsvParams, UsvState, USV_PORTS};

/// Environment quantity a sensor observes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Signal {
    Sun,
    Tem,
    Dox,
    Nox,
    Wfv,
    Wfu,
}

impl Signal {
    pub fn truth(self, env: &Dataset, t: NaiveDateTime, lat: f64, lon: f64, depth: f64) -> Result<f64, SampleError> {
        if self == Signal::Sun {
            return env.sun(t, lat, lon);
        }
        let r = env.sample(t, lat, lon, depth)?;
        Ok(match self {
            Signal::Tem => r.tem,
            Signal::Dox => r.dox,
            Signal::Nox => r.nox,
            Signal::Wfv => r.wfv,
            Signal::Wfu => r.wfu,
            Signal::Sun => unreachable!(),
        })
    }
}

/// Builds a reading event `{Lat, Lon, [Depth,] <id>: value}`.
pub fn reading_event(cfg: &SensorConfig, at: NaiveDateTime, lat: f64, lon: f64, depth: Option<f64>, value: f64) -> Event {
    let mut e = Event::new(cfg.id.clone(), cfg.source.clone(), at).with("Lat", lat).with("Lon", lon);
    if let Some(d) = depth {
        e = e.with("Depth", d);
    }
    e.with(cfg.id.clone(), value)
}

/// Builds a fault event that replaces a reading the environment could not supply.
pub fn fault_event(cfg: &SensorConfig, at: NaiveDateTime, lat: f64, lon: f64, why: &str) -> Event {
    Event::new(cfg.id.clone(), cfg.source.clone(), at).with("Lat", lat).with("Lon", lon).with("Fault", why)
}

pub(crate) fn delay_time(seconds: f64) -> Time {
    Time::from_secs_f64(seconds)
}

/// Placement of a stationary sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationarySensor {
    pub signal: Signal,
    pub lat: f64,
    pub lon: f64,
    /// Sampling depth; omitted from readings when absent.
    #[serde(default)]
    pub depth: Option<f64>,
    #[serde(flatten)]
    pub config: SensorConfig,
}

/// Digital twin of a stationary sensor.
///
/// Real data arriving on `d` is forwarded unchanged on `e`. Once started, the
/// twin samples the dataset every period and emits the reading after the
/// configured delay.
pub struct SensorTwin {
    spec: StationarySensor,
    env: Arc<Dataset>,
    epoch: Epoch,
    seed: u64,
    rng: ChaCha8Rng,
    active: bool,
    last: Time,
    next_sample: Time,
    outbox: Outbox,
}

impl SensorTwin {
    pub fn new(spec: StationarySensor, env: Arc<Dataset>, epoch: Epoch, seed: u64) -> Self {
        let rng = spec.config.rng(seed);
        SensorTwin {
            spec,
            env,
            epoch,
            seed,
            rng,
            active: false,
            last: Time::ZERO,
            next_sample: Time::INFINITY,
            outbox: Outbox::default(),
        }
    }

    fn next_time(&self) -> Time {
        self.next_sample.min(self.outbox.next_time())
    }

    fn sample(&mut self, now: Time) {
        let cfg = &self.spec.config;
        let at = self.epoch.at(now);
        let emit_at = now + delay_time(cfg.delay);
        let stamp = self.epoch.at(emit_at);
        let event = match self.spec.signal.truth(&self.env, at, self.spec.lat, self.spec.lon, self.spec.depth.unwrap_or(0.0)) {
            Ok(truth) => {
                let value = sensor_measure(truth, cfg, &mut self.rng);
                reading_event(cfg, stamp, self.spec.lat, self.spec.lon, self.spec.depth, value)
            }
            Err(e) => fault_event(cfg, stamp, self.spec.lat, self.spec.lon, &e.to_string()),
        };
        self.outbox.push(emit_at, "e", event);
    }

    fn command(&mut self, now: Time, cmd: &Event) -> Result<(), ModelError> {
        match classify(cmd) {
            Some(CommandKind::Start) => {
                self.active = true;
                self.next_sample = now;
            }
            Some(CommandKind::Stop) => {
                self.active = false;
                self.next_sample = Time::INFINITY;
            }
            Some(CommandKind::Config) if cmd.source == self.spec.config.source && cmd.id == self.spec.config.id => {
                self.spec.config.apply(&cmd.payload).map_err(ModelError)?;
                if cmd.payload.contains_key("seed") {
                    self.rng = self.spec.config.rng(self.seed);
                }
            }
            _ => {}
        }
        Ok(())
    }
}

impl Atomic<Event> for SensorTwin {
    fn interface(&self) -> Interface {
        Interface::new().with_input("cmd").with_input("d").with_output("e")
    }

    fn time_advance(&self) -> Time {
        until(self.last, self.next_time())
    }

    fn output(&self, out: &mut Bag<Event>) {
        self.outbox.emit_due(self.next_time(), out);
    }

    fn internal(&mut self, now: Time) -> Result<(), ModelError> {
        self.last = now;
        self.outbox.drop_due(now);
        if self.active && self.next_sample <= now {
            self.sample(now);
            self.next_sample = now + delay_time(self.spec.config.period);
        }
        Ok(())
    }

    fn external(&mut self, now: Time, _elapsed: Time, inputs: &Bag<Event>) -> Result<(), ModelError> {
        self.last = now;
        for (port, event) in inputs.iter() {
            match port {
                "cmd" => self.command(now, event)?,
                "d" => self.outbox.push(now, "e", event.clone()),
                _ => {}
            }
        }
        Ok(())
    }
}
