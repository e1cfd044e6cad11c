use std::sync::Arc;

use habsim_devs::{Atomic, Bag, Interface, ModelError, Time};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{delay_time, fault_event, reading_event, sensor_measure, until, Outbox, SensorConfig, Signal};
use crate::env::Dataset;
use crate::epoch::Epoch;
use crate::event::Event;
use crate::geo::Geo;
use crate::scenario::{classify, CommandKind};

/// Output ports of the USV, one per onboard unit.
pub const USV_PORTS: [&str; 6] = ["s_tem", "s_dox", "s_nox", "s_flow", "s_pwr", "s_pos"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UsvParams {
    /// Propulsion constant.
    pub k_p: f64,
    /// Electronic consumption per step.
    pub k_e: f64,
    /// Solar charging factor.
    pub k_s: f64,
    /// Displacement induced by the water current.
    pub k_2d: f64,
}

impl Default for UsvParams {
    fn default() -> Self {
        UsvParams { k_p: 30.0, k_e: -0.003, k_s: 0.04, k_2d: 0.01 }
    }
}

impl UsvParams {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if ![self.k_p, self.k_e, self.k_s, self.k_2d].iter().all(|x| x.is_finite()) {
            problems.push("usv constants must be finite".to_owned());
        }
        if !(self.k_p > 0.0 && self.k_s > 0.0 && self.k_2d > 0.0) {
            problems.push("usv k_p, k_s and k_2d must be positive".to_owned());
        }
        problems
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UsvState {
    pub lat_usv: f64,
    pub lon_usv: f64,
    /// Pending planner error (degrees).
    pub e_lat: f64,
    pub e_lon: f64,
    /// Battery level in [0, 1].
    pub power: f64,
    pub sun: f64,
    /// Water velocity at the vehicle (m/s).
    pub wfv: f64,
    pub wfu: f64,
    /// Speed over the last step (m/s).
    pub speed: f64,
}

/// Battery level after one step.
pub fn usv_power_step(state: &UsvState, params: &UsvParams) -> f64 {
    let prop = params.k_p * state.e_lat.hypot(state.e_lon);
    (state.power + params.k_e + params.k_s * state.sun - prop).clamp(0.0, 1.0)
}

/// Position after one step of `period_s` seconds: the planner error scaled
/// by `step_gain` plus the drift of the current.
pub fn usv_position_step(state: &UsvState, params: &UsvParams, step_gain: f64, geo: &Geo, period_s: f64) -> (f64, f64) {
    let drift_lat = geo.north_m_to_deg(state.wfv * period_s);
    let drift_lon = geo.east_m_to_deg(state.wfu * period_s);
    (
        state.lat_usv + step_gain * state.e_lat + params.k_2d * drift_lat,
        state.lon_usv + step_gain * state.e_lon + params.k_2d * drift_lon,
    )
}

/// Emission settings of a unit that reports vehicle state rather than a
/// water signal.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnitConfig {
    pub source: String,
    pub delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UsvConfig {
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    pub power: f64,
    pub step_gain: f64,
    /// Step and sampling interval (s).
    pub period: f64,
    pub depth: f64,
    /// Service whose commands steer the vehicle.
    pub guided_by: Option<String>,
    pub params: UsvParams,
    /// Onboard probes: TEM, DOX, NOX and the flow meter's WFV and WFU.
    pub sensors: Vec<SensorConfig>,
    pub power_unit: UnitConfig,
    pub positioning: UnitConfig,
}

fn probe(id: &str, source: &str, delay: f64, min: f64, max: f64, precision: f64, sigma: f64) -> SensorConfig {
    SensorConfig { delay, min, max, precision, noisesigma: sigma, ..SensorConfig::new(id, source) }
}

impl Default for UsvConfig {
    fn default() -> Self {
        UsvConfig {
            name: "usv".to_owned(),
            lat: 47.5050,
            lon: -122.2150,
            power: 1.0,
            step_gain: 1.0,
            period: 1800.0,
            depth: 0.0,
            guided_by: Some("planner".to_owned()),
            params: UsvParams::default(),
            sensors: vec![
                probe("TEM", "SimSenT", 7.0, 0.0, 40.0, 0.1, 0.05),
                probe("DOX", "SimSenO", 5.0, 0.0, 30.0, 0.1, 0.2),
                probe("NOX", "SimSenN", 6.0, 0.0, 5.0, 0.001, 0.002),
                probe("WFV", "SimSenF", 3.0, -2.0, 2.0, 0.001, 0.002),
                probe("WFU", "SimSenF", 3.0, -2.0, 2.0, 0.001, 0.002),
            ],
            power_unit: UnitConfig { source: "UsvPower".to_owned(), delay: 1.0 },
            positioning: UnitConfig { source: "UsvGps".to_owned(), delay: 1.0 },
        }
    }
}

fn signal_of(id: &str) -> Option<(Signal, &'static str)> {
    match id {
        "TEM" => Some((Signal::Tem, "s_tem")),
        "DOX" => Some((Signal::Dox, "s_dox")),
        "NOX" => Some((Signal::Nox, "s_nox")),
        "WFV" => Some((Signal::Wfv, "s_flow")),
        "WFU" => Some((Signal::Wfu, "s_flow")),
        _ => None,
    }
}

impl UsvConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = self.params.validate();
        if self.name.trim().is_empty() {
            problems.push("usv name must be non-empty".to_owned());
        }
        if !(0.0..=1.0).contains(&self.power) {
            problems.push(format!("usv initial power {} outside [0, 1]", self.power));
        }
        if !(self.step_gain > 0.0 && self.step_gain <= 1.0) {
            problems.push(format!("usv step_gain {} outside (0, 1]", self.step_gain));
        }
        if !(self.period > 0.0) {
            problems.push("usv period must be positive".to_owned());
        }
        for s in &self.sensors {
            if signal_of(&s.id).is_none() {
                problems.push(format!("usv probe `{}` is not one of TEM, DOX, NOX, WFV, WFU", s.id));
            }
            problems.extend(s.validate());
        }
        for unit in [&self.power_unit, &self.positioning] {
            if unit.source.is_empty() || !(unit.delay >= 0.0) {
                problems.push(format!("usv unit `{}` needs a source and a non-negative delay", unit.source));
            }
        }
        problems
    }
}

/// Unmanned surface vehicle with power, positioning and onboard probes.
///
/// Every period it applies the last planner command received on `trk`,
/// updates its battery, samples the water at its new position and reports
/// each probe, its power and its position on the matching output port.
pub struct Usv {
    cfg: UsvConfig,
    geo: Geo,
    env: Arc<Dataset>,
    epoch: Epoch,
    seed: u64,
    rngs: Vec<ChaCha8Rng>,
    state: UsvState,
    active: bool,
    last: Time,
    next_step: Time,
    outbox: Outbox,
}

impl Usv {
    pub fn new(cfg: UsvConfig, geo: Geo, env: Arc<Dataset>, epoch: Epoch, seed: u64) -> Self {
        let rngs = cfg.sensors.iter().map(|s| s.rng(seed)).collect();
        let state = UsvState { lat_usv: cfg.lat, lon_usv: cfg.lon, power: cfg.power, ..UsvState::default() };
        Usv {
            cfg,
            geo,
            env,
            epoch,
            seed,
            rngs,
            state,
            active: false,
            last: Time::ZERO,
            next_step: Time::INFINITY,
            outbox: Outbox::default(),
        }
    }

    pub fn state(&self) -> &UsvState {
        &self.state
    }

    fn next_time(&self) -> Time {
        self.next_step.min(self.outbox.next_time())
    }

    fn step(&mut self, now: Time) {
        let t = self.epoch.at(now);
        let (lat, lon) = (self.state.lat_usv, self.state.lon_usv);
        self.state.sun = self.env.sun(t, lat, lon).unwrap_or(0.0);
        let (wfv, wfu) = self.env.sample(t, lat, lon, self.cfg.depth).map_or((0.0, 0.0), |r| (r.wfv, r.wfu));
        self.state.wfv = wfv;
        self.state.wfu = wfu;

        let navigating = self.state.power > 0.0;
        let (new_lat, new_lon) = if navigating {
            usv_position_step(&self.state, &self.cfg.params, self.cfg.step_gain, &self.geo, self.cfg.period)
        } else {
            (lat, lon)
        };
        let budget = if navigating { self.state } else { UsvState { e_lat: 0.0, e_lon: 0.0, ..self.state } };
        self.state.power = usv_power_step(&budget, &self.cfg.params);
        let vn = self.geo.lat_deg_to_m(new_lat - lat) / self.cfg.period;
        let ve = self.geo.lon_deg_to_m(new_lon - lon) / self.cfg.period;
        self.state.speed = vn.hypot(ve);
        self.state.lat_usv = new_lat;
        self.state.lon_usv = new_lon;
        self.state.e_lat = 0.0;
        self.state.e_lon = 0.0;

        for (idx, cfg) in self.cfg.sensors.iter().enumerate() {
            let Some((signal, port)) = signal_of(&cfg.id) else { continue };
            let emit_at = now + delay_time(cfg.delay);
            let stamp = self.epoch.at(emit_at);
            let event = match signal.truth(&self.env, t, new_lat, new_lon, self.cfg.depth) {
                Ok(truth) => {
                    // The flow meter sees the water relative to the hull.
                    let truth = match signal {
                        Signal::Wfv => truth - vn,
                        Signal::Wfu => truth - ve,
                        _ => truth,
                    };
                    let value = sensor_measure(truth, cfg, &mut self.rngs[idx]);
                    reading_event(cfg, stamp, new_lat, new_lon, Some(self.cfg.depth), value)
                }
                Err(e) => fault_event(cfg, stamp, new_lat, new_lon, &e.to_string()),
            };
            self.outbox.push(emit_at, port, event);
        }

        let unit = &self.cfg.power_unit;
        let emit_at = now + delay_time(unit.delay);
        let pwr = Event::new("PWR", unit.source.clone(), self.epoch.at(emit_at))
            .with("Lat", new_lat)
            .with("Lon", new_lon)
            .with("PWR", self.state.power);
        self.outbox.push(emit_at, "s_pwr", pwr);

        let unit = &self.cfg.positioning;
        let emit_at = now + delay_time(unit.delay);
        let pos = Event::new("POS", unit.source.clone(), self.epoch.at(emit_at))
            .with("Lat", new_lat)
            .with("Lon", new_lon)
            .with("Speed", self.state.speed)
            .with("VN", vn)
            .with("VE", ve);
        self.outbox.push(emit_at, "s_pos", pos);
    }

    fn command(&mut self, now: Time, cmd: &Event) -> Result<(), ModelError> {
        match classify(cmd) {
            Some(CommandKind::Start) => {
                self.active = true;
                self.next_step = now;
            }
            Some(CommandKind::Stop) => {
                self.active = false;
                self.next_step = Time::INFINITY;
            }
            Some(CommandKind::Config) => {
                let seed = self.seed;
                for (cfg, rng) in self.cfg.sensors.iter_mut().zip(self.rngs.iter_mut()) {
                    if cmd.source == cfg.source && cmd.id == cfg.id {
                        cfg.apply(&cmd.payload).map_err(ModelError)?;
                        if cmd.payload.contains_key("seed") {
                            *rng = cfg.rng(seed);
                        }
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }
}

impl Atomic<Event> for Usv {
    fn interface(&self) -> Interface {
        let mut iface = Interface::new().with_input("cmd").with_input("trk");
        for port in USV_PORTS {
            iface.add_output(port);
        }
        iface
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
        if self.active && self.next_step <= now {
            self.step(now);
            self.next_step = now + delay_time(self.cfg.period);
        }
        Ok(())
    }

    fn external(&mut self, now: Time, _elapsed: Time, inputs: &Bag<Event>) -> Result<(), ModelError> {
        self.last = now;
        for (port, event) in inputs.iter() {
            match port {
                "cmd" => self.command(now, event)?,
                "trk" if event.id == "TRK" && event.payload.text("Usv").is_none_or(|u| u == self.cfg.name) => {
                    if let (Some(e_lat), Some(e_lon)) = (event.payload.number("ELat"), event.payload.number("ELon")) {
                        self.state.e_lat = e_lat;
                        self.state.e_lon = e_lon;
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(lat: f64, lon: f64) -> UsvState {
        UsvState { lat_usv: lat, lon_usv: lon, power: 0.5, ..UsvState::default() }
    }

    #[test]
    fn power_deltas() {
        let p = UsvParams::default();
        let s = at(47.5, -122.2);
        assert!((usv_power_step(&s, &p) - (0.5 - 0.003)).abs() < 1e-15);
        let sunny = UsvState { sun: 1.0, ..s };
        assert!((usv_power_step(&sunny, &p) - (0.5 + 0.037)).abs() < 1e-15);
        let empty = UsvState { power: 0.0, e_lat: 0.1, e_lon: 0.1, ..s };
        assert_eq!(usv_power_step(&empty, &p), 0.0);
        let full = UsvState { power: 1.0, sun: 1.0, ..s };
        assert_eq!(usv_power_step(&full, &p), 1.0);
    }

    #[test]
    fn position_steps() {
        let p = UsvParams::default();
        let geo = Geo::new(47.5);
        assert_eq!(usv_position_step(&at(47.5, -122.2), &p, 1.0, &geo, 1800.0), (47.5, -122.2));
        let (lat, lon) = usv_position_step(&UsvState { e_lat: 0.001, ..at(47.5, -122.2) }, &p, 1.0, &geo, 1800.0);
        assert!((lat - 47.501).abs() < 1e-12 && lon == -122.2);
        let drift = UsvState { wfv: 0.1, wfu: -0.2, ..at(47.5, -122.2) };
        let (lat, lon) = usv_position_step(&drift, &p, 1.0, &geo, 1800.0);
        assert!((lat - (47.5 + 0.01 * 0.1 * 1800.0 / 111_320.0)).abs() < 1e-12);
        assert!((lon - (-122.2 - 0.01 * 0.2 * 1800.0 / geo.m_per_deg_lon())).abs() < 1e-12);
    }
}
