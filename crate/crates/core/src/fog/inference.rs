use chrono::NaiveDateTime;
use habsim_devs::{Atomic, Bag, Interface, ModelError, Time};
use serde::{Deserialize, Serialize};

use crate::edge::until;
use crate::epoch::Epoch;
use crate::event::Event;
use crate::geo::Geo;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BloomParams {
    pub k1: f64,
    pub k2: f64,
    /// Decay rate per hour.
    pub k3: f64,
    /// Fraction of the water velocity transferred to the bloom.
    pub kv: f64,
    pub r0: f64,
    pub detect_threshold: f64,
}

impl Default for BloomParams {
    fn default() -> Self {
        BloomParams { k1: 5.0, k2: 0.05, k3: 0.17, kv: 0.0167, r0: 0.05, detect_threshold: 0.25 }
    }
}

impl BloomParams {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if !(self.k1 > 0.0 && self.k2 > 0.0 && self.k3 > 0.0 && self.kv > 0.0) {
            problems.push("bloom k1, k2, k3 and kv must be positive".to_owned());
        }
        if !(self.r0 >= 0.0 && self.detect_threshold > self.r0) {
            problems.push(format!("bloom threshold {} must exceed r0 {} >= 0", self.detect_threshold, self.r0));
        }
        problems
    }
}

/// Inputs held constant over one inference step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BloomInputs {
    pub sun: f64,
    pub nox: f64,
    pub dox: f64,
    /// Water velocity north and east (m/s).
    pub wfv: f64,
    pub wfu: f64,
}

impl BloomInputs {
    pub fn photo(&self) -> f64 {
        self.sun * self.nox
    }

    pub fn breath(&self) -> f64 {
        self.dox * self.nox
    }

    fn is_finite(&self) -> bool {
        [self.sun, self.nox, self.dox, self.wfv, self.wfu].iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BloomEstimate {
    pub t: NaiveDateTime,
    pub r: f64,
    pub lat: f64,
    pub lon: f64,
    pub detected: bool,
    pub photo: f64,
    pub breath: f64,
}

impl BloomEstimate {
    pub fn initial(t: NaiveDateTime, lat: f64, lon: f64, params: &BloomParams) -> Self {
        BloomEstimate { t, r: params.r0, lat, lon, detected: params.r0 >= params.detect_threshold, photo: 0.0, breath: 0.0 }
    }

    pub fn to_event(&self, source: &str) -> Event {
        Event::new("BLM", source, self.t)
            .with("Lat", self.lat)
            .with("Lon", self.lon)
            .with("R", self.r)
            .with("Detected", if self.detected { 1.0 } else { 0.0 })
            .with("Photo", self.photo)
            .with("Breath", self.breath)
    }

    pub fn from_event(e: &Event) -> Option<Self> {
        let p = &e.payload;
        Some(BloomEstimate {
            t: e.timestamp,
            r: p.number("R")?,
            lat: p.number("Lat")?,
            lon: p.number("Lon")?,
            detected: p.number("Detected")? != 0.0,
            photo: p.number("Photo").unwrap_or(0.0),
            breath: p.number("Breath").unwrap_or(0.0),
        })
    }
}

/// Growth rate dr/dt per hour.
pub fn bloom_derivative(r: f64, inputs: &BloomInputs, params: &BloomParams) -> f64 {
    params.k1 * inputs.photo() + params.k2 * inputs.breath() - params.k3 * (r - params.r0)
}

/// Advances the estimate by `dt_secs` with inputs held constant.
///
/// The density equation is linear in r for fixed inputs, so it is solved in
/// closed form over the step; the result is exact for any step length.
pub fn inference_step(est: &BloomEstimate, inputs: &BloomInputs, dt_secs: f64, params: &BloomParams, geo: &Geo) -> Result<BloomEstimate, String> {
    if !inputs.is_finite() {
        return Err(format!("non-finite inference input {inputs:?}"));
    }
    if !(dt_secs > 0.0) {
        return Err(format!("inference step {dt_secs} s must be positive"));
    }
    let dt_h = dt_secs / 3600.0;
    let (photo, breath) = (inputs.photo(), inputs.breath());
    let r_inf = params.r0 + (params.k1 * photo + params.k2 * breath) / params.k3;
    let r = (r_inf + (est.r - r_inf) * (-params.k3 * dt_h).exp()).max(0.0);
    Ok(BloomEstimate {
        t: est.t + chrono::Duration::microseconds((dt_secs * 1e6).round() as i64),
        r,
        lat: est.lat + dt_h * params.kv * geo.north_m_to_deg(inputs.wfv * 3600.0),
        lon: est.lon + dt_h * params.kv * geo.east_m_to_deg(inputs.wfu * 3600.0),
        detected: r >= params.detect_threshold,
        photo,
        breath,
    })
}

/// Latest observations the inference service integrates with.
#[derive(Debug, Clone, Copy, Default)]
struct Latest {
    sun: f64,
    nox: f64,
    dox: f64,
    flow_v: f64,
    flow_u: f64,
    ship_v: f64,
    ship_u: f64,
}

impl Latest {
    fn observe(&mut self, e: &Event) {
        if e.payload.contains_key("Fault") || e.payload.contains_key("Repaired") {
            return;
        }
        let slot = match e.id.as_str() {
            "IRA" => &mut self.sun,
            "NOX" => &mut self.nox,
            "DOX" => &mut self.dox,
            "WFV" => &mut self.flow_v,
            "WFU" => &mut self.flow_u,
            "POS" => {
                self.ship_v = e.payload.number("VN").unwrap_or(self.ship_v);
                self.ship_u = e.payload.number("VE").unwrap_or(self.ship_u);
                return;
            }
            _ => return,
        };
        if let Some(v) = e.reading() {
            *slot = v;
        }
    }

    fn inputs(&self) -> BloomInputs {
        BloomInputs {
            sun: self.sun,
            nox: self.nox.max(0.0),
            dox: self.dox.max(0.0),
            // Flow meters read relative to the hull.
            wfv: self.flow_v + self.ship_v,
            wfu: self.flow_u + self.ship_u,
        }
    }
}

/// Bloom inference service.
///
/// An INFER request starts periodic estimation (`period` seconds, first tick
/// `offset` seconds after the request). Each tick integrates the latest
/// observations over the time since the previous tick and emits a BLM event.
/// The estimate returns to the incubator when a new day starts.
pub struct Inference {
    name: String,
    params: BloomParams,
    geo: Geo,
    epoch: Epoch,
    incubator: (f64, f64),
    latest: Latest,
    estimate: Option<BloomEstimate>,
    period: Time,
    last: Time,
    next_tick: Time,
    last_tick: Time,
}

impl Inference {
    pub fn new(name: &str, params: BloomParams, geo: Geo, epoch: Epoch, incubator: (f64, f64)) -> Self {
        Inference {
            name: name.to_owned(),
            params,
            geo,
            epoch,
            incubator,
            latest: Latest::default(),
            estimate: None,
            period: Time::from_secs(1800),
            last: Time::ZERO,
            next_tick: Time::INFINITY,
            last_tick: Time::ZERO,
        }
    }

    fn tick(&self, now: Time) -> BloomEstimate {
        let t = self.epoch.at(now);
        let fresh = BloomEstimate::initial(t, self.incubator.0, self.incubator.1, &self.params);
        let Some(prev) = self.estimate else { return fresh };
        let dt = (now - self.last_tick).as_secs_f64();
        let mut next = if dt > 0.0 {
            inference_step(&prev, &self.latest.inputs(), dt, &self.params, &self.geo).unwrap_or(prev)
        } else {
            prev
        };
        next.t = t;
        if self.epoch.day_index(now) != self.epoch.day_index(self.last_tick) {
            next.lat = self.incubator.0;
            next.lon = self.incubator.1;
        }
        next
    }
}

impl Atomic<Event> for Inference {
    fn interface(&self) -> Interface {
        Interface::new().with_input("req").with_input("data").with_output("out")
    }

    fn time_advance(&self) -> Time {
        until(self.last, self.next_tick)
    }

    fn output(&self, out: &mut Bag<Event>) {
        out.push("out", self.tick(self.next_tick).to_event(&self.name));
    }

    fn internal(&mut self, now: Time) -> Result<(), ModelError> {
        self.estimate = Some(self.tick(now));
        self.last = now;
        self.last_tick = now;
        self.next_tick = now + self.period;
        Ok(())
    }

    fn external(&mut self, now: Time, _elapsed: Time, inputs: &Bag<Event>) -> Result<(), ModelError> {
        self.last = now;
        for e in inputs.on("data") {
            self.latest.observe(e);
        }
        for req in inputs.on("req") {
            let period = req.payload.number("period").unwrap_or(1800.0);
            let offset = req.payload.number("offset").unwrap_or(60.0);
            if !(period > 0.0 && offset >= 0.0) {
                return Err(ModelError(format!("INFER needs period > 0 and offset >= 0, got {period} and {offset}")));
            }
            self.period = Time::from_secs_f64(period);
            if self.next_tick.is_infinite() {
                self.next_tick = now + Time::from_secs_f64(offset);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::parse_timestamp;

    fn est() -> BloomEstimate {
        BloomEstimate::initial(parse_timestamp("2008-08-23 00:00:00").unwrap(), 47.5, -122.22, &BloomParams::default())
    }

    #[test]
    fn derivative_example() {
        let p = BloomParams::default();
        let inputs = BloomInputs { sun: 1.0, nox: 0.1, dox: 10.0, ..BloomInputs::default() };
        assert!((bloom_derivative(p.r0, &inputs, &p) - 0.55).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_is_fixed() {
        let p = BloomParams::default();
        let next = inference_step(&est(), &BloomInputs::default(), 1800.0, &p, &Geo::new(47.5)).unwrap();
        assert_eq!(next.r, p.r0);
        assert!(!next.detected);
    }

    #[test]
    fn decays_toward_r0() {
        let p = BloomParams::default();
        let start = BloomEstimate { r: 1.0, ..est() };
        let next = inference_step(&start, &BloomInputs::default(), 3600.0, &p, &Geo::new(47.5)).unwrap();
        assert!((next.r - (p.r0 + 0.95 * (-0.17f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let bad = BloomInputs { sun: f64::NAN, ..BloomInputs::default() };
        assert!(inference_step(&est(), &bad, 1800.0, &BloomParams::default(), &Geo::new(47.5)).is_err());
    }

    #[test]
    fn event_round_trip() {
        let e = BloomEstimate { r: 0.3, detected: true, photo: 0.1, breath: 0.2, ..est() };
        assert_eq!(BloomEstimate::from_event(&e.to_event("Inference")), Some(e));
    }
}
