use std::collections::{BTreeMap, HashSet};

use habsim_devs::{Atomic, Bag, Interface, ModelError, Time};
use serde::{Deserialize, Serialize};

use crate::edge::{until, Outbox};
use crate::epoch::Epoch;
use crate::event::Event;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutlierConfig {
    /// Points in the rolling window, the centre point included.
    pub window: usize,
    /// Robust z-score above which a point is an outlier.
    pub z: f64,
    /// Expected sampling interval (s); larger gaps get filled.
    pub cadence: Option<f64>,
}

impl Default for OutlierConfig {
    fn default() -> Self {
        OutlierConfig { window: 21, z: 5.0, cadence: Some(1800.0) }
    }
}

impl OutlierConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.window < 3 {
            problems.push(format!("outlier window {} must be at least 3", self.window));
        }
        if !(self.z > 0.0) {
            problems.push("outlier z threshold must be positive".to_owned());
        }
        if self.cadence.is_some_and(|c| !(c > 0.0)) {
            problems.push("outlier cadence must be positive".to_owned());
        }
        problems
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Replacement {
    pub t: f64,
    /// `None` for a filled gap.
    pub original: Option<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutlierReport {
    pub series: Vec<(f64, f64)>,
    pub replacements: Vec<Replacement>,
    pub notice: Option<String>,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn line_fit(points: &[(f64, f64)], t: f64) -> f64 {
    let n = points.len() as f64;
    let mt = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mv = points.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = points.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if stt == 0.0 {
        return mv;
    }
    let stv: f64 = points.iter().map(|p| (p.0 - mt) * (p.1 - mv)).sum();
    mv + stv / stt * (t - mt)
}

/// Replaces outliers and missing samples of a time-sorted series by a linear
/// least-squares fit over the surrounding window.
///
/// A point is an outlier when its distance to the median of its window
/// (centre included) exceeds `z` times the scaled median absolute deviation
/// (the mean absolute deviation of the neighbours when that is zero).
/// Samples missing at the expected cadence are inserted. Series shorter than
/// the window come back unchanged with a notice.
pub fn repair_outliers(series: &[(f64, f64)], cfg: &OutlierConfig) -> OutlierReport {
    if series.len() < cfg.window.max(3) {
        return OutlierReport {
            series: series.to_vec(),
            replacements: Vec::new(),
            notice: Some(format!("series of {} points is shorter than the window of {}", series.len(), cfg.window)),
        };
    }

    let mut slots: Vec<(f64, Option<f64>)> = Vec::with_capacity(series.len());
    for (k, &(t, v)) in series.iter().enumerate() {
        if let (Some(c), Some(&(prev, _))) = (cfg.cadence, k.checked_sub(1).map(|p| &series[p])) {
            let mut gap = prev + c;
            while gap < t - 0.5 * c {
                slots.push((gap, None));
                gap += c;
            }
        }
        slots.push((t, Some(v)));
    }

    let half = (cfg.window - 1) / 2;
    let neighbours = |k: usize, exclude: &[bool], radius: usize| -> Vec<(f64, f64)> {
        let lo = k.saturating_sub(radius);
        let hi = (k + radius).min(slots.len() - 1);
        (lo..=hi).filter(|&j| j != k && !exclude[j]).filter_map(|j| slots[j].1.map(|v| (slots[j].0, v))).collect()
    };

    let none = vec![false; slots.len()];
    let mut flagged = vec![false; slots.len()];
    for (k, slot) in slots.iter().enumerate() {
        let Some(v) = slot.1 else { continue };
        let around: Vec<f64> = neighbours(k, &none, half).into_iter().map(|p| p.1).collect();
        if around.len() < 2 {
            continue;
        }
        let mut values = around.clone();
        values.push(v);
        let med = median(&mut values);
        let mut dev: Vec<f64> = values.iter().map(|x| (x - med).abs()).collect();
        let mad = median(&mut dev);
        let scale = if mad > 0.0 {
            1.4826 * mad
        } else {
            // Mostly repeated values: fall back to the mean absolute
            // deviation of the neighbours.
            1.2533 * around.iter().map(|x| (x - med).abs()).sum::<f64>() / around.len() as f64
        };
        let scale = scale.max(1e-12 * med.abs().max(1.0));
        flagged[k] = (v - med).abs() / scale > cfg.z;
    }

    let exclude: Vec<bool> = slots.iter().zip(&flagged).map(|(s, &f)| f || s.1.is_none()).collect();
    let mut out = Vec::with_capacity(slots.len());
    let mut replacements = Vec::new();
    for (k, &(t, v)) in slots.iter().enumerate() {
        if !exclude[k] {
            out.push((t, v.expect("present")));
            continue;
        }
        let mut radius = half.max(1);
        let mut fit = neighbours(k, &exclude, radius);
        while fit.len() < 2 && radius < slots.len() {
            radius *= 2;
            fit = neighbours(k, &exclude, radius);
        }
        let value = if fit.is_empty() { v.unwrap_or(f64::NAN) } else { line_fit(&fit, t) };
        out.push((t, value));
        replacements.push(Replacement { t, original: v, value });
    }
    OutlierReport { series: out, replacements, notice: None }
}

#[derive(Debug, Clone)]
struct Reading {
    t: f64,
    value: f64,
    lat: f64,
    lon: f64,
}

#[derive(Debug, Clone)]
struct Job {
    signal: Option<String>,
    cfg: OutlierConfig,
    period: Option<Time>,
}

/// Outlier-repair service.
///
/// Keeps every raw reading it sees. An OUTLIERS request (`signal`,
/// `window`, `z`, `cadence`, optional repeat `period`) repairs the stored
/// series and emits one event per replaced sample, never the same sample
/// twice.
pub struct Outliers {
    name: String,
    epoch: Epoch,
    defaults: OutlierConfig,
    series: BTreeMap<String, Vec<Reading>>,
    emitted: HashSet<(String, i64)>,
    job: Option<Job>,
    next_run: Time,
    last: Time,
    outbox: Outbox,
}

impl Outliers {
    pub fn new(name: &str, epoch: Epoch, defaults: OutlierConfig) -> Self {
        Outliers {
            name: name.to_owned(),
            epoch,
            defaults,
            series: BTreeMap::new(),
            emitted: HashSet::new(),
            job: None,
            next_run: Time::INFINITY,
            last: Time::ZERO,
            outbox: Outbox::default(),
        }
    }

    fn next_time(&self) -> Time {
        self.next_run.min(self.outbox.next_time())
    }

    fn job_from(&self, req: &Event) -> Result<Job, String> {
        let p = &req.payload;
        let mut cfg = self.defaults;
        if let Some(w) = p.number("window") {
            cfg.window = w as usize;
        }
        if let Some(z) = p.number("z") {
            cfg.z = z;
        }
        if let Some(c) = p.number("cadence") {
            cfg.cadence = (c > 0.0).then_some(c);
        }
        let problems = cfg.validate();
        if !problems.is_empty() {
            return Err(problems.join("; "));
        }
        let period = match p.number("period") {
            Some(s) if s > 0.0 => Some(Time::from_secs_f64(s)),
            Some(s) => return Err(format!("OUTLIERS period {s} must be positive")),
            None => None,
        };
        Ok(Job { signal: p.text("signal").map(str::to_owned), cfg, period })
    }

    fn run(&mut self, now: Time, job: &Job) {
        let signals: Vec<String> = match &job.signal {
            Some(s) => vec![s.clone()],
            None => self.series.keys().cloned().collect(),
        };
        let stamp = self.epoch.at(now);
        for signal in signals {
            let readings = self.series.get(&signal).cloned().unwrap_or_default();
            let series: Vec<(f64, f64)> = readings.iter().map(|r| (r.t, r.value)).collect();
            let report = repair_outliers(&series, &job.cfg);
            if let Some(notice) = report.notice {
                let e = Event::new("NTC", self.name.clone(), stamp).with("Signal", signal.clone()).with("Notice", notice);
                self.outbox.push(now, "out", e);
                continue;
            }
            for rep in report.replacements {
                let key = (signal.clone(), (rep.t * 1e6).round() as i64);
                if !rep.value.is_finite() || !self.emitted.insert(key) {
                    continue;
                }
                let near = readings.iter().rev().find(|r| r.t <= rep.t).or(readings.first()).expect("non-empty series");
                let mut e = Event::new(signal.clone(), self.name.clone(), self.epoch.at(Time::from_secs_f64(rep.t)))
                    .with("Lat", near.lat)
                    .with("Lon", near.lon)
                    .with(signal.clone(), rep.value)
                    .with("Repaired", 1.0);
                if let Some(original) = rep.original {
                    e = e.with("Original", original);
                }
                self.outbox.push(now, "out", e);
            }
        }
    }
}

impl Atomic<Event> for Outliers {
    fn interface(&self) -> Interface {
        Interface::new().with_input("req").with_input("data").with_output("out")
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
        if self.next_run <= now {
            self.next_run = Time::INFINITY;
            if let Some(job) = self.job.clone() {
                self.run(now, &job);
                if let Some(p) = job.period {
                    self.next_run = now + p;
                }
            }
        }
        Ok(())
    }

    fn external(&mut self, now: Time, _elapsed: Time, inputs: &Bag<Event>) -> Result<(), ModelError> {
        self.last = now;
        for e in inputs.on("data") {
            if e.payload.contains_key("Fault") || e.payload.contains_key("Repaired") {
                continue;
            }
            let (Some(value), Some(at)) = (e.reading(), self.epoch.offset(e.timestamp)) else { continue };
            self.series.entry(e.id.clone()).or_default().push(Reading {
                t: at.as_secs_f64(),
                value,
                lat: e.payload.number("Lat").unwrap_or(f64::NAN),
                lon: e.payload.number("Lon").unwrap_or(f64::NAN),
            });
        }
        for s in self.series.values_mut() {
            s.sort_by(|a, b| a.t.total_cmp(&b.t));
        }
        for req in inputs.on("req") {
            match self.job_from(req) {
                Ok(job) => {
                    self.job = Some(job.clone());
                    self.run(now, &job);
                    self.next_run = job.period.map_or(Time::INFINITY, |p| now + p);
                }
                Err(why) => {
                    let e = Event::new("ERR", self.name.clone(), self.epoch.at(now)).with("Error", why);
                    self.outbox.push(now, "out", e);
                }
            }
        }
        Ok(())
    }
}
