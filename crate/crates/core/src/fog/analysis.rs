use std::collections::BTreeMap;

use habsim_devs::{Atomic, Bag, Interface, ModelError, Time};

use crate::edge::{until, Outbox};
use crate::epoch::Epoch;
use crate::event::Event;

/// Running min/max/mean of one signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalStats {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub sum: f64,
}

impl Default for SignalStats {
    fn default() -> Self {
        SignalStats { count: 0, min: f64::INFINITY, max: f64::NEG_INFINITY, sum: 0.0 }
    }
}

impl SignalStats {
    pub fn add(&mut self, v: f64) {
        self.count += 1;
        self.min = self.min.min(v);
        self.max = self.max.max(v);
        self.sum += v;
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.sum / self.count as f64
        }
    }
}

/// True for sensor readings as opposed to vehicle status, service output or
/// fault reports.
pub fn is_signal_reading(e: &Event) -> bool {
    e.reading().is_some() && e.id != "PWR" && !e.payload.contains_key("Repaired") && !e.payload.contains_key("Fault")
}

/// Data-analysis service: on a REPORT request emits one REP event with the
/// count, min, max and mean of every signal seen so far.
pub struct Analysis {
    name: String,
    epoch: Epoch,
    stats: BTreeMap<String, SignalStats>,
    last: Time,
    outbox: Outbox,
}

impl Analysis {
    pub fn new(name: &str, epoch: Epoch) -> Self {
        Analysis { name: name.to_owned(), epoch, stats: BTreeMap::new(), last: Time::ZERO, outbox: Outbox::default() }
    }

    fn report(&self, now: Time) -> Event {
        let mut e = Event::new("REP", self.name.clone(), self.epoch.at(now));
        for (signal, s) in &self.stats {
            e = e
                .with(format!("{signal}_Count"), s.count as f64)
                .with(format!("{signal}_Min"), s.min)
                .with(format!("{signal}_Max"), s.max)
                .with(format!("{signal}_Mean"), s.mean());
        }
        e
    }
}

impl Atomic<Event> for Analysis {
    fn interface(&self) -> Interface {
        Interface::new().with_input("req").with_input("data").with_output("out")
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
        for e in inputs.on("data").filter(|e| is_signal_reading(e)) {
            if let Some(v) = e.reading() {
                self.stats.entry(e.id.clone()).or_default().add(v);
            }
        }
        if inputs.on("req").next().is_some() {
            let rep = self.report(now);
            self.outbox.push(now, "out", rep);
        }
        Ok(())
    }
}
