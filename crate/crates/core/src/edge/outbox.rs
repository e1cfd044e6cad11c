use std::collections::BTreeMap;

use habsim_devs::{Bag, Time};

use crate::event::Event;

/// Events waiting for their emission time, in (time, insertion) order.
#[derive(Debug, Default, Clone)]
pub struct Outbox {
    items: BTreeMap<(Time, u64), (&'static str, Event)>,
    seq: u64,
}

impl Outbox {
    pub fn push(&mut self, at: Time, port: &'static str, event: Event) {
        self.items.insert((at, self.seq), (port, event));
        self.seq += 1;
    }

    pub fn next_time(&self) -> Time {
        self.items.keys().next().map_or(Time::INFINITY, |k| k.0)
    }

    pub fn emit_due(&self, now: Time, out: &mut Bag<Event>) {
        for ((_, _), (port, event)) in self.items.range(..(now, u64::MAX)) {
            out.push(*port, event.clone());
        }
    }

    pub fn drop_due(&mut self, now: Time) {
        self.items = self.items.split_off(&(now, u64::MAX));
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Time left from `last` until `at`.
pub fn until(last: Time, at: Time) -> Time {
    if at.is_infinite() {
        Time::INFINITY
    } else {
        at - last
    }
}
