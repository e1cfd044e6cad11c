//! Small reference atoms and a seeded random-hierarchy builder, used to
//! exercise the kernel in tests.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Atomic, Bag, Coupled, Interface, ModelError, Time};

/// Emits `"<name><k>"` at each scheduled absolute time.
pub struct Generator {
    pub name: String,
    pub times: Vec<Time>,
    pub next: usize,
    pub now: Time,
}

impl Generator {
    pub fn new(name: &str, times: Vec<Time>) -> Self {
        Generator { name: name.to_owned(), times, next: 0, now: Time::ZERO }
    }
}

impl Atomic<String> for Generator {
    fn interface(&self) -> Interface {
        Interface::new().with_output("out")
    }
    fn time_advance(&self) -> Time {
        match self.times.get(self.next) {
            Some(t) => *t - self.now,
            None => Time::INFINITY,
        }
    }
    fn output(&self, out: &mut Bag<String>) {
        out.push("out", format!("{}{}", self.name, self.next + 1));
    }
    fn internal(&mut self, now: Time) -> Result<(), ModelError> {
        self.now = now;
        self.next += 1;
        Ok(())
    }
    fn external(&mut self, now: Time, _e: Time, _x: &Bag<String>) -> Result<(), ModelError> {
        self.now = now;
        Ok(())
    }
}

/// Forwards every input after a fixed delay, appending its own name to the
/// message. Messages that already crossed `max_hops` delays are dropped.
pub struct Delay {
    pub name: String,
    pub delay: Time,
    pub max_hops: usize,
    pub queue: VecDeque<(Time, String)>,
    pub now: Time,
}

impl Delay {
    pub fn new(name: &str, delay: Time) -> Self {
        Delay { name: name.to_owned(), delay, max_hops: usize::MAX, queue: VecDeque::new(), now: Time::ZERO }
    }
}

impl Atomic<String> for Delay {
    fn interface(&self) -> Interface {
        Interface::new().with_input("in").with_output("out")
    }
    fn time_advance(&self) -> Time {
        self.queue.front().map_or(Time::INFINITY, |(t, _)| *t - self.now)
    }
    fn output(&self, out: &mut Bag<String>) {
        if let Some((due, _)) = self.queue.front() {
            for (_, m) in self.queue.iter().take_while(|(t, _)| t == due) {
                out.push("out", m.clone());
            }
        }
    }
    fn internal(&mut self, now: Time) -> Result<(), ModelError> {
        self.now = now;
        while self.queue.front().is_some_and(|(t, _)| *t <= now) {
            self.queue.pop_front();
        }
        Ok(())
    }
    fn external(&mut self, now: Time, _e: Time, x: &Bag<String>) -> Result<(), ModelError> {
        self.now = now;
        for (port, m) in x.iter() {
            let hops = m.matches('>').count();
            if hops >= self.max_hops {
                continue;
            }
            self.queue.push_back((now + self.delay, format!("{m}>{}:{port}", self.name)));
        }
        Ok(())
    }
}

pub type Received = Arc<Mutex<Vec<(Time, String)>>>;

/// Passive sink recording `(time, message)`.
pub struct Collector {
    pub seen: Received,
}

impl Collector {
    pub fn new() -> (Self, Received) {
        let seen: Received = Arc::default();
        (Collector { seen: seen.clone() }, seen)
    }
}

impl Atomic<String> for Collector {
    fn interface(&self) -> Interface {
        Interface::new().with_input("in")
    }
    fn time_advance(&self) -> Time {
        Time::INFINITY
    }
    fn output(&self, _out: &mut Bag<String>) {}
    fn internal(&mut self, _now: Time) -> Result<(), ModelError> {
        Ok(())
    }
    fn external(&mut self, now: Time, _e: Time, x: &Bag<String>) -> Result<(), ModelError> {
        let mut seen = self.seen.lock().unwrap();
        for m in x.on("in") {
            seen.push((now, m.clone()));
        }
        Ok(())
    }
}

/// Shape limits for [`random_hierarchy`].
#[derive(Debug, Clone, Copy)]
pub struct HierarchyShape {
    /// Levels of coupled models, root included.
    pub max_levels: usize,
    pub max_atoms: usize,
    /// Delays drop messages that already crossed this many delays, which
    /// bounds traffic around coupling cycles.
    pub max_hops: usize,
    /// Generators fire at most this many times, within `(0, horizon]`.
    pub max_emissions: usize,
    pub horizon_secs: u64,
}

impl Default for HierarchyShape {
    fn default() -> Self {
        HierarchyShape { max_levels: 4, max_atoms: 12, max_hops: 4, max_emissions: 3, horizon_secs: 10 }
    }
}

/// Builds a random hierarchy of generators and delays. The same seed always
/// yields the same structure, so a hierarchy can be rebuilt to compare two
/// execution routes.
pub fn random_hierarchy(seed: u64, shape: HierarchyShape) -> Coupled<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut budget = shape.max_atoms;
    let mut counter = 0usize;
    let mut root = build_level(&mut rng, "root", 1, &shape, &mut budget, &mut counter);
    if root.atomic_count() == 0 {
        root.add_atomic("g0", Generator::new("g0", vec![Time::from_secs(1)]));
    }
    root
}

fn build_level(
    rng: &mut ChaCha8Rng,
    name: &str,
    level: usize,
    shape: &HierarchyShape,
    budget: &mut usize,
    counter: &mut usize,
) -> Coupled<String> {
    let mut model = Coupled::new(name);
    let is_root = level == 1;
    let (n_in, n_out) = if is_root { (0, 0) } else { (rng.random_range(1..=2), rng.random_range(1..=2)) };
    for i in 0..n_in {
        model.add_input(format!("i{i}"));
    }
    for o in 0..n_out {
        model.add_output(format!("o{o}"));
    }

    // (name, input ports, output ports) of each child.
    let mut children: Vec<(String, Vec<String>, Vec<String>)> = Vec::new();
    let n_children = rng.random_range(1..=4);
    for _ in 0..n_children {
        if *budget == 0 {
            break;
        }
        *counter += 1;
        let nested = level < shape.max_levels && *budget >= 2 && rng.random_bool(0.35);
        if nested {
            let child_name = format!("c{counter}");
            let child = build_level(rng, &child_name, level + 1, shape, budget, counter);
            let ins = child.interface().inputs().to_vec();
            let outs = child.interface().outputs().to_vec();
            model.add_coupled(child);
            children.push((child_name, ins, outs));
        } else if rng.random_bool(0.4) {
            *budget -= 1;
            let child_name = format!("g{counter}");
            let count = rng.random_range(1..=shape.max_emissions);
            let mut times: Vec<Time> = (0..count)
                .map(|_| Time::from_micros(rng.random_range(1..=shape.horizon_secs * 4) * 250_000))
                .collect();
            times.sort();
            model.add_atomic(child_name.clone(), Generator::new(&child_name, times));
            children.push((child_name, vec![], vec!["out".into()]));
        } else {
            *budget -= 1;
            let child_name = format!("d{counter}");
            let mut delay = Delay::new(&child_name, Time::from_micros(rng.random_range(1..=8) * 250_000));
            delay.max_hops = shape.max_hops;
            model.add_atomic(child_name.clone(), delay);
            children.push((child_name, vec!["in".into()], vec!["out".into()]));
        }
    }

    let inputs: Vec<(usize, String)> = children
        .iter()
        .enumerate()
        .flat_map(|(i, (_, ins, _))| ins.iter().map(move |p| (i, p.clone())))
        .collect();
    let outputs: Vec<(usize, String)> = children
        .iter()
        .enumerate()
        .flat_map(|(i, (_, _, outs))| outs.iter().map(move |p| (i, p.clone())))
        .collect();

    for i in 0..n_in {
        if inputs.is_empty() {
            break;
        }
        for _ in 0..rng.random_range(1..=2) {
            let (c, p) = &inputs[rng.random_range(0..inputs.len())];
            model.add_eic(&format!("i{i}"), &children[*c].0, p);
        }
    }
    for (c, p) in &outputs {
        for _ in 0..rng.random_range(0..=2) {
            let candidates: Vec<&(usize, String)> = inputs.iter().filter(|(d, _)| d != c).collect();
            if candidates.is_empty() {
                break;
            }
            let (d, q) = candidates[rng.random_range(0..candidates.len())];
            model.add_ic(&children[*c].0, p, &children[*d].0, q);
        }
    }
    for o in 0..n_out {
        if outputs.is_empty() {
            break;
        }
        let (c, p) = &outputs[rng.random_range(0..outputs.len())];
        model.add_eoc(&children[*c].0, p, &format!("o{o}"));
    }
    model
}
