use std::collections::{BTreeMap, HashMap};
use std::sync::mpsc::{Receiver, RecvTimeoutError, TryRecvError};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::SimError;
use crate::flatten::join_path;
use crate::model::{Atomic, Bag, Component, Coupled, Coupling};
use crate::sink::{TraceRecord, TraceSink};
use crate::structure::validate;
use crate::time::Time;

/// Consecutive zero-advance cycles tolerated before a run is declared zeno.
pub const DEFAULT_ZENO_BOUND: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockMode {
    /// As fast as possible.
    Virtual,
    /// Paced against the wall clock.
    RealTime,
    /// Paced, and accepting injected messages from outside the model.
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationClock {
    pub mode: ClockMode,
    /// Virtual seconds per wall second. Ignored in virtual mode.
    pub scale: f64,
    pub start: Time,
    pub end: Time,
}

impl SimulationClock {
    pub fn virtual_time(start: Time, end: Time) -> Self {
        SimulationClock { mode: ClockMode::Virtual, scale: 1.0, start, end }
    }

    pub fn realtime(start: Time, end: Time, scale: f64) -> Self {
        SimulationClock { mode: ClockMode::RealTime, scale, start, end }
    }

    pub fn hybrid(start: Time, end: Time, scale: f64) -> Self {
        SimulationClock { mode: ClockMode::Hybrid, scale, start, end }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.end < self.start {
            return Err(SimError::Clock(format!("end {} precedes start {}", self.end, self.start)));
        }
        if self.mode != ClockMode::Virtual && !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(SimError::Clock(format!("scale must be positive, got {}", self.scale)));
        }
        Ok(())
    }
}

/// A message delivered to a root input port from outside the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Injection<M> {
    pub time: Time,
    pub port: String,
    pub message: M,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TransitionCounts {
    pub internal: u64,
    pub external: u64,
    pub confluent: u64,
}

impl TransitionCounts {
    pub fn total(&self) -> u64 {
        self.internal + self.external + self.confluent
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimulationReport {
    pub final_time: Time,
    /// Messages emitted by atomic models, plus accepted injections.
    pub event_count: u64,
    pub cycles: u64,
    pub transitions: BTreeMap<String, TransitionCounts>,
    /// Messages that left the root through one of its output ports.
    pub root_outputs: u64,
    pub injections_accepted: u64,
    pub injections_rejected: u64,
}

enum Child {
    Atomic(usize),
    Coupled(usize),
}

#[derive(Clone)]
enum Target {
    Child(usize, String),
    ParentOut(String),
}

struct CoupledSlot {
    parent: Option<(usize, usize)>,
    children: Vec<Child>,
    out_routes: HashMap<(usize, String), Vec<Target>>,
    in_routes: HashMap<String, Vec<Target>>,
}

struct AtomicSlot<M> {
    path: String,
    model: Box<dyn Atomic<M>>,
    parent: (usize, usize),
    t_last: Time,
    t_next: Time,
    inbox: Vec<(u64, String, M)>,
    outbox: Bag<M>,
    counts: TransitionCounts,
}

/// Hierarchical Parallel DEVS coordinator.
///
/// Messages are routed through the coupling tree at run time (coupled models
/// are never flattened here), so comparing a hierarchy against its
/// [`flatten`](crate::flatten)ed form is a real equivalence check.
pub struct Simulator<M> {
    name: String,
    root_inputs: Vec<String>,
    atomics: Vec<AtomicSlot<M>>,
    coupled: Vec<CoupledSlot>,
    parallel: bool,
    zeno_bound: u64,
    t_now: Time,
    last_cycle: Option<Time>,
    zero_advance: u64,
    pending: Vec<Injection<M>>,
    report: SimulationReport,
}

impl<M: Clone + Send + Sync> Simulator<M> {
    /// Validates `root` and prepares it for execution starting at `t=0`.
    pub fn new(root: Coupled<M>) -> Result<Self, SimError> {
        validate(&root)?;
        let name = root.name().to_owned();
        let root_inputs = root.interface().inputs().to_vec();
        let mut sim = Simulator {
            name,
            root_inputs,
            atomics: Vec::new(),
            coupled: Vec::new(),
            parallel: false,
            zeno_bound: DEFAULT_ZENO_BOUND,
            t_now: Time::ZERO,
            last_cycle: None,
            zero_advance: 0,
            pending: Vec::new(),
            report: SimulationReport::default(),
        };
        sim.build(root, "", None);
        Ok(sim)
    }

    /// Evaluates outputs and transitions of the components active in a cycle
    /// on the rayon pool.
    pub fn parallel(mut self, on: bool) -> Self {
        self.parallel = on;
        self
    }

    pub fn zeno_bound(mut self, bound: u64) -> Self {
        self.zeno_bound = bound;
        self
    }

    fn build(&mut self, model: Coupled<M>, path: &str, parent: Option<(usize, usize)>) -> usize {
        let index = self.coupled.len();
        self.coupled.push(CoupledSlot {
            parent,
            children: Vec::new(),
            out_routes: HashMap::new(),
            in_routes: HashMap::new(),
        });
        let (_, _, components, couplings) = model.into_parts();
        let positions: HashMap<String, usize> =
            components.iter().enumerate().map(|(i, (n, _))| (n.clone(), i)).collect();

        let mut children = Vec::with_capacity(components.len());
        for (pos, (name, component)) in components.into_iter().enumerate() {
            let child_path = join_path(path, &name);
            match component {
                Component::Atomic(model) => {
                    self.atomics.push(AtomicSlot {
                        path: child_path,
                        model,
                        parent: (index, pos),
                        t_last: Time::ZERO,
                        t_next: Time::INFINITY,
                        inbox: Vec::new(),
                        outbox: Bag::new(),
                        counts: TransitionCounts::default(),
                    });
                    children.push(Child::Atomic(self.atomics.len() - 1));
                }
                Component::Coupled(c) => {
                    let ci = self.build(c, &child_path, Some((index, pos)));
                    children.push(Child::Coupled(ci));
                }
            }
        }

        let slot = &mut self.coupled[index];
        slot.children = children;
        for coupling in couplings {
            match coupling {
                Coupling::Eic { from, to } => slot
                    .in_routes
                    .entry(from)
                    .or_default()
                    .push(Target::Child(positions[&to.component], to.port)),
                Coupling::Ic { from, to } => slot
                    .out_routes
                    .entry((positions[&from.component], from.port))
                    .or_default()
                    .push(Target::Child(positions[&to.component], to.port)),
                Coupling::Eoc { from, to } => slot
                    .out_routes
                    .entry((positions[&from.component], from.port))
                    .or_default()
                    .push(Target::ParentOut(to)),
            }
        }
        index
    }

    fn initialize(&mut self, start: Time) {
        self.t_now = start;
        for slot in &mut self.atomics {
            slot.t_last = start;
            slot.t_next = start + slot.model.time_advance();
        }
    }

    /// Queues an injection ahead of a run. Rejected (and counted) when it is
    /// earlier than the current virtual time or names an unknown port.
    pub fn schedule_injection(&mut self, injection: Injection<M>) -> bool {
        if !self.root_inputs.iter().any(|p| *p == injection.port) {
            log::warn!("rejected injection on unknown root port `{}`", injection.port);
            self.report.injections_rejected += 1;
            return false;
        }
        if injection.time < self.t_now {
            log::warn!(
                "rejected injection at t={} on `{}`: virtual time already at t={} (causality)",
                injection.time,
                injection.port,
                self.t_now
            );
            self.report.injections_rejected += 1;
            return false;
        }
        let at = self.pending.partition_point(|p| p.time <= injection.time);
        self.pending.insert(at, injection);
        self.report.injections_accepted += 1;
        true
    }

    fn next_time(&self) -> Time {
        let models = self.atomics.iter().map(|a| a.t_next).min().unwrap_or(Time::INFINITY);
        let injected = self.pending.first().map(|p| p.time).unwrap_or(Time::INFINITY);
        models.min(injected)
    }

    /// Runs in virtual time until `clock.end` or until no component has a
    /// finite time advance left.
    pub fn simulate(
        mut self,
        clock: &SimulationClock,
        sinks: &mut [&mut dyn TraceSink<M>],
    ) -> Result<SimulationReport, SimError> {
        clock.validate()?;
        self.initialize(clock.start);
        loop {
            let tn = self.next_time();
            if tn.is_infinite() || tn > clock.end {
                break;
            }
            self.cycle(tn, sinks)?;
        }
        Ok(self.finish(None))
    }

    /// Runs paced against the wall clock: the gap between consecutive events
    /// is waited out as `(t_next - t_now) / scale`. Messages arriving on
    /// `injector` wake the coordinator and are delivered to the named root
    /// input port at their timestamp. In virtual mode this is [`simulate`].
    ///
    /// [`simulate`]: Simulator::simulate
    pub fn run_paced(
        mut self,
        clock: &SimulationClock,
        sinks: &mut [&mut dyn TraceSink<M>],
        injector: Option<Receiver<Injection<M>>>,
    ) -> Result<SimulationReport, SimError> {
        if clock.mode == ClockMode::Virtual {
            if injector.is_some() {
                log::warn!("virtual mode ignores the injection endpoint");
            }
            return self.simulate(clock, sinks);
        }
        clock.validate()?;
        self.initialize(clock.start);
        let wall_start = Instant::now();
        let wall_at = |t: Time| {
            let span = (t - clock.start).as_secs_f64() / clock.scale;
            wall_start + Duration::from_secs_f64(span)
        };

        let mut rx = injector;
        loop {
            let tn = self.next_time();
            let horizon = tn.min(clock.end);
            if horizon.is_infinite() && rx.is_none() {
                break;
            }
            let deadline = (!horizon.is_infinite()).then(|| wall_at(horizon));

            if let Some(r) = &rx {
                let received = match deadline {
                    Some(d) => {
                        let now = Instant::now();
                        if d <= now {
                            match r.try_recv() {
                                Ok(inj) => Some(Ok(inj)),
                                Err(TryRecvError::Empty) => None,
                                Err(TryRecvError::Disconnected) => Some(Err(())),
                            }
                        } else {
                            match r.recv_timeout(d - now) {
                                Ok(inj) => Some(Ok(inj)),
                                Err(RecvTimeoutError::Timeout) => None,
                                Err(RecvTimeoutError::Disconnected) => Some(Err(())),
                            }
                        }
                    }
                    None => Some(r.recv().map_err(|_| ())),
                };
                match received {
                    Some(Ok(inj)) => {
                        self.schedule_injection(inj);
                        continue;
                    }
                    Some(Err(())) => {
                        rx = None;
                        continue;
                    }
                    None => {}
                }
            } else if let Some(d) = deadline {
                let now = Instant::now();
                if d > now {
                    std::thread::sleep(d - now);
                }
            }

            if tn > clock.end {
                break;
            }
            self.cycle(tn, sinks)?;
        }
        let end = (!clock.end.is_infinite()).then_some(clock.end);
        Ok(self.finish(end))
    }

    fn finish(mut self, end: Option<Time>) -> SimulationReport {
        self.report.final_time = end.unwrap_or(self.t_now);
        self.report.transitions = self.atomics.iter().map(|a| (a.path.clone(), a.counts)).collect();
        self.report
    }

    fn cycle(&mut self, tn: Time, sinks: &mut [&mut dyn TraceSink<M>]) -> Result<(), SimError> {
        if self.last_cycle == Some(tn) {
            self.zero_advance += 1;
            if self.zero_advance > self.zeno_bound {
                return Err(SimError::Zeno { time: tn, iterations: self.zero_advance });
            }
        } else {
            self.zero_advance = 0;
        }
        self.last_cycle = Some(tn);
        self.t_now = tn;
        self.report.cycles += 1;

        // Outputs of imminent components, evaluated before any state change.
        let emit = |slot: &mut AtomicSlot<M>| {
            if slot.t_next == tn {
                slot.outbox.clear();
                slot.model.output(&mut slot.outbox);
            }
        };
        if self.parallel {
            self.atomics.par_iter_mut().for_each(emit);
        } else {
            self.atomics.iter_mut().for_each(emit);
        }

        // (source, port, message); `None` source marks a root injection.
        let mut emitted: Vec<(Option<usize>, String, M)> = Vec::new();
        for (i, slot) in self.atomics.iter_mut().enumerate() {
            if slot.t_next == tn {
                emitted.extend(slot.outbox.take_entries().into_iter().map(|(p, m)| (Some(i), p, m)));
            }
        }
        let due = self.pending.partition_point(|p| p.time <= tn);
        emitted.extend(self.pending.drain(..due).map(|inj| (None, inj.port, inj.message)));

        let atomics = &self.atomics;
        let root_name = self.name.as_str();
        let source_of = |s: Option<usize>| s.map_or(root_name, |i| atomics[i].path.as_str());
        emitted.sort_by(|a, b| (source_of(a.0), a.1.as_str()).cmp(&(source_of(b.0), b.1.as_str())));

        for (source, port, message) in &emitted {
            let record = TraceRecord { time: tn, source: source_of(*source), port, message };
            for sink in sinks.iter_mut() {
                sink.record(&record);
            }
        }
        self.report.event_count += emitted.len() as u64;

        for (seq, (source, port, message)) in emitted.into_iter().enumerate() {
            let seq = seq as u64;
            match source {
                Some(i) => {
                    let (parent, pos) = self.atomics[i].parent;
                    self.route_from_child(parent, pos, &port, &message, seq);
                }
                None => {
                    let targets = self.coupled[0].in_routes.get(&port).cloned().unwrap_or_default();
                    for target in targets {
                        self.dispatch(0, &target, &message, seq);
                    }
                }
            }
        }

        let transition = |slot: &mut AtomicSlot<M>| -> Result<(), SimError> {
            let imminent = slot.t_next == tn;
            if !imminent && slot.inbox.is_empty() {
                return Ok(());
            }
            let mut inbox = std::mem::take(&mut slot.inbox);
            inbox.sort_by(|a, b| (a.0, a.1.as_str()).cmp(&(b.0, b.1.as_str())));
            let mut bag = Bag::new();
            bag.entries_mut().extend(inbox.into_iter().map(|(_, p, m)| (p, m)));

            let result = if imminent && !bag.is_empty() {
                slot.counts.confluent += 1;
                slot.model.confluent(tn, &bag)
            } else if imminent {
                slot.counts.internal += 1;
                slot.model.internal(tn)
            } else {
                slot.counts.external += 1;
                slot.model.external(tn, tn - slot.t_last, &bag)
            };
            result.map_err(|source| SimError::Transition { path: slot.path.clone(), time: tn, source })?;
            slot.t_last = tn;
            slot.t_next = tn + slot.model.time_advance();
            Ok(())
        };
        let results: Vec<Result<(), SimError>> = if self.parallel {
            self.atomics.par_iter_mut().map(transition).collect()
        } else {
            self.atomics.iter_mut().map(transition).collect()
        };
        results.into_iter().collect::<Result<(), SimError>>()
    }

    fn route_from_child(&mut self, coupled: usize, pos: usize, port: &str, message: &M, seq: u64) {
        let targets = self.coupled[coupled]
            .out_routes
            .get(&(pos, port.to_owned()))
            .cloned()
            .unwrap_or_default();
        for target in targets {
            self.dispatch(coupled, &target, message, seq);
        }
    }

    fn dispatch(&mut self, coupled: usize, target: &Target, message: &M, seq: u64) {
        match target {
            Target::Child(pos, port) => match self.coupled[coupled].children[*pos] {
                Child::Atomic(a) => self.atomics[a].inbox.push((seq, port.clone(), message.clone())),
                Child::Coupled(c) => {
                    let targets = self.coupled[c].in_routes.get(port).cloned().unwrap_or_default();
                    for t in targets {
                        self.dispatch(c, &t, message, seq);
                    }
                }
            },
            Target::ParentOut(port) => match self.coupled[coupled].parent {
                Some((parent, pos)) => self.route_from_child(parent, pos, port, message, seq),
                None => self.report.root_outputs += 1,
            },
        }
    }
}

/// Validates and runs `root` in virtual time.
pub fn simulate<M: Clone + Send + Sync>(
    root: Coupled<M>,
    clock: &SimulationClock,
    sinks: &mut [&mut dyn TraceSink<M>],
) -> Result<SimulationReport, SimError> {
    Simulator::new(root)?.simulate(clock, sinks)
}

/// Validates and runs `root` paced against the wall clock.
pub fn run_paced<M: Clone + Send + Sync>(
    root: Coupled<M>,
    clock: &SimulationClock,
    sinks: &mut [&mut dyn TraceSink<M>],
    injector: Option<Receiver<Injection<M>>>,
) -> Result<SimulationReport, SimError> {
    Simulator::new(root)?.run_paced(clock, sinks, injector)
}
