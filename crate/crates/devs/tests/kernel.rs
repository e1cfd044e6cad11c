use habsim_devs::testkit as common;

use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use common::{Collector, Delay, Generator};
use habsim_devs::{
    flatten, simulate, Atomic, Bag, Coupled, Coupling, Injection, Interface, MemorySink, ModelError, PortRef,
    SimError, SimulationClock, Simulator, Time,
};

fn secs(s: f64) -> Time {
    Time::from_secs_f64(s)
}

fn pipeline() -> (Coupled<String>, common::Received) {
    let (collector, seen) = Collector::new();
    let mut root = Coupled::new("root");
    root.add_atomic("gen", Generator::new("g", vec![secs(1.0), secs(2.0), secs(3.0)]))
        .add_atomic("delay", Delay::new("delay", secs(0.5)))
        .add_atomic("collector", collector)
        .add_ic("gen", "out", "delay", "in")
        .add_ic("delay", "out", "collector", "in");
    (root, seen)
}

#[test]
fn generator_delay_collector_trace() {
    let (root, seen) = pipeline();
    let mut trace = MemorySink::new();
    let clock = SimulationClock::virtual_time(Time::ZERO, Time::INFINITY);
    let report = simulate(root, &clock, &mut [&mut trace]).unwrap();

    // Worked by hand: the generator fires at 1, 2, 3; each message sits in
    // the delay for 0.5 and reaches the collector through one IC.
    let expected = [
        (1.0, "gen", "g1"),
        (1.5, "delay", "g1>delay:in"),
        (2.0, "gen", "g2"),
        (2.5, "delay", "g2>delay:in"),
        (3.0, "gen", "g3"),
        (3.5, "delay", "g3>delay:in"),
    ];
    let got: Vec<(Time, &str, &str)> =
        trace.records.iter().map(|r| (r.time, r.source.as_str(), r.message.as_str())).collect();
    let want: Vec<(Time, &str, &str)> = expected.iter().map(|(t, s, m)| (secs(*t), *s, *m)).collect();
    assert_eq!(got, want);

    let seen = seen.lock().unwrap();
    assert_eq!(
        *seen,
        vec![
            (secs(1.5), "g1>delay:in".to_owned()),
            (secs(2.5), "g2>delay:in".to_owned()),
            (secs(3.5), "g3>delay:in".to_owned()),
        ]
    );
    assert_eq!(report.final_time, secs(3.5));
    assert_eq!(report.event_count, 6);
    assert_eq!(report.transitions["collector"].external, 3);
    assert_eq!(report.transitions["gen"].internal, 3);
}

#[test]
fn all_passive_root_terminates_at_start() {
    let (c1, _) = Collector::new();
    let (c2, _) = Collector::new();
    let mut root = Coupled::new("root");
    root.add_atomic("a", c1).add_atomic("b", c2);
    let start = Time::from_secs(42);
    let report = simulate(root, &SimulationClock::virtual_time(start, Time::INFINITY), &mut []).unwrap();
    assert_eq!(report.final_time, start);
    assert_eq!(report.event_count, 0);
    assert_eq!(report.cycles, 0);
}

#[test]
fn end_time_bounds_the_run() {
    let (root, seen) = pipeline();
    let clock = SimulationClock::virtual_time(Time::ZERO, secs(2.5));
    let report = simulate(root, &clock, &mut []).unwrap();
    assert_eq!(report.final_time, secs(2.5));
    assert_eq!(seen.lock().unwrap().len(), 2);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fired {
    Internal,
    External,
    Confluent,
}

/// Internal transition scheduled at t=5, then passive.
struct Probe {
    log: Arc<Mutex<Vec<(Time, Fired)>>>,
    armed: bool,
}

impl Atomic<String> for Probe {
    fn interface(&self) -> Interface {
        Interface::new().with_input("in").with_output("out")
    }
    fn time_advance(&self) -> Time {
        if self.armed {
            Time::from_secs(5)
        } else {
            Time::INFINITY
        }
    }
    fn output(&self, out: &mut Bag<String>) {
        out.push("out", "probe".to_owned());
    }
    fn internal(&mut self, now: Time) -> Result<(), ModelError> {
        self.log.lock().unwrap().push((now, Fired::Internal));
        self.armed = false;
        Ok(())
    }
    fn external(&mut self, now: Time, _e: Time, _x: &Bag<String>) -> Result<(), ModelError> {
        self.log.lock().unwrap().push((now, Fired::External));
        Ok(())
    }
    fn confluent(&mut self, now: Time, _x: &Bag<String>) -> Result<(), ModelError> {
        self.log.lock().unwrap().push((now, Fired::Confluent));
        self.armed = false;
        Ok(())
    }
}

#[test]
fn collision_fires_confluent_only() {
    let log = Arc::new(Mutex::new(Vec::new()));
    let mut root = Coupled::new("root");
    root.add_atomic("gen", Generator::new("g", vec![Time::from_secs(5)]))
        .add_atomic("probe", Probe { log: log.clone(), armed: true })
        .add_ic("gen", "out", "probe", "in");
    let report = simulate(root, &SimulationClock::virtual_time(Time::ZERO, Time::INFINITY), &mut []).unwrap();
    assert_eq!(*log.lock().unwrap(), vec![(Time::from_secs(5), Fired::Confluent)]);
    let counts = report.transitions["probe"];
    assert_eq!((counts.internal, counts.external, counts.confluent), (0, 0, 1));
}

/// Always imminent with a zero time advance.
struct Zeno;

impl Atomic<String> for Zeno {
    fn interface(&self) -> Interface {
        Interface::new()
    }
    fn time_advance(&self) -> Time {
        Time::ZERO
    }
    fn output(&self, _out: &mut Bag<String>) {}
    fn internal(&mut self, _now: Time) -> Result<(), ModelError> {
        Ok(())
    }
    fn external(&mut self, _n: Time, _e: Time, _x: &Bag<String>) -> Result<(), ModelError> {
        Ok(())
    }
}

#[test]
fn zeno_guard_aborts() {
    let mut root = Coupled::new("root");
    root.add_atomic("z", Zeno);
    let sim = Simulator::new(root).unwrap().zeno_bound(50);
    let err = sim.simulate(&SimulationClock::virtual_time(Time::ZERO, Time::INFINITY), &mut []).unwrap_err();
    assert!(matches!(err, SimError::Zeno { iterations: 51, .. }), "{err}");
}

struct Failing;

impl Atomic<String> for Failing {
    fn interface(&self) -> Interface {
        Interface::new()
    }
    fn time_advance(&self) -> Time {
        Time::from_secs(7)
    }
    fn output(&self, _out: &mut Bag<String>) {}
    fn internal(&mut self, _now: Time) -> Result<(), ModelError> {
        Err("sensor exploded".into())
    }
    fn external(&mut self, _n: Time, _e: Time, _x: &Bag<String>) -> Result<(), ModelError> {
        Ok(())
    }
}

#[test]
fn transition_failure_reports_path_and_time() {
    let mut inner = Coupled::new("inner");
    inner.add_atomic("bad", Failing);
    let mut root = Coupled::new("root");
    root.add_coupled(inner);
    let err = simulate(root, &SimulationClock::virtual_time(Time::ZERO, Time::INFINITY), &mut []).unwrap_err();
    match err {
        SimError::Transition { path, time, .. } => {
            assert_eq!(path, "inner.bad");
            assert_eq!(time, Time::from_secs(7));
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn malformed_model_is_rejected_before_start() {
    let mut root = Coupled::new("root");
    root.add_atomic("d", Delay::new("d", secs(1.0))).add_ic("d", "out", "d", "in");
    assert!(matches!(Simulator::new(root), Err(SimError::Structure(_))));
}

/// Three-level nest: `a.gen` leaves through two EOCs, crosses one root IC and
/// enters `b.sink` through two EICs.
fn nested_chain() -> (Coupled<String>, common::Received) {
    let mut a = Coupled::new("a");
    a.add_output("o");
    let mut a_inner = Coupled::new("inner");
    a_inner
        .add_output("o")
        .add_atomic("gen", Generator::new("g", vec![secs(1.0)]))
        .add_eoc("gen", "out", "o");
    a.add_coupled(a_inner).add_eoc("inner", "o", "o");

    let (collector, seen) = Collector::new();
    let mut b = Coupled::new("b");
    b.add_input("i");
    let mut b_inner = Coupled::new("inner");
    b_inner.add_input("i").add_atomic("sink", collector).add_eic("i", "sink", "in");
    b.add_coupled(b_inner).add_eic("i", "inner", "i");

    let mut root = Coupled::new("root");
    root.add_coupled(a).add_coupled(b).add_ic("a", "o", "b", "i");
    (root, seen)
}

#[test]
fn flatten_collapses_eoc_eic_chain() {
    let (root, _) = nested_chain();
    let flat = flatten(root).unwrap();
    assert!(flat.is_flat());
    let names: Vec<&str> = flat.components().iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, vec!["a.inner.gen", "b.inner.sink"]);
    assert_eq!(
        flat.couplings(),
        &[Coupling::Ic {
            from: PortRef::new("a.inner.gen", "out"),
            to: PortRef::new("b.inner.sink", "in"),
        }]
    );
}

#[test]
fn flatten_of_flat_model_is_identity() {
    let (root, _) = pipeline();
    let mut before: Vec<Coupling> = root.couplings().to_vec();
    let names: Vec<String> = root.components().iter().map(|(n, _)| n.clone()).collect();
    let flat = flatten(root).unwrap();
    let mut after: Vec<Coupling> = flat.couplings().to_vec();
    before.sort();
    after.sort();
    assert_eq!(before, after);
    let flat_names: Vec<String> = flat.components().iter().map(|(n, _)| n.clone()).collect();
    assert_eq!(names, flat_names);
}

#[test]
fn nested_and_flat_deliver_identically() {
    let clock = SimulationClock::virtual_time(Time::ZERO, Time::INFINITY);
    let (root, seen_nested) = nested_chain();
    let mut t1 = MemorySink::new();
    simulate(root, &clock, &mut [&mut t1]).unwrap();
    let (root, seen_flat) = nested_chain();
    let mut t2 = MemorySink::new();
    simulate(flatten(root).unwrap(), &clock, &mut [&mut t2]).unwrap();
    assert_eq!(t1.records, t2.records);
    assert_eq!(*seen_nested.lock().unwrap(), vec![(secs(1.0), "g1".to_owned())]);
    assert_eq!(*seen_nested.lock().unwrap(), *seen_flat.lock().unwrap());
}

#[test]
fn paced_run_waits_out_virtual_time() {
    let (root, seen) = pipeline();
    // 3.5 virtual seconds at 35x: 100 ms of wall time.
    let clock = SimulationClock::realtime(Time::ZERO, secs(3.5), 35.0);
    let started = Instant::now();
    let report = Simulator::new(root).unwrap().run_paced(&clock, &mut [], None).unwrap();
    let wall = started.elapsed();
    assert!(wall >= Duration::from_millis(95), "{wall:?}");
    assert!(wall < Duration::from_millis(300), "{wall:?}");
    assert_eq!(seen.lock().unwrap().len(), 3);
    assert_eq!(report.final_time, secs(3.5));
}

#[test]
fn paced_virtual_mode_matches_simulate() {
    let clock = SimulationClock::virtual_time(Time::ZERO, Time::INFINITY);
    let (root, _) = pipeline();
    let mut a = MemorySink::new();
    let ra = simulate(root, &clock, &mut [&mut a]).unwrap();
    let (root, _) = pipeline();
    let mut b = MemorySink::new();
    let (_tx, rx) = mpsc::channel();
    let rb = Simulator::new(root).unwrap().run_paced(&clock, &mut [&mut b], Some(rx)).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(ra, rb);
}

#[test]
fn injection_wakes_paced_run_and_late_ones_are_rejected() {
    let (collector, seen) = Collector::new();
    let mut root = Coupled::new("root");
    root.add_input("inject")
        .add_atomic("gen", Generator::new("g", vec![Time::from_minutes(10)]))
        .add_atomic("collector", collector)
        .add_ic("gen", "out", "collector", "in")
        .add_eic("inject", "collector", "in");

    // 30 virtual minutes in 200 ms of wall time.
    let clock = SimulationClock::hybrid(Time::ZERO, Time::from_minutes(30), 9000.0);
    let (tx, rx) = mpsc::channel();
    let sender = std::thread::spawn(move || {
        // Virtual time is past 10 min after ~67 ms of wall time.
        std::thread::sleep(Duration::from_millis(100));
        tx.send(Injection { time: Time::from_minutes(5), port: "inject".into(), message: "late".into() })
            .unwrap();
        tx.send(Injection { time: Time::from_minutes(25), port: "inject".into(), message: "hw".into() })
            .unwrap();
        tx.send(Injection { time: Time::from_minutes(26), port: "nope".into(), message: "x".into() })
            .unwrap();
    });
    let mut trace = MemorySink::new();
    let report = Simulator::new(root).unwrap().run_paced(&clock, &mut [&mut trace], Some(rx)).unwrap();
    sender.join().unwrap();

    assert_eq!(
        *seen.lock().unwrap(),
        vec![(Time::from_minutes(10), "g1".to_owned()), (Time::from_minutes(25), "hw".to_owned())]
    );
    assert_eq!(report.injections_accepted, 1);
    assert_eq!(report.injections_rejected, 2);
    let injected = trace.records.iter().find(|r| r.message == "hw").unwrap();
    assert_eq!(injected.source, "root");
    assert_eq!(injected.port, "inject");
}

#[test]
fn invalid_clock_rejected() {
    let (root, _) = pipeline();
    let clock = SimulationClock::realtime(Time::ZERO, Time::from_secs(1), 0.0);
    assert!(matches!(Simulator::new(root).unwrap().run_paced(&clock, &mut [], None), Err(SimError::Clock(_))));
    let (root, _) = pipeline();
    let clock = SimulationClock::virtual_time(Time::from_secs(5), Time::from_secs(1));
    assert!(matches!(simulate(root, &clock, &mut []), Err(SimError::Clock(_))));
}
