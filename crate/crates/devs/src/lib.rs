//! Parallel DEVS modeling and simulation kernel.
//!
//! Models are built from [`Atomic`] behaviors composed into [`Coupled`]
//! networks through EIC, IC and EOC couplings. A [`Simulator`] executes the
//! hierarchy with the Parallel DEVS protocol: at each next-event time the
//! outputs of all imminent components are collected, routed through the
//! couplings as bags, and then every affected component fires exactly one of
//! its internal, external or confluent transitions.
//!
//! Runs can be in virtual time ([`Simulator::simulate`]) or paced against the
//! wall clock with optional external injections ([`Simulator::run_paced`]).
//! [`flatten`] rewrites any hierarchy into an equivalent single-level model.
//!
//! ```
//! use habsim_devs::{Atomic, Bag, Coupled, Interface, MemorySink, ModelError, SimulationClock, Time, simulate};
//!
//! struct Ticker { left: u32 }
//!
//! impl Atomic<u32> for Ticker {
//!     fn interface(&self) -> Interface { Interface::new().with_output("out") }
//!     fn time_advance(&self) -> Time {
//!         if self.left > 0 { Time::from_secs(1) } else { Time::INFINITY }
//!     }
//!     fn output(&self, out: &mut Bag<u32>) { out.push("out", self.left) }
//!     fn internal(&mut self, _now: Time) -> Result<(), ModelError> { self.left -= 1; Ok(()) }
//!     fn external(&mut self, _: Time, _: Time, _: &Bag<u32>) -> Result<(), ModelError> { Ok(()) }
//! }
//!
//! let mut root = Coupled::new("root");
//! root.add_atomic("ticker", Ticker { left: 3 });
//! let mut trace = MemorySink::new();
//! let clock = SimulationClock::virtual_time(Time::ZERO, Time::INFINITY);
//! let report = simulate(root, &clock, &mut [&mut trace]).unwrap();
//! assert_eq!(report.event_count, 3);
//! assert_eq!(trace.records[2].time, Time::from_secs(3));
//! ```

mod error;
mod flatten;
mod model;
mod simulator;
mod sink;
mod structure;
#[cfg(feature = "testkit")]
pub mod testkit;
mod time;

pub use error::{SimError, StructureError};
pub use flatten::flatten;
pub use model::{Atomic, Bag, Component, Coupled, Coupling, Interface, ModelError, PortRef};
pub use simulator::{
    run_paced, simulate, ClockMode, Injection, SimulationClock, SimulationReport, Simulator, TransitionCounts,
    DEFAULT_ZENO_BOUND,
};
pub use sink::{CountingSink, LineSink, MemorySink, OwnedRecord, TraceRecord, TraceSink};
pub use structure::validate;
pub use time::Time;
