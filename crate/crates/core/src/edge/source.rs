use habsim_devs::{Atomic, Bag, Interface, ModelError, Time};

use super::until;
use crate::epoch::Epoch;
use crate::event::Event;
use crate::scenario::Scenario;

/// Replays scenario commands on `out` at their time marks.
pub struct SimulationFile {
    commands: Vec<(Time, Event)>,
    next: usize,
    last: Time,
}

impl SimulationFile {
    pub fn new(scenario: &Scenario, epoch: Epoch) -> Self {
        let commands = scenario
            .commands
            .iter()
            .filter_map(|c| epoch.offset(c.at).map(|t| (t, c.to_event())))
            .collect();
        SimulationFile { commands, next: 0, last: Time::ZERO }
    }

    fn next_time(&self) -> Time {
        self.commands.get(self.next).map_or(Time::INFINITY, |c| c.0)
    }
}

impl Atomic<Event> for SimulationFile {
    fn interface(&self) -> Interface {
        Interface::new().with_output("out")
    }

    fn time_advance(&self) -> Time {
        until(self.last, self.next_time())
    }

    fn output(&self, out: &mut Bag<Event>) {
        let now = self.next_time();
        for (_, e) in self.commands[self.next..].iter().take_while(|c| c.0 == now) {
            out.push("out", e.clone());
        }
    }

    fn internal(&mut self, now: Time) -> Result<(), ModelError> {
        self.last = now;
        while self.commands.get(self.next).is_some_and(|c| c.0 <= now) {
            self.next += 1;
        }
        Ok(())
    }

    fn external(&mut self, now: Time, _elapsed: Time, _inputs: &Bag<Event>) -> Result<(), ModelError> {
        self.last = now;
        Ok(())
    }
}
