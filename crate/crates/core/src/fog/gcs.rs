use std::collections::{BTreeMap, BTreeSet};

use habsim_devs::{Atomic, Bag, Interface, ModelError, Time};

use crate::edge::{until, Outbox};
use crate::epoch::Epoch;
use crate::event::Event;
use crate::log::EventLog;
use crate::scenario::{classify, CommandKind, Service};

/// Request port of a fog service.
pub fn req_port(service: Service) -> &'static str {
    match service {
        Service::Outliers => "req_outliers",
        Service::Infer => "req_infer",
        Service::Plan => "req_plan",
        Service::Report => "req_report",
        Service::Predict => "req_predict",
    }
}

/// Services hosted by the fog layer.
pub const FOG_SERVICES: [Service; 4] = [Service::Outliers, Service::Infer, Service::Plan, Service::Report];

/// Ground control station.
///
/// Raw sensor events go to the fog log, to the cloud on `d1` and to the
/// services on `data`. Service outputs go to the fog log and to the cloud on
/// `dh1`. Scenario triggers for fog services are forwarded on the matching
/// request port; a trigger for a service this station does not run leaves an
/// ERR event in the fog log.
pub struct Gcs {
    name: String,
    epoch: Epoch,
    enabled: BTreeSet<Service>,
    log: EventLog,
    last: Time,
    outbox: Outbox,
}

impl Gcs {
    pub fn new(name: &str, epoch: Epoch, enabled: BTreeSet<Service>, log: EventLog) -> Self {
        Gcs { name: name.to_owned(), epoch, enabled, log, last: Time::ZERO, outbox: Outbox::default() }
    }
}

impl Atomic<Event> for Gcs {
    fn interface(&self) -> Interface {
        let mut iface = Interface::new()
            .with_input("e")
            .with_input("cmd")
            .with_input("svc")
            .with_output("d1")
            .with_output("dh1")
            .with_output("data");
        for s in FOG_SERVICES {
            iface.add_output(req_port(s));
        }
        iface
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
        // Bags carry no order between ports; fix one so the log is stable.
        let mut by_port: BTreeMap<u8, Vec<&Event>> = BTreeMap::new();
        for (port, e) in inputs.iter() {
            let rank = match port {
                "e" => 0,
                "svc" => 1,
                "cmd" => 2,
                _ => continue,
            };
            by_port.entry(rank).or_default().push(e);
        }
        for (rank, events) in by_port {
            for e in events {
                match rank {
                    0 => {
                        self.log.append(e.clone());
                        self.outbox.push(now, "d1", e.clone());
                        self.outbox.push(now, "data", e.clone());
                    }
                    1 => {
                        self.log.append(e.clone());
                        self.outbox.push(now, "dh1", e.clone());
                    }
                    _ => match classify(e) {
                        Some(CommandKind::Trigger(s)) if FOG_SERVICES.contains(&s) => {
                            if self.enabled.contains(&s) {
                                self.outbox.push(now, req_port(s), e.clone());
                            } else {
                                let err = Event::new("ERR", self.name.clone(), self.epoch.at(now))
                                    .with("Error", format!("service {s} is not available"));
                                self.log.append(err);
                            }
                        }
                        _ => {}
                    },
                }
            }
        }
        Ok(())
    }
}
