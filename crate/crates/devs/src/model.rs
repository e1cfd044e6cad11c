use std::fmt;

use crate::time::Time;

/// Failure raised by a model transition. The coordinator wraps it with the
/// model path and the virtual time before aborting the run.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct ModelError(pub String);

impl From<String> for ModelError {
    fn from(s: String) -> Self {
        ModelError(s)
    }
}

impl From<&str> for ModelError {
    fn from(s: &str) -> Self {
        ModelError(s.to_owned())
    }
}

/// Named input and output ports of a model.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Interface {
    inputs: Vec<String>,
    outputs: Vec<String>,
}

impl Interface {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_input(mut self, port: impl Into<String>) -> Self {
        self.inputs.push(port.into());
        self
    }

    pub fn with_output(mut self, port: impl Into<String>) -> Self {
        self.outputs.push(port.into());
        self
    }

    pub fn add_input(&mut self, port: impl Into<String>) {
        self.inputs.push(port.into());
    }

    pub fn add_output(&mut self, port: impl Into<String>) {
        self.outputs.push(port.into());
    }

    pub fn inputs(&self) -> &[String] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    pub fn has_input(&self, port: &str) -> bool {
        self.inputs.iter().any(|p| p == port)
    }

    pub fn has_output(&self, port: &str) -> bool {
        self.outputs.iter().any(|p| p == port)
    }

    /// First port name declared twice, if any. Input and output names share
    /// one namespace.
    pub(crate) fn duplicate_port(&self) -> Option<&str> {
        let all: Vec<&String> = self.inputs.iter().chain(self.outputs.iter()).collect();
        for (i, p) in all.iter().enumerate() {
            if all[..i].contains(p) {
                return Some(p.as_str());
            }
        }
        None
    }
}

/// Multiset of `(port, message)` pairs exchanged at one simulation instant.
///
/// Several messages may arrive on the same port at the same time; insertion
/// order is kept so that models see a deterministic sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Bag<M> {
    entries: Vec<(String, M)>,
}

impl<M> Default for Bag<M> {
    fn default() -> Self {
        Bag { entries: Vec::new() }
    }
}

impl<M> Bag<M> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, port: impl Into<String>, message: M) {
        self.entries.push((port.into(), message));
    }

    /// Messages received on `port`, in arrival order.
    pub fn on<'a>(&'a self, port: &'a str) -> impl Iterator<Item = &'a M> + 'a {
        self.entries
            .iter()
            .filter(move |(p, _)| p == port)
            .map(|(_, m)| m)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &M)> {
        self.entries.iter().map(|(p, m)| (p.as_str(), m))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub(crate) fn take_entries(&mut self) -> Vec<(String, M)> {
        std::mem::take(&mut self.entries)
    }

    pub(crate) fn entries_mut(&mut self) -> &mut Vec<(String, M)> {
        &mut self.entries
    }
}

impl<M> FromIterator<(String, M)> for Bag<M> {
    fn from_iter<T: IntoIterator<Item = (String, M)>>(iter: T) -> Self {
        Bag { entries: iter.into_iter().collect() }
    }
}

/// Behavior of an atomic Parallel DEVS model.
///
/// The coordinator calls [`output`](Atomic::output) right before an internal
/// or confluent transition, never before an external one. Exactly one of the
/// three transition functions fires per model and per instant.
///
/// Transitions receive the current virtual time as a convenience for models
/// that stamp their outputs; the formal arguments are the elapsed time (for
/// external transitions) and the input bag.
pub trait Atomic<M>: Send {
    fn interface(&self) -> Interface;

    /// Time until the next internal transition. [`Time::INFINITY`] means
    /// passive.
    fn time_advance(&self) -> Time;

    fn output(&self, out: &mut Bag<M>);

    fn internal(&mut self, now: Time) -> Result<(), ModelError>;

    fn external(&mut self, now: Time, elapsed: Time, inputs: &Bag<M>) -> Result<(), ModelError>;

    /// Collision between an internal transition and incoming inputs. The
    /// default applies the internal transition first, then the external one
    /// with zero elapsed time.
    fn confluent(&mut self, now: Time, inputs: &Bag<M>) -> Result<(), ModelError> {
        self.internal(now)?;
        self.external(now, Time::ZERO, inputs)
    }
}

/// A port on a named child component.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PortRef {
    pub component: String,
    pub port: String,
}

impl PortRef {
    pub fn new(component: impl Into<String>, port: impl Into<String>) -> Self {
        PortRef { component: component.into(), port: port.into() }
    }
}

impl fmt::Display for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.component, self.port)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Coupling {
    /// External input coupling: parent input port to child input port.
    Eic { from: String, to: PortRef },
    /// Internal coupling: child output port to another child's input port.
    Ic { from: PortRef, to: PortRef },
    /// External output coupling: child output port to parent output port.
    Eoc { from: PortRef, to: String },
}

impl fmt::Display for Coupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coupling::Eic { from, to } => write!(f, "EIC {from} -> {to}"),
            Coupling::Ic { from, to } => write!(f, "IC {from} -> {to}"),
            Coupling::Eoc { from, to } => write!(f, "EOC {from} -> {to}"),
        }
    }
}

pub enum Component<M> {
    Atomic(Box<dyn Atomic<M>>),
    Coupled(Coupled<M>),
}

impl<M> Component<M> {
    pub fn interface(&self) -> Interface {
        match self {
            Component::Atomic(a) => a.interface(),
            Component::Coupled(c) => c.interface.clone(),
        }
    }
}

impl<M> fmt::Debug for Component<M> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Component::Atomic(a) => f.debug_tuple("Atomic").field(&a.interface()).finish(),
            Component::Coupled(c) => c.fmt(f),
        }
    }
}

/// Network of components joined by EIC, IC and EOC couplings.
pub struct Coupled<M> {
    name: String,
    interface: Interface,
    components: Vec<(String, Component<M>)>,
    couplings: Vec<Coupling>,
}

impl<M> fmt::Debug for Coupled<M> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Coupled")
            .field("name", &self.name)
            .field("interface", &self.interface)
            .field("components", &self.components)
            .field("couplings", &self.couplings)
            .finish()
    }
}

impl<M> Coupled<M> {
    pub fn new(name: impl Into<String>) -> Self {
        Coupled {
            name: name.into(),
            interface: Interface::new(),
            components: Vec::new(),
            couplings: Vec::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn interface(&self) -> &Interface {
        &self.interface
    }

    pub fn add_input(&mut self, port: impl Into<String>) -> &mut Self {
        self.interface.add_input(port);
        self
    }

    pub fn add_output(&mut self, port: impl Into<String>) -> &mut Self {
        self.interface.add_output(port);
        self
    }

    pub fn add_atomic(&mut self, name: impl Into<String>, model: impl Atomic<M> + 'static) -> &mut Self {
        self.components.push((name.into(), Component::Atomic(Box::new(model))));
        self
    }

    pub fn add_boxed(&mut self, name: impl Into<String>, model: Box<dyn Atomic<M>>) -> &mut Self {
        self.components.push((name.into(), Component::Atomic(model)));
        self
    }

    pub fn add_coupled(&mut self, model: Coupled<M>) -> &mut Self {
        let name = model.name.clone();
        self.components.push((name, Component::Coupled(model)));
        self
    }

    pub fn add_component(&mut self, name: impl Into<String>, component: Component<M>) -> &mut Self {
        self.components.push((name.into(), component));
        self
    }

    pub fn add_eic(&mut self, from: &str, to_component: &str, to_port: &str) -> &mut Self {
        self.couplings.push(Coupling::Eic {
            from: from.to_owned(),
            to: PortRef::new(to_component, to_port),
        });
        self
    }

    pub fn add_ic(&mut self, from_component: &str, from_port: &str, to_component: &str, to_port: &str) -> &mut Self {
        self.couplings.push(Coupling::Ic {
            from: PortRef::new(from_component, from_port),
            to: PortRef::new(to_component, to_port),
        });
        self
    }

    pub fn add_eoc(&mut self, from_component: &str, from_port: &str, to: &str) -> &mut Self {
        self.couplings.push(Coupling::Eoc {
            from: PortRef::new(from_component, from_port),
            to: to.to_owned(),
        });
        self
    }

    pub fn add_coupling(&mut self, coupling: Coupling) -> &mut Self {
        self.couplings.push(coupling);
        self
    }

    pub fn components(&self) -> &[(String, Component<M>)] {
        &self.components
    }

    pub fn couplings(&self) -> &[Coupling] {
        &self.couplings
    }

    pub fn component(&self, name: &str) -> Option<&Component<M>> {
        self.components.iter().find(|(n, _)| n == name).map(|(_, c)| c)
    }

    pub(crate) fn into_parts(self) -> (String, Interface, Vec<(String, Component<M>)>, Vec<Coupling>) {
        (self.name, self.interface, self.components, self.couplings)
    }

    pub(crate) fn from_parts(
        name: String,
        interface: Interface,
        components: Vec<(String, Component<M>)>,
        couplings: Vec<Coupling>,
    ) -> Self {
        Coupled { name, interface, components, couplings }
    }

    /// True when every component is atomic.
    pub fn is_flat(&self) -> bool {
        self.components.iter().all(|(_, c)| matches!(c, Component::Atomic(_)))
    }

    /// Number of atomic models in the whole hierarchy.
    pub fn atomic_count(&self) -> usize {
        self.components
            .iter()
            .map(|(_, c)| match c {
                Component::Atomic(_) => 1,
                Component::Coupled(cc) => cc.atomic_count(),
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bag_keeps_multiple_messages_per_port() {
        let mut bag = Bag::new();
        bag.push("in", 1);
        bag.push("other", 2);
        bag.push("in", 3);
        assert_eq!(bag.on("in").copied().collect::<Vec<_>>(), vec![1, 3]);
        assert_eq!(bag.len(), 3);
    }

    #[test]
    fn duplicate_port_detection() {
        let ok = Interface::new().with_input("a").with_output("b");
        assert_eq!(ok.duplicate_port(), None);
        let dup = Interface::new().with_input("a").with_output("a");
        assert_eq!(dup.duplicate_port(), Some("a"));
    }
}
