use std::collections::HashMap;

use crate::error::StructureError;
use crate::model::{Component, Coupled, Coupling, Interface};

/// Checks the coupling invariants of a hierarchy: unique component names,
/// unique port names, existing endpoints with the right direction, and no
/// component wired straight back to itself.
pub fn validate<M>(root: &Coupled<M>) -> Result<(), StructureError> {
    validate_coupled(root, root.name())
}

fn validate_coupled<M>(model: &Coupled<M>, path: &str) -> Result<(), StructureError> {
    if let Some(port) = model.interface().duplicate_port() {
        return Err(StructureError::DuplicatePort { model: path.to_owned(), port: port.to_owned() });
    }

    let mut children: HashMap<&str, Interface> = HashMap::new();
    for (name, component) in model.components() {
        if name.is_empty() || name.trim() != name {
            return Err(StructureError::InvalidName(name.clone()));
        }
        let iface = component.interface();
        if let Some(port) = iface.duplicate_port() {
            return Err(StructureError::DuplicatePort {
                model: format!("{path}.{name}"),
                port: port.to_owned(),
            });
        }
        if children.insert(name.as_str(), iface).is_some() {
            return Err(StructureError::DuplicateComponent {
                parent: path.to_owned(),
                name: name.clone(),
            });
        }
    }

    let parent = model.interface();
    for coupling in model.couplings() {
        let child = |component: &str| {
            children.get(component).ok_or_else(|| StructureError::UnknownComponent {
                parent: path.to_owned(),
                coupling: coupling.to_string(),
                component: component.to_owned(),
            })
        };
        let unknown_port = |port: &str| StructureError::UnknownPort {
            parent: path.to_owned(),
            coupling: coupling.to_string(),
            port: port.to_owned(),
        };
        match coupling {
            Coupling::Eic { from, to } => {
                if !parent.has_input(from) {
                    return Err(unknown_port(from));
                }
                if !child(&to.component)?.has_input(&to.port) {
                    return Err(unknown_port(&to.to_string()));
                }
            }
            Coupling::Ic { from, to } => {
                if from.component == to.component {
                    return Err(StructureError::SelfLoop {
                        parent: path.to_owned(),
                        coupling: coupling.to_string(),
                        component: from.component.clone(),
                    });
                }
                if !child(&from.component)?.has_output(&from.port) {
                    return Err(unknown_port(&from.to_string()));
                }
                if !child(&to.component)?.has_input(&to.port) {
                    return Err(unknown_port(&to.to_string()));
                }
            }
            Coupling::Eoc { from, to } => {
                if !child(&from.component)?.has_output(&from.port) {
                    return Err(unknown_port(&from.to_string()));
                }
                if !parent.has_output(to) {
                    return Err(unknown_port(to));
                }
            }
        }
    }

    for (name, component) in model.components() {
        if let Component::Coupled(c) = component {
            validate_coupled(c, &format!("{path}.{name}"))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Atomic, Bag, ModelError};
    use crate::time::Time;

    struct Passive;

    impl Atomic<u32> for Passive {
        fn interface(&self) -> Interface {
            Interface::new().with_input("in").with_output("out")
        }
        fn time_advance(&self) -> Time {
            Time::INFINITY
        }
        fn output(&self, _out: &mut Bag<u32>) {}
        fn internal(&mut self, _now: Time) -> Result<(), ModelError> {
            Ok(())
        }
        fn external(&mut self, _now: Time, _e: Time, _x: &Bag<u32>) -> Result<(), ModelError> {
            Ok(())
        }
    }

    #[test]
    fn rejects_self_loop() {
        let mut root = Coupled::new("root");
        root.add_atomic("a", Passive).add_ic("a", "out", "a", "in");
        assert!(matches!(validate(&root), Err(StructureError::SelfLoop { .. })));
    }

    #[test]
    fn rejects_unknown_component_and_port() {
        let mut root = Coupled::new("root");
        root.add_atomic("a", Passive).add_ic("a", "out", "b", "in");
        assert!(matches!(validate(&root), Err(StructureError::UnknownComponent { .. })));

        let mut root = Coupled::new("root");
        root.add_atomic("a", Passive).add_atomic("b", Passive).add_ic("a", "in", "b", "in");
        assert!(matches!(validate(&root), Err(StructureError::UnknownPort { .. })));
    }

    #[test]
    fn rejects_duplicate_names_and_bad_parent_ports() {
        let mut root = Coupled::new("root");
        root.add_atomic("a", Passive).add_atomic("a", Passive);
        assert!(matches!(validate(&root), Err(StructureError::DuplicateComponent { .. })));

        let mut root = Coupled::new("root");
        root.add_atomic("a", Passive).add_eoc("a", "out", "missing");
        assert!(matches!(validate(&root), Err(StructureError::UnknownPort { .. })));

        let mut root: Coupled<u32> = Coupled::new("root");
        root.add_atomic("", Passive);
        assert!(matches!(validate(&root), Err(StructureError::InvalidName(_))));
    }

    #[test]
    fn errors_inside_nested_models_carry_path() {
        let mut inner = Coupled::new("inner");
        inner.add_atomic("a", Passive).add_eic("nope", "a", "in");
        let mut root = Coupled::new("root");
        root.add_coupled(inner);
        match validate(&root) {
            Err(StructureError::UnknownPort { parent, .. }) => assert_eq!(parent, "root.inner"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
