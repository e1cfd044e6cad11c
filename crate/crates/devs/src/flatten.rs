use std::collections::HashMap;

use crate::error::StructureError;
use crate::model::{Atomic, Component, Coupled, Coupling, PortRef};
use crate::structure::validate;

pub(crate) fn join_path(parent: &str, name: &str) -> String {
    if parent.is_empty() {
        name.to_owned()
    } else {
        format!("{parent}.{name}")
    }
}

type Node = (String, String);

/// Rewrites a hierarchy as a single-level coupled model.
///
/// Atomic components are renamed by their full path (`fog.gcs`), the root
/// interface is kept, and every chain of couplings through intermediate
/// coupled models is collapsed into one direct coupling. Chains that reach the
/// same destination along distinct routes stay distinct, so bag contents are
/// preserved.
pub fn flatten<M>(root: Coupled<M>) -> Result<Coupled<M>, StructureError> {
    validate(&root)?;

    let (name, interface, components, couplings) = root.into_parts();
    let mut atoms: Vec<(String, Box<dyn Atomic<M>>)> = Vec::new();
    let mut edges: HashMap<Node, Vec<Node>> = HashMap::new();
    collect("", components, couplings, &mut atoms, &mut edges);

    let atomic_paths: HashMap<&str, ()> = atoms.iter().map(|(p, _)| (p.as_str(), ())).collect();
    let is_terminal = |node: &Node| node.0.is_empty() || atomic_paths.contains_key(node.0.as_str());

    let mut flat = Vec::new();
    for (path, atom) in &atoms {
        for port in atom.interface().outputs() {
            let start = (path.clone(), port.clone());
            for end in reach(&start, &edges, &is_terminal) {
                let from = PortRef::new(path.clone(), port.clone());
                flat.push(if end.0.is_empty() {
                    Coupling::Eoc { from, to: end.1 }
                } else {
                    Coupling::Ic { from, to: PortRef::new(end.0, end.1) }
                });
            }
        }
    }
    for port in interface.inputs() {
        let start = (String::new(), port.clone());
        for end in reach(&start, &edges, &is_terminal) {
            // A root input can only reach atomic inputs: coupled models have
            // no input-to-output pass-through couplings.
            flat.push(Coupling::Eic { from: port.clone(), to: PortRef::new(end.0, end.1) });
        }
    }

    let components = atoms.into_iter().map(|(p, a)| (p, Component::Atomic(a))).collect();
    Ok(Coupled::from_parts(name, interface, components, flat))
}

fn collect<M>(
    path: &str,
    components: Vec<(String, Component<M>)>,
    couplings: Vec<Coupling>,
    atoms: &mut Vec<(String, Box<dyn Atomic<M>>)>,
    edges: &mut HashMap<Node, Vec<Node>>,
) {
    for coupling in couplings {
        let (from, to) = match coupling {
            Coupling::Eic { from, to } => ((path.to_owned(), from), (join_path(path, &to.component), to.port)),
            Coupling::Ic { from, to } => (
                (join_path(path, &from.component), from.port),
                (join_path(path, &to.component), to.port),
            ),
            Coupling::Eoc { from, to } => ((join_path(path, &from.component), from.port), (path.to_owned(), to)),
        };
        edges.entry(from).or_default().push(to);
    }
    for (name, component) in components {
        let child = join_path(path, &name);
        match component {
            Component::Atomic(a) => atoms.push((child, a)),
            Component::Coupled(c) => {
                let (_, _, components, couplings) = c.into_parts();
                collect(&child, components, couplings, atoms, edges);
            }
        }
    }
}

/// All terminal nodes reachable from `start`, one entry per distinct route,
/// in coupling declaration order.
fn reach(start: &Node, edges: &HashMap<Node, Vec<Node>>, is_terminal: &dyn Fn(&Node) -> bool) -> Vec<Node> {
    let mut out = Vec::new();
    let mut stack: Vec<&Node> = Vec::new();
    if let Some(next) = edges.get(start) {
        stack.extend(next.iter().rev());
    }
    while let Some(node) = stack.pop() {
        if is_terminal(node) {
            out.push(node.clone());
        } else if let Some(next) = edges.get(node) {
            stack.extend(next.iter().rev());
        }
    }
    out
}
