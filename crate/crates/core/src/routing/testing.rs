use crate::topology::{GraphSnapshot, NodeKind};

pub const G: NodeKind = NodeKind::Ground;
pub const H: NodeKind = NodeKind::Hap;
pub const S: NodeKind = NodeKind::Satellite;

/// Abstract graph with every link 1 km long.
pub fn graph(kinds: &[NodeKind], links: &[(usize, usize, f64)]) -> GraphSnapshot {
    let links: Vec<_> = links.iter().map(|&(a, b, eta)| (a, b, eta, 1000.0)).collect();
    GraphSnapshot::abstract_graph(kinds, &links).unwrap()
}
