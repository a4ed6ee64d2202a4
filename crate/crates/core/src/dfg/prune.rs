use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::model::{FunctionDfg, NodeId, NodeKind, Port};

/// Nodes pruning must keep even though no sink follows them: call sites
/// that hand data to a callee (through arguments or a receiver) are where
/// interprocedural tracing re-enters this graph.
fn is_anchor(g: &FunctionDfg, id: NodeId, has_arg_input: &BTreeSet<NodeId>) -> bool {
    match g.node(id) {
        Some(n) if n.is_sink() => true,
        Some(n) if matches!(n.kind, NodeKind::CallSite(_)) => has_arg_input.contains(&id),
        _ => false,
    }
}

/// Set of nodes from which some anchor is reachable (anchors included).
pub fn reaches_sink(g: &FunctionDfg) -> BTreeSet<NodeId> {
    let mut preds: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    let mut has_arg_input = BTreeSet::new();
    for e in &g.edges {
        preds.entry(e.to).or_default().push(e.from);
        if e.port == Port::Value {
            has_arg_input.insert(e.to);
        }
    }
    let mut keep: BTreeSet<NodeId> = g
        .nodes
        .iter()
        .map(|n| n.id)
        .filter(|&id| is_anchor(g, id, &has_arg_input))
        .collect();
    let mut queue: VecDeque<NodeId> = keep.iter().copied().collect();
    while let Some(n) = queue.pop_front() {
        for &p in preds.get(&n).into_iter().flatten() {
            if keep.insert(p) {
                queue.push_back(p);
            }
        }
    }
    keep
}

/// Drops every node that cannot reach a sink. Node ids are kept stable.
pub fn prune_dfg(g: &FunctionDfg) -> FunctionDfg {
    let keep = reaches_sink(g);
    let nodes = g.nodes.iter().filter(|n| keep.contains(&n.id)).cloned().collect();
    let edges = g
        .edges
        .iter()
        .filter(|e| keep.contains(&e.from) && keep.contains(&e.to))
        .cloned()
        .collect();
    FunctionDfg::new(g.id.clone(), nodes, edges)
}
