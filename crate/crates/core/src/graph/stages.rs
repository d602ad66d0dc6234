use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{GraphError, WorkflowGraph};

/// Longest-path depth of every node from any source. Edges with unknown
/// endpoints are ignored. On a cycle, returns the ids that could not be
/// ordered.
pub(crate) fn depths(graph: &WorkflowGraph) -> Result<BTreeMap<String, usize>, Vec<String>> {
    let ids: BTreeSet<&str> = graph.nodes.iter().map(|n| n.id.as_str()).collect();
    let mut indegree: BTreeMap<&str, usize> = ids.iter().map(|id| (*id, 0)).collect();
    let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in &graph.edges {
        if ids.contains(e.from.as_str()) && ids.contains(e.to.as_str()) {
            *indegree.get_mut(e.to.as_str()).expect("known node") += 1;
            succ.entry(e.from.as_str()).or_default().push(e.to.as_str());
        }
    }

    let mut depth: BTreeMap<String, usize> = BTreeMap::new();
    let mut ready: Vec<&str> = indegree.iter().filter(|(_, d)| **d == 0).map(|(id, _)| *id).collect();
    let mut level: BTreeMap<&str, usize> = ready.iter().map(|id| (*id, 0)).collect();
    while let Some(id) = ready.pop() {
        let d = level[id];
        depth.insert(String::from(id), d);
        for next in succ.get(id).map(Vec::as_slice).unwrap_or(&[]) {
            let l = level.entry(next).or_insert(0);
            *l = (*l).max(d + 1);
            let deg = indegree.get_mut(next).expect("known node");
            *deg -= 1;
            if *deg == 0 {
                ready.push(next);
            }
        }
    }
    if depth.len() == ids.len() {
        Ok(depth)
    } else {
        Err(ids.iter().filter(|id| !depth.contains_key(**id)).map(|id| String::from(*id)).collect())
    }
}

/// Group nodes by longest-path depth. Stage `i` holds exactly the nodes
/// whose longest path from a source has length `i`, sorted by id.
pub fn topological_stages(graph: &WorkflowGraph) -> Result<Vec<Vec<String>>, GraphError> {
    let depth = depths(graph).map_err(GraphError::CyclicGraph)?;
    let count = depth.values().max().map_or(0, |m| m + 1);
    let mut stages: Vec<Vec<String>> = vec![Vec::new(); count];
    // BTreeMap iteration is already in id order
    for (id, d) in depth {
        stages[d].push(id);
    }
    Ok(stages)
}

/// Stage number of every node.
pub fn stage_index(stages: &[Vec<String>]) -> BTreeMap<String, usize> {
    stages
        .iter()
        .enumerate()
        .flat_map(|(i, s)| s.iter().map(move |id| (id.clone(), i)))
        .collect()
}
