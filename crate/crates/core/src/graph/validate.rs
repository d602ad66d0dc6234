use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;

use super::{NodeKind, WorkflowGraph};
use crate::report::{ValidationReport, ViolationKind};

/// Every reason `graph` cannot be executed as-is. Empty iff executable.
///
/// Checks, in order: duplicate nodes, duplicate and dangling edges, unknown
/// solver originals, cycles, unknown edge schemas, schema mismatches between
/// adjacent nodes with no broker between them, broker mappings and broker
/// degree.
pub fn validate_graph(graph: &WorkflowGraph) -> ValidationReport {
    let mut report = ValidationReport::default();

    let mut ids = BTreeSet::new();
    for n in &graph.nodes {
        if !ids.insert(n.id.as_str()) {
            report.push(ViolationKind::DuplicateNode, format!("node `{}` appears more than once", n.id));
        }
    }

    let mut pairs = BTreeSet::new();
    for e in &graph.edges {
        if !pairs.insert((e.from.as_str(), e.to.as_str())) {
            report.push(ViolationKind::DuplicateEdge, format!("edge {} -> {} appears more than once", e.from, e.to));
        }
        for end in [&e.from, &e.to] {
            if !ids.contains(end.as_str()) {
                report.push(ViolationKind::DanglingEdge, format!("edge {} -> {} names unknown node `{end}`", e.from, e.to));
            }
        }
    }
    for n in &graph.nodes {
        if let Some(orig) = &n.alternative_of {
            if !ids.contains(orig.as_str()) || orig == &n.id {
                report.push(ViolationKind::DanglingEdge, format!("solver `{}` duplicates unknown node `{orig}`", n.id));
            }
        }
    }

    if let Err(cycle) = super::stages::depths(graph) {
        report.push(ViolationKind::Cycle, format!("cycle through {}", cycle.join(", ")));
    }

    for e in &graph.edges {
        if !graph.protocol.schemas.contains_key(&e.schema) {
            report.push(ViolationKind::UnknownSchema, format!("edge {} -> {} carries unregistered schema `{}`", e.from, e.to, e.schema));
        }
        let (Some(producer), Some(consumer)) = (graph.node(&e.from), graph.node(&e.to)) else {
            continue;
        };
        if producer.kind == NodeKind::Broker {
            match graph.mapping_for(producer) {
                Some(m) if m.target_schema != e.schema => report.push(
                    ViolationKind::BrokerMapping,
                    format!("broker `{}` produces `{}` but edge to `{}` carries `{}`", producer.id, m.target_schema, consumer.id, e.schema),
                ),
                _ => {}
            }
        } else if let Some(out) = &producer.output_schema {
            if out != &e.schema {
                report.push(
                    ViolationKind::Interface,
                    format!("edge {} -> {} carries `{}` but `{}` produces `{out}`", e.from, e.to, e.schema, producer.id),
                );
            }
        }
        if consumer.kind == NodeKind::Broker {
            match graph.mapping_for(consumer) {
                Some(m) if m.source_schema != e.schema => report.push(
                    ViolationKind::BrokerMapping,
                    format!("broker `{}` reads `{}` but edge from `{}` carries `{}`", consumer.id, m.source_schema, producer.id, e.schema),
                ),
                _ => {}
            }
        } else if let Some(input) = &consumer.input_schema {
            if input != &e.schema {
                report.push(
                    ViolationKind::Interface,
                    format!("edge {} -> {} carries `{}` but `{}` expects `{input}` and no broker sits between", e.from, e.to, e.schema, consumer.id),
                );
            }
        }
    }

    // brokers: one inbound and one outbound solver group each
    let mut inbound: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut outbound: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for e in &graph.edges {
        let (Some(from), Some(to)) = (graph.node(&e.from), graph.node(&e.to)) else {
            continue;
        };
        inbound.entry(to.id.as_str()).or_default().insert(from.group());
        outbound.entry(from.id.as_str()).or_default().insert(to.group());
    }
    for n in graph.nodes.iter().filter(|n| n.kind == NodeKind::Broker) {
        if graph.mapping_for(n).is_none() {
            report.push(ViolationKind::BrokerMapping, format!("broker `{}` has no field mapping", n.id));
        }
        let ins = inbound.get(n.id.as_str()).map_or(0, BTreeSet::len);
        let outs = outbound.get(n.id.as_str()).map_or(0, BTreeSet::len);
        if ins != 1 || outs != 1 {
            report.push(
                ViolationKind::BrokerDegree,
                format!("broker `{}` has {ins} inbound and {outs} outbound neighbours, needs exactly one each", n.id),
            );
        }
    }

    report
}

