use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use super::config::TopologyConfig;
use crate::code::ErrorCode;

/// Name of the digital twin node every topology implicitly contains.
pub const TWIN: &str = "twin";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Twin,
    Facilitator,
    DomainAgent,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Node {
    pub role: Role,
    pub parent: Option<String>,
    /// Sorted lexicographically.
    pub children: Vec<String>,
    pub domain: Option<String>,
}

impl Node {
    /// Declared facilitators, and any agent that has children of its own.
    pub fn is_facilitator_capable(&self) -> bool {
        self.role == Role::Facilitator || !self.children.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ValidatedTopology {
    pub nodes: BTreeMap<String, Node>,
    pub root_facilitators: Vec<String>,
}

impl ValidatedTopology {
    pub fn node(&self, name: &str) -> Option<&Node> {
        self.nodes.get(name)
    }

    /// Number of parent links in the forest.
    pub fn edge_count(&self) -> usize {
        self.nodes.values().map(|n| n.children.len()).sum()
    }

    /// Depth-first pre-order from the roots, children in sorted order.
    pub fn walk(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut stack: Vec<&str> = self.root_facilitators.iter().rev().map(String::as_str).collect();
        while let Some(name) = stack.pop() {
            out.push(name.to_owned());
            if let Some(node) = self.nodes.get(name) {
                stack.extend(node.children.iter().rev().map(String::as_str));
            }
        }
        out
    }

    /// Names of domain agents, sorted.
    pub fn domain_agents(&self) -> impl Iterator<Item = (&String, &Node)> {
        self.nodes.iter().filter(|(_, n)| n.role == Role::DomainAgent)
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq, Serialize)]
#[serde(tag = "code")]
pub enum TopologyError {
    #[error("agent `{agent}` names unknown parent `{parent}`")]
    UnknownParent { agent: String, parent: String },
    #[error("name `{name}` is declared more than once")]
    DuplicateName { name: String },
    #[error("parent links form a cycle: {}", path.join(" -> "))]
    CycleDetected { path: Vec<String> },
}

impl TopologyError {
    pub fn code(&self) -> ErrorCode {
        match self {
            TopologyError::UnknownParent { .. } => ErrorCode::UnknownParent,
            TopologyError::DuplicateName { .. } => ErrorCode::DuplicateName,
            TopologyError::CycleDetected { .. } => ErrorCode::CycleDetected,
        }
    }
}

/// Builds the agent forest. All problems are reported, in a stable order:
/// duplicates, then unknown parents, then cycles.
pub fn validate_topology(cfg: &TopologyConfig) -> Result<ValidatedTopology, Vec<TopologyError>> {
    let mut errors = Vec::new();

    let mut seen = BTreeSet::from([TWIN.to_owned()]);
    let mut reported = BTreeSet::new();
    let declared = cfg
        .facilitators
        .iter()
        .map(|f| &f.name)
        .chain(cfg.domains.iter().map(|d| &d.name))
        .chain(cfg.agents().map(|(_, a)| &a.name));
    for name in declared {
        if !seen.insert(name.clone()) && reported.insert(name.clone()) {
            errors.push(TopologyError::DuplicateName { name: name.clone() });
        }
    }

    let facilitators: BTreeSet<&str> = cfg.facilitators.iter().map(|f| f.name.as_str()).collect();
    let agents: BTreeMap<&str, &str> = cfg
        .agents()
        .map(|(_, a)| (a.name.as_str(), a.parent.as_str()))
        .collect();

    for (_, a) in cfg.agents() {
        if !facilitators.contains(a.parent.as_str()) && !agents.contains_key(a.parent.as_str()) {
            errors.push(TopologyError::UnknownParent {
                agent: a.name.clone(),
                parent: a.parent.clone(),
            });
        }
    }

    errors.extend(find_cycles(&agents).into_iter().map(|path| TopologyError::CycleDetected { path }));

    if !errors.is_empty() {
        return Err(errors);
    }

    let mut nodes = BTreeMap::new();
    nodes.insert(
        TWIN.to_owned(),
        Node {
            role: Role::Twin,
            parent: None,
            children: Vec::new(),
            domain: None,
        },
    );
    for f in &cfg.facilitators {
        nodes.insert(
            f.name.clone(),
            Node {
                role: Role::Facilitator,
                parent: None,
                children: Vec::new(),
                domain: None,
            },
        );
    }
    for (d, a) in cfg.agents() {
        nodes.insert(
            a.name.clone(),
            Node {
                role: Role::DomainAgent,
                parent: Some(a.parent.clone()),
                children: Vec::new(),
                domain: Some(d.name.clone()),
            },
        );
    }
    for (_, a) in cfg.agents() {
        if let Some(parent) = nodes.get_mut(&a.parent) {
            parent.children.push(a.name.clone());
        }
    }
    for node in nodes.values_mut() {
        node.children.sort();
    }

    let mut root_facilitators: Vec<String> = facilitators.iter().map(|s| (*s).to_owned()).collect();
    root_facilitators.sort();

    Ok(ValidatedTopology {
        nodes,
        root_facilitators,
    })
}

/// Every distinct cycle in an agent → parent map, each rotated to start at
/// its smallest name and listed in parent-following order.
fn find_cycles(parents: &BTreeMap<&str, &str>) -> Vec<Vec<String>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done,
    }
    let mut marks: BTreeMap<&str, Mark> = BTreeMap::new();
    let mut cycles = Vec::new();

    for &start in parents.keys() {
        if marks.contains_key(start) {
            continue;
        }
        let mut path: Vec<&str> = Vec::new();
        let mut cur = start;
        loop {
            match marks.get(cur) {
                Some(Mark::Active) => {
                    let at = path.iter().position(|n| *n == cur).expect("active node on path");
                    let mut cycle: Vec<String> = path[at..].iter().map(|s| (*s).to_owned()).collect();
                    let min = (0..cycle.len()).min_by_key(|&i| &cycle[i]).unwrap_or(0);
                    cycle.rotate_left(min);
                    cycles.push(cycle);
                    break;
                }
                Some(Mark::Done) => break,
                None => {}
            }
            marks.insert(cur, Mark::Active);
            path.push(cur);
            match parents.get(cur) {
                Some(next) => cur = next,
                None => break,
            }
        }
        for n in path {
            marks.insert(n, Mark::Done);
        }
    }
    cycles
}
