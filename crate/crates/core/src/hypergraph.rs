//! Node-attributed heterogeneous hypergraphs with a single hyperedge type.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HyperedgeId(pub usize);

/// Index into [`Hypergraph::node_types`].
pub type NodeTypeId = usize;

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for HyperedgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeType {
    pub id: NodeTypeId,
    pub name: String,
    pub attr_dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub node_type: NodeTypeId,
    pub attributes: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hyperedge {
    pub id: HyperedgeId,
    /// Sorted member ids.
    pub members: Vec<NodeId>,
}

/// One broken invariant found by [`Hypergraph::validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    DuplicateTypeName(String),
    NonContiguousTypeId { position: usize, id: NodeTypeId },
    ZeroAttributeDim(String),
    DuplicateNode(NodeId),
    UnknownNodeType { node: NodeId, node_type: NodeTypeId },
    AttributeDim { node: NodeId, expected: usize, actual: usize },
    DuplicateHyperedge(HyperedgeId),
    MissingMember { hyperedge: HyperedgeId, node: NodeId },
    DuplicateMember { hyperedge: HyperedgeId, node: NodeId },
    TooSmall { hyperedge: HyperedgeId, size: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateTypeName(n) => write!(f, "node type name {n:?} declared twice"),
            Violation::NonContiguousTypeId { position, id } => {
                write!(f, "node type at position {position} has id {id}")
            }
            Violation::ZeroAttributeDim(n) => write!(f, "node type {n:?} has attribute dim 0"),
            Violation::DuplicateNode(n) => write!(f, "node {n} defined twice"),
            Violation::UnknownNodeType { node, node_type } => {
                write!(f, "node {node} has unknown type id {node_type}")
            }
            Violation::AttributeDim {
                node,
                expected,
                actual,
            } => write!(
                f,
                "node {node} has {actual} attributes, its type declares {expected}"
            ),
            Violation::DuplicateHyperedge(h) => write!(f, "hyperedge {h} defined twice"),
            Violation::MissingMember { hyperedge, node } => {
                write!(f, "hyperedge {hyperedge} references missing node {node}")
            }
            Violation::DuplicateMember { hyperedge, node } => {
                write!(f, "hyperedge {hyperedge} lists node {node} more than once")
            }
            Violation::TooSmall { hyperedge, size } => {
                write!(f, "hyperedge {hyperedge} has {size} members (minimum 2)")
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Hypergraph {
    node_types: Vec<NodeType>,
    nodes: Vec<Node>,
    node_index: BTreeMap<NodeId, usize>,
    hyperedges: Vec<Hyperedge>,
    hyperedge_index: BTreeMap<HyperedgeId, usize>,
    incidence: BTreeMap<NodeId, BTreeSet<HyperedgeId>>,
    // Members as given, before sorting/deduplication, for validation.
    raw_members: Vec<Vec<NodeId>>,
}

pub const MIN_HYPEREDGE_SIZE: usize = 2;

impl Hypergraph {
    /// Builds the hypergraph and its incidence index without checking
    /// invariants. Use [`Hypergraph::validate`] or [`Hypergraph::new`].
    pub fn from_parts(
        node_types: Vec<NodeType>,
        mut nodes: Vec<Node>,
        hyperedges: Vec<(HyperedgeId, Vec<NodeId>)>,
    ) -> Self {
        nodes.sort_by_key(|n| n.id);
        let mut node_index = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            node_index.entry(n.id).or_insert(i);
        }
        let mut incidence: BTreeMap<NodeId, BTreeSet<HyperedgeId>> =
            node_index.keys().map(|&id| (id, BTreeSet::new())).collect();
        let mut raw_members = Vec::with_capacity(hyperedges.len());
        let mut built = Vec::with_capacity(hyperedges.len());
        let mut hyperedge_index = BTreeMap::new();
        for (id, members) in hyperedges {
            let mut sorted = members.clone();
            sorted.sort();
            sorted.dedup();
            for m in &sorted {
                if let Some(set) = incidence.get_mut(m) {
                    set.insert(id);
                }
            }
            hyperedge_index.entry(id).or_insert(built.len());
            raw_members.push(members);
            built.push(Hyperedge { id, members: sorted });
        }
        Self {
            node_types,
            nodes,
            node_index,
            hyperedges: built,
            hyperedge_index,
            incidence,
            raw_members,
        }
    }

    /// Builds and validates; any violation is a configuration error.
    pub fn new(
        node_types: Vec<NodeType>,
        nodes: Vec<Node>,
        hyperedges: Vec<(HyperedgeId, Vec<NodeId>)>,
    ) -> Result<Self> {
        let h = Self::from_parts(node_types, nodes, hyperedges);
        let report = h.validate();
        if !report.is_empty() {
            let msgs: Vec<String> = report.iter().take(5).map(|v| v.to_string()).collect();
            return Err(Error::Config(format!(
                "invalid hypergraph ({} violations): {}",
                report.len(),
                msgs.join("; ")
            )));
        }
        Ok(h)
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut names = BTreeSet::new();
        for (pos, t) in self.node_types.iter().enumerate() {
            if !names.insert(t.name.as_str()) {
                out.push(Violation::DuplicateTypeName(t.name.clone()));
            }
            if t.id != pos {
                out.push(Violation::NonContiguousTypeId { position: pos, id: t.id });
            }
            if t.attr_dim == 0 {
                out.push(Violation::ZeroAttributeDim(t.name.clone()));
            }
        }
        for w in self.nodes.windows(2) {
            if w[0].id == w[1].id {
                out.push(Violation::DuplicateNode(w[1].id));
            }
        }
        for n in &self.nodes {
            match self.node_types.get(n.node_type) {
                None => out.push(Violation::UnknownNodeType {
                    node: n.id,
                    node_type: n.node_type,
                }),
                Some(t) if t.attr_dim != n.attributes.len() => out.push(Violation::AttributeDim {
                    node: n.id,
                    expected: t.attr_dim,
                    actual: n.attributes.len(),
                }),
                Some(_) => {}
            }
        }
        let mut seen = BTreeSet::new();
        for (h, raw) in self.hyperedges.iter().zip(&self.raw_members) {
            if !seen.insert(h.id) {
                out.push(Violation::DuplicateHyperedge(h.id));
            }
            let mut members = BTreeSet::new();
            for &m in raw {
                if !members.insert(m) {
                    out.push(Violation::DuplicateMember {
                        hyperedge: h.id,
                        node: m,
                    });
                }
            }
            for &m in &members {
                if !self.node_index.contains_key(&m) {
                    out.push(Violation::MissingMember {
                        hyperedge: h.id,
                        node: m,
                    });
                }
            }
            if members.len() < MIN_HYPEREDGE_SIZE {
                out.push(Violation::TooSmall {
                    hyperedge: h.id,
                    size: members.len(),
                });
            }
        }
        out
    }

    pub fn node_types(&self) -> &[NodeType] {
        &self.node_types
    }

    pub fn node_type_by_name(&self, name: &str) -> Option<&NodeType> {
        self.node_types.iter().find(|t| t.name == name)
    }

    /// Nodes sorted by id.
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn hyperedges(&self) -> &[Hyperedge] {
        &self.hyperedges
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_hyperedges(&self) -> usize {
        self.hyperedges.len()
    }

    pub fn node(&self, id: NodeId) -> Result<&Node> {
        self.node_index
            .get(&id)
            .map(|&i| &self.nodes[i])
            .ok_or_else(|| Error::Lookup(format!("unknown node {id}")))
    }

    pub fn contains_node(&self, id: NodeId) -> bool {
        self.node_index.contains_key(&id)
    }

    pub fn node_type_of(&self, id: NodeId) -> Result<NodeTypeId> {
        self.node(id).map(|n| n.node_type)
    }

    pub fn hyperedge(&self, id: HyperedgeId) -> Result<&Hyperedge> {
        self.hyperedge_index
            .get(&id)
            .map(|&i| &self.hyperedges[i])
            .ok_or_else(|| Error::Lookup(format!("unknown hyperedge {id}")))
    }

    /// `F_v`: the hyperedges containing `v`.
    pub fn incident_hyperedges(&self, v: NodeId) -> Result<&BTreeSet<HyperedgeId>> {
        self.incidence
            .get(&v)
            .ok_or_else(|| Error::Lookup(format!("unknown node {v}")))
    }

    /// `N(v)`: union of the incident hyperedges, minus `v`.
    pub fn neighborhood(&self, v: NodeId) -> Result<BTreeSet<NodeId>> {
        let mut out = BTreeSet::new();
        for &f in self.incident_hyperedges(v)? {
            out.extend(self.hyperedge(f)?.members.iter().copied());
        }
        out.remove(&v);
        Ok(out)
    }

    /// Node ids of type `t`, ascending.
    pub fn nodes_of_type(&self, t: NodeTypeId) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.node_type == t)
            .map(|n| n.id)
            .collect()
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Types P (paper) and A (author); `f1 = {p1, a1, a2}`, plus an
    /// isolated author `a3`. Ids: p1=0, a1=1, a2=2, a3=3.
    pub fn paper_authors() -> Hypergraph {
        let types = vec![
            NodeType {
                id: 0,
                name: "P".into(),
                attr_dim: 2,
            },
            NodeType {
                id: 1,
                name: "A".into(),
                attr_dim: 2,
            },
        ];
        let nodes = vec![
            Node {
                id: NodeId(0),
                node_type: 0,
                attributes: vec![1.0, 0.0],
            },
            Node {
                id: NodeId(1),
                node_type: 1,
                attributes: vec![0.0, 1.0],
            },
            Node {
                id: NodeId(2),
                node_type: 1,
                attributes: vec![0.0, 3.0],
            },
            Node {
                id: NodeId(3),
                node_type: 1,
                attributes: vec![2.0, 2.0],
            },
        ];
        Hypergraph::new(
            types,
            nodes,
            vec![(HyperedgeId(1), vec![NodeId(0), NodeId(1), NodeId(2)])],
        )
        .unwrap()
    }
}


#[cfg(test)]
pub(crate) use tests::arb_hypergraph;
