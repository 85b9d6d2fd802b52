//! Heterogeneous clique expansion, auxiliary graphs with dummy nodes, and
//! clique mini-batch sampling.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::hypergraph::{HyperedgeId, Hypergraph, NodeId, NodeTypeId};
use crate::rng::Rng;

/// Directed relation between two node types. `to_dummy` marks the incoming
/// edges of dummy nodes, which carry their own message parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeType {
    pub src: NodeTypeId,
    pub dst: NodeTypeId,
    pub to_dummy: bool,
}

impl EdgeType {
    pub fn new(src: NodeTypeId, dst: NodeTypeId) -> Self {
        Self {
            src,
            dst,
            to_dummy: false,
        }
    }

    pub fn dummy(src: NodeTypeId, dst: NodeTypeId) -> Self {
        Self {
            src,
            dst,
            to_dummy: true,
        }
    }

    pub fn mirror(self) -> Self {
        Self {
            src: self.dst,
            dst: self.src,
            to_dummy: self.to_dummy,
        }
    }
}

/// Clique-expanded graph. Every undirected edge is stored as two directed
/// edges, one under each mirrored edge type.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TypedGraph {
    node_types: BTreeMap<NodeId, NodeTypeId>,
    edges: BTreeMap<EdgeType, BTreeSet<(NodeId, NodeId)>>,
    origins: BTreeMap<(NodeId, NodeId), Vec<HyperedgeId>>,
    adjacency: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

/// Expands every hyperedge of `h`.
pub fn clique_expand(h: &Hypergraph) -> TypedGraph {
    let all: Vec<HyperedgeId> = h.hyperedges().iter().map(|f| f.id).collect();
    expand_hyperedges(h, &all).expect("ids come from the hypergraph")
}

/// Expands only the listed hyperedges. All nodes of `h` are present, nodes
/// outside the listed hyperedges are isolated.
pub fn expand_hyperedges(h: &Hypergraph, ids: &[HyperedgeId]) -> Result<TypedGraph> {
    let mut g = TypedGraph {
        node_types: h.nodes().iter().map(|n| (n.id, n.node_type)).collect(),
        ..TypedGraph::default()
    };
    for &fid in ids {
        let f = h.hyperedge(fid)?;
        for &u in &f.members {
            let tu = g.node_types[&u];
            for &v in &f.members {
                let tv = g.node_types[&v];
                if u == v || tu == tv {
                    continue;
                }
                g.insert_edge(u, v, tu, tv, fid);
            }
        }
    }
    Ok(g)
}

impl TypedGraph {
    fn insert_edge(&mut self, u: NodeId, v: NodeId, tu: NodeTypeId, tv: NodeTypeId, f: HyperedgeId) {
        self.edges.entry(EdgeType::new(tu, tv)).or_default().insert((u, v));
        let origin = self.origins.entry((u, v)).or_default();
        if origin.last() != Some(&f) {
            origin.push(f);
        }
        self.adjacency.entry(u).or_default().insert(v);
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.node_types.keys().copied()
    }

    pub fn num_nodes(&self) -> usize {
        self.node_types.len()
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.node_types.contains_key(&v)
    }

    pub fn node_type(&self, v: NodeId) -> Option<NodeTypeId> {
        self.node_types.get(&v).copied()
    }

    /// Directed edges grouped by edge type; each list is sorted.
    pub fn edges(&self) -> &BTreeMap<EdgeType, BTreeSet<(NodeId, NodeId)>> {
        &self.edges
    }

    pub fn num_directed_edges(&self) -> usize {
        self.edges.values().map(|s| s.len()).sum()
    }

    pub fn edge_types(&self) -> BTreeSet<EdgeType> {
        self.edges
            .iter()
            .filter(|(_, s)| !s.is_empty())
            .map(|(&t, _)| t)
            .collect()
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.adjacency.get(&u).is_some_and(|s| s.contains(&v))
    }

    /// Hyperedges that produced the directed edge `(u, v)`.
    pub fn origins(&self, u: NodeId, v: NodeId) -> &[HyperedgeId] {
        self.origins.get(&(u, v)).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Sorted neighbors of `v` (in- and out-neighbors coincide).
    pub fn neighbors(&self, v: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.get(&v).into_iter().flatten().copied()
    }

    /// Node-induced subgraph; edges leaving `keep` are dropped.
    pub fn induced(&self, keep: &BTreeSet<NodeId>) -> TypedGraph {
        let mut g = TypedGraph {
            node_types: self
                .node_types
                .iter()
                .filter(|(id, _)| keep.contains(id))
                .map(|(&id, &t)| (id, t))
                .collect(),
            ..TypedGraph::default()
        };
        for (&et, set) in &self.edges {
            for &(u, v) in set {
                if keep.contains(&u) && keep.contains(&v) {
                    g.edges.entry(et).or_default().insert((u, v));
                    g.origins.insert((u, v), self.origins[&(u, v)].clone());
                    g.adjacency.entry(u).or_default().insert(v);
                }
            }
        }
        g
    }

    /// Lowers the graph into encoder input form.
    pub fn message_graph(&self) -> MessageGraph {
        let mut mg = MessageGraph::default();
        for (&id, &t) in &self.node_types {
            mg.push_slot(Slot {
                node: id,
                node_type: t,
                kind: SlotKind::Node,
            });
        }
        for (&et, set) in &self.edges {
            for &(u, v) in set {
                let (su, sv) = (mg.slot_index[&NodeRef::Node(u)], mg.slot_index[&NodeRef::Node(v)]);
                mg.relations.entry(et).or_default().push((su, sv));
            }
        }
        mg.finish();
        mg
    }
}

/// Node or dummy as addressed by callers of the encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeRef {
    Node(NodeId),
    /// The dummy `v*` of an original node `v`.
    Dummy(NodeId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlotKind {
    Node,
    Dummy,
    /// Private copy of `node` inside a dummy's masked receptive field.
    Shadow { owner: NodeId },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Slot {
    pub node: NodeId,
    pub node_type: NodeTypeId,
    pub kind: SlotKind,
}

/// Flat encoder input: one slot per computed representation, and per edge
/// type the directed `(src slot, dst slot)` pairs sorted by destination then
/// source.
#[derive(Clone, Debug, Default)]
pub struct MessageGraph {
    pub slots: Vec<Slot>,
    pub relations: BTreeMap<EdgeType, Vec<(usize, usize)>>,
    slot_index: BTreeMap<NodeRef, usize>,
}

impl MessageGraph {
    fn push_slot(&mut self, slot: Slot) -> usize {
        let idx = self.slots.len();
        match slot.kind {
            SlotKind::Node => {
                self.slot_index.insert(NodeRef::Node(slot.node), idx);
            }
            SlotKind::Dummy => {
                self.slot_index.insert(NodeRef::Dummy(slot.node), idx);
            }
            SlotKind::Shadow { .. } => {}
        }
        self.slots.push(slot);
        idx
    }

    fn finish(&mut self) {
        for list in self.relations.values_mut() {
            list.sort_by_key(|&(s, d)| (d, s));
            list.dedup();
        }
    }

    pub fn slot(&self, r: NodeRef) -> Option<usize> {
        self.slot_index.get(&r).copied()
    }

    pub fn addressable(&self) -> impl Iterator<Item = (NodeRef, usize)> + '_ {
        self.slot_index.iter().map(|(&r, &i)| (r, i))
    }

    pub fn edge_types(&self) -> BTreeSet<EdgeType> {
        self.relations
            .iter()
            .filter(|(_, l)| !l.is_empty())
            .map(|(&t, _)| t)
            .collect()
    }

    pub fn in_neighbors(&self, dst: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .relations
            .values()
            .flat_map(|l| l.iter().filter(|&&(_, d)| d == dst).map(|&(s, _)| s))
            .collect();
        out.sort();
        out
    }

    pub fn out_degree(&self, src: usize) -> usize {
        self.relations
            .values()
            .map(|l| l.iter().filter(|&&(s, _)| s == src).count())
            .sum()
    }
}

/// A typed graph plus one dummy node `v*` per listed node, with incoming
/// edges from `N(v)` only.
#[derive(Clone, Debug)]
pub struct AuxiliaryGraph {
    pub base: TypedGraph,
    /// Original node id of every dummy, ascending.
    pub dummies: Vec<NodeId>,
    /// Directed `u -> v*` edges, keyed by the original `v`.
    pub dummy_in_edges: BTreeMap<NodeId, Vec<NodeId>>,
    /// When set, each dummy reads from private copies of its receptive field
    /// with `v` removed, reaching this many layers deep.
    pub strict_layers: Option<usize>,
}

impl AuxiliaryGraph {
    /// Literal construction: `v*` receives from `N(v)` in the shared graph.
    pub fn build(g: &TypedGraph, nodes: &BTreeSet<NodeId>) -> Result<Self> {
        let mut dummy_in_edges = BTreeMap::new();
        for &v in nodes {
            if !g.contains(v) {
                return Err(Error::Lookup(format!("node {v} is not in the graph")));
            }
            dummy_in_edges.insert(v, g.neighbors(v).collect());
        }
        Ok(Self {
            base: g.clone(),
            dummies: nodes.iter().copied().collect(),
            dummy_in_edges,
            strict_layers: None,
        })
    }

    /// Strict construction for a `layers`-deep encoder: `x_v` is outside the
    /// receptive field of `v*` at every depth.
    pub fn build_strict(g: &TypedGraph, nodes: &BTreeSet<NodeId>, layers: usize) -> Result<Self> {
        let mut aux = Self::build(g, nodes)?;
        aux.strict_layers = Some(layers.max(1));
        Ok(aux)
    }

    /// Edge types feeding the dummies: `(type(u) -> type(v)*)`.
    pub fn dummy_edge_types(&self) -> BTreeSet<EdgeType> {
        let mut out = BTreeSet::new();
        for (&v, srcs) in &self.dummy_in_edges {
            let tv = self.base.node_type(v).expect("dummy target in graph");
            for &u in srcs {
                out.insert(EdgeType::dummy(self.base.node_type(u).unwrap(), tv));
            }
        }
        out
    }

    pub fn message_graph(&self) -> MessageGraph {
        let mut mg = self.base.message_graph();
        for &v in &self.dummies {
            let t = self.base.node_type(v).unwrap();
            mg.push_slot(Slot {
                node: v,
                node_type: t,
                kind: SlotKind::Dummy,
            });
        }
        for &v in &self.dummies {
            let dst = mg.slot_index[&NodeRef::Dummy(v)];
            let tv = self.base.node_type(v).unwrap();
            let srcs = &self.dummy_in_edges[&v];
            match self.strict_layers {
                None => {
                    for &u in srcs {
                        let tu = self.base.node_type(u).unwrap();
                        let su = mg.slot_index[&NodeRef::Node(u)];
                        mg.relations.entry(EdgeType::dummy(tu, tv)).or_default().push((su, dst));
                    }
                }
                Some(layers) => {
                    let shadow = self.add_shadow_field(&mut mg, v, layers);
                    for &u in srcs {
                        let tu = self.base.node_type(u).unwrap();
                        mg.relations
                            .entry(EdgeType::dummy(tu, tv))
                            .or_default()
                            .push((shadow[&u], dst));
                    }
                }
            }
        }
        mg.finish();
        mg
    }

    // Copies every node within `layers` hops of `v*` in `base - {v}`, with the
    // edges among them, and returns the copy of each node.
    fn add_shadow_field(
        &self,
        mg: &mut MessageGraph,
        v: NodeId,
        layers: usize,
    ) -> BTreeMap<NodeId, usize> {
        let mut dist: BTreeMap<NodeId, usize> = BTreeMap::new();
        let mut queue = VecDeque::new();
        for &u in &self.dummy_in_edges[&v] {
            dist.insert(u, 1);
            queue.push_back(u);
        }
        while let Some(u) = queue.pop_front() {
            let d = dist[&u];
            if d >= layers {
                continue;
            }
            for w in self.base.neighbors(u) {
                if w != v && !dist.contains_key(&w) {
                    dist.insert(w, d + 1);
                    queue.push_back(w);
                }
            }
        }
        let mut copy = BTreeMap::new();
        for &u in dist.keys() {
            let idx = mg.push_slot(Slot {
                node: u,
                node_type: self.base.node_type(u).unwrap(),
                kind: SlotKind::Shadow { owner: v },
            });
            copy.insert(u, idx);
        }
        for (&et, set) in &self.base.edges {
            for &(a, b) in set {
                if let (Some(&sa), Some(&sb)) = (copy.get(&a), copy.get(&b)) {
                    mg.relations.entry(et).or_default().push((sa, sb));
                }
            }
        }
        copy
    }
}

/// Positive hyperedges of one mini-batch and the node-induced expanded
/// subgraph over their members.
#[derive(Clone, Debug)]
pub struct Batch {
    pub hyperedges: Vec<HyperedgeId>,
    pub nodes: BTreeSet<NodeId>,
    pub graph: TypedGraph,
}

impl Batch {
    pub fn from_hyperedges(h: &Hypergraph, g: &TypedGraph, ids: Vec<HyperedgeId>) -> Result<Self> {
        let mut nodes = BTreeSet::new();
        for &f in &ids {
            nodes.extend(h.hyperedge(f)?.members.iter().copied());
        }
        let graph = g.induced(&nodes);
        Ok(Self {
            hyperedges: ids,
            nodes,
            graph,
        })
    }
}

/// Yields every hyperedge exactly once per epoch, in a seeded random order,
/// `batch_size` at a time.
#[derive(Clone, Debug)]
pub struct CliqueSampler {
    hyperedges: Vec<HyperedgeId>,
    batch_size: usize,
}

impl CliqueSampler {
    pub fn new(hyperedges: Vec<HyperedgeId>, batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(Self {
            hyperedges,
            batch_size,
        })
    }

    pub fn epoch_ids(&self, rng: &mut Rng) -> Vec<Vec<HyperedgeId>> {
        let mut order = self.hyperedges.clone();
        order.shuffle(rng);
        order.chunks(self.batch_size).map(|c| c.to_vec()).collect()
    }

    pub fn epoch(&self, h: &Hypergraph, g: &TypedGraph, rng: &mut Rng) -> Result<Vec<Batch>> {
        self.epoch_ids(rng)
            .into_iter()
            .map(|ids| Batch::from_hyperedges(h, g, ids))
            .collect()
    }
}

/// One epoch of clique batches over every hyperedge of `h`.
pub fn sample_cliques(
    h: &Hypergraph,
    g: &TypedGraph,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<Vec<Batch>> {
    let ids = h.hyperedges().iter().map(|f| f.id).collect();
    CliqueSampler::new(ids, batch_size)?.epoch(h, g, rng)
}
