#![allow(dead_code)]

use std::collections::BTreeSet;

use proptest::prelude::*;
use sphh::autograd::{Aggregator, ParamStore};
use sphh::encoder::{edge_types_with_dummies, BaseModel, EncoderSpec, EncoderStyle};
use sphh::expansion::clique_expand;
use sphh::hypergraph::{HyperedgeId, Hypergraph, Node, NodeId, NodeType};
use sphh::rng::stream;

pub fn types(dims: &[(&str, usize)]) -> Vec<NodeType> {
    dims.iter()
        .enumerate()
        .map(|(id, (name, attr_dim))| NodeType {
            id,
            name: name.to_string(),
            attr_dim: *attr_dim,
        })
        .collect()
}

pub fn node(id: usize, node_type: usize, attributes: Vec<f64>) -> Node {
    Node {
        id: NodeId(id),
        node_type,
        attributes,
    }
}

pub fn edge(id: usize, members: &[usize]) -> (HyperedgeId, Vec<NodeId>) {
    (HyperedgeId(id), members.iter().map(|&m| NodeId(m)).collect())
}

/// Types P and A with 2 attributes; `f1 = {p1, a1, a2}` plus isolated `a3`.
/// Ids: p1=0, a1=1, a2=2, a3=3.
pub fn paper_authors() -> Hypergraph {
    Hypergraph::new(
        types(&[("P", 2), ("A", 2)]),
        vec![
            node(0, 0, vec![1.0, 0.0]),
            node(1, 1, vec![0.0, 1.0]),
            node(2, 1, vec![0.0, 3.0]),
            node(3, 1, vec![2.0, 2.0]),
        ],
        vec![edge(1, &[0, 1, 2])],
    )
    .unwrap()
}

/// Random valid hypergraph: up to `max_nodes` nodes over 1..=`max_types`
/// types (attribute dim `dim`), up to `max_edges` hyperedges of size >= 2.
pub fn arb_hypergraph(max_nodes: usize, max_types: usize, max_edges: usize, dim: usize) -> impl Strategy<Value = Hypergraph> {
    (2..=max_nodes, 1..=max_types)
        .prop_flat_map(move |(n, t)| {
            let node_types = proptest::collection::vec(0..t, n);
            let attrs = proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, dim), n);
            let edges = proptest::collection::vec(proptest::collection::btree_set(0..n, 2..=n.min(5)), 0..=max_edges);
            (Just(t), node_types, attrs, edges)
        })
        .prop_map(move |(t, node_types, attrs, edges)| {
            let names: Vec<String> = (0..t).map(|i| format!("T{i}")).collect();
            let ty = names
                .iter()
                .enumerate()
                .map(|(id, name)| NodeType {
                    id,
                    name: name.clone(),
                    attr_dim: dim,
                })
                .collect();
            let nodes = node_types
                .iter()
                .zip(attrs)
                .enumerate()
                .map(|(i, (&nt, a))| node(i, nt, a))
                .collect();
            let hyperedges = edges
                .into_iter()
                .enumerate()
                .map(|(i, s): (usize, BTreeSet<usize>)| (HyperedgeId(i), s.into_iter().map(NodeId).collect()))
                .collect();
            Hypergraph::new(ty, nodes, hyperedges).unwrap()
        })
}

pub fn spec_for(h: &Hypergraph, style: EncoderStyle, layers: usize, hidden: usize, agg: Aggregator) -> EncoderSpec {
    EncoderSpec {
        style,
        layers,
        hidden_dim: hidden,
        mlp_hidden: hidden,
        aggregator: agg,
        dropout: 0.0,
        node_types: h.node_types().iter().map(|t| (t.name.clone(), t.attr_dim)).collect(),
        edge_types: edge_types_with_dummies(&clique_expand(h)),
    }
}

pub fn model_for(h: &Hypergraph, style: EncoderStyle, layers: usize, hidden: usize, agg: Aggregator, seed: u64) -> (BaseModel, ParamStore) {
    let mut store = ParamStore::new();
    let model = BaseModel::new(spec_for(h, style, layers, hidden, agg), &mut store, &mut stream(seed, "init")).unwrap();
    (model, store)
}

pub const STYLES: [EncoderStyle; 3] = [EncoderStyle::Sage, EncoderStyle::Gin, EncoderStyle::GraphConv];
pub const AGGREGATORS: [Aggregator; 3] = [Aggregator::Mean, Aggregator::Max, Aggregator::Sum];
