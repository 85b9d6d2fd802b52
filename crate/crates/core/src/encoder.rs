//! The BASE encoder: per-type projections into a shared space followed by
//! heterogeneous message passing with one message map per edge type and one
//! update function per node type.

use std::collections::{BTreeMap, BTreeSet};

use crate::autograd::{Aggregator, Graph, ParamId, ParamStore, Var};
use crate::error::{Error, Result};
use crate::expansion::{AuxiliaryGraph, EdgeType, MessageGraph, NodeRef, SlotKind, TypedGraph};
use crate::hypergraph::{Hypergraph, NodeTypeId};
use crate::nn::{Activation, Dropout, Linear, Mlp};
use crate::pretrain::DummyAttributeTable;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EncoderStyle {
    /// `MLP(h_v || message)`.
    Sage,
    /// `MLP((1 + eps_t) h_v + sum message)` with a learnable `eps_t`.
    Gin,
    /// `W_t h_v + b_t + message`.
    GraphConv,
}

impl EncoderStyle {
    pub fn name(self) -> &'static str {
        match self {
            EncoderStyle::Sage => "sage",
            EncoderStyle::Gin => "gin",
            EncoderStyle::GraphConv => "graphconv",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sage" => Ok(EncoderStyle::Sage),
            "gin" => Ok(EncoderStyle::Gin),
            "graphconv" => Ok(EncoderStyle::GraphConv),
            other => Err(Error::Config(format!(
                "unknown encoder {other:?} (expected sage, gin or graphconv)"
            ))),
        }
    }
}

/// Everything needed to rebuild a [`BaseModel`] with identical parameter
/// names and shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderSpec {
    pub style: EncoderStyle,
    pub layers: usize,
    pub hidden_dim: usize,
    pub mlp_hidden: usize,
    pub aggregator: Aggregator,
    pub dropout: f64,
    /// `(name, attribute dim)` indexed by node type id.
    pub node_types: Vec<(String, usize)>,
    pub edge_types: BTreeSet<EdgeType>,
}

impl EncoderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Config("encoder needs at least one layer".into()));
        }
        if self.hidden_dim == 0 || self.mlp_hidden == 0 {
            return Err(Error::Config("hidden dims must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        for e in &self.edge_types {
            if e.src >= self.node_types.len() || e.dst >= self.node_types.len() {
                return Err(Error::Config(format!("edge type {e:?} names unknown node type")));
            }
        }
        Ok(())
    }

    /// The effective aggregator; GIN always sums.
    pub fn message_aggregator(&self) -> Aggregator {
        match self.style {
            EncoderStyle::Gin => Aggregator::Sum,
            _ => self.aggregator,
        }
    }

    /// Serializes as `key = value` lines for checkpoint headers.
    pub fn descriptor(&self) -> String {
        let types: Vec<String> = self
            .node_types
            .iter()
            .map(|(n, d)| format!("{n}:{d}"))
            .collect();
        let edges: Vec<String> = self
            .edge_types
            .iter()
            .map(|e| format!("{}>{}{}", e.src, e.dst, if e.to_dummy { "*" } else { "" }))
            .collect();
        format!(
            "encoder = {}\nlayers = {}\nhidden_dim = {}\nmlp_hidden = {}\naggregator = {}\n\
             dropout = {}\nnode_types = {}\nedge_types = {}\n",
            self.style.name(),
            self.layers,
            self.hidden_dim,
            self.mlp_hidden,
            self.aggregator.name(),
            self.dropout,
            types.join(","),
            edges.join(",")
        )
    }

    pub fn from_descriptor(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Checkpoint(format!("bad descriptor line {line:?}")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            kv.get(k)
                .cloned()
                .ok_or_else(|| Error::Checkpoint(format!("descriptor lacks {k}")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::Checkpoint(format!("descriptor {k} is not an integer")))
        };
        let node_types = get("node_types")?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| {
                let (n, d) = s
                    .split_once(':')
                    .ok_or_else(|| Error::Checkpoint(format!("bad node type {s:?}")))?;
                let d = d
                    .parse()
                    .map_err(|_| Error::Checkpoint(format!("bad node type dim {s:?}")))?;
                Ok((n.to_string(), d))
            })
            .collect::<Result<Vec<_>>>()?;
        let edge_types = get("edge_types")?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| {
                let to_dummy = s.ends_with('*');
                let body = s.trim_end_matches('*');
                let (a, b) = body
                    .split_once('>')
                    .ok_or_else(|| Error::Checkpoint(format!("bad edge type {s:?}")))?;
                let parse = |x: &str| {
                    x.parse::<usize>()
                        .map_err(|_| Error::Checkpoint(format!("bad edge type {s:?}")))
                };
                Ok(EdgeType {
                    src: parse(a)?,
                    dst: parse(b)?,
                    to_dummy,
                })
            })
            .collect::<Result<BTreeSet<_>>>()?;
        let spec = Self {
            style: EncoderStyle::parse(&get("encoder")?).map_err(|e| Error::Checkpoint(e.to_string()))?,
            layers: num("layers")?,
            hidden_dim: num("hidden_dim")?,
            mlp_hidden: num("mlp_hidden")?,
            aggregator: Aggregator::parse(&get("aggregator")?)
                .map_err(|e| Error::Checkpoint(e.to_string()))?,
            dropout: get("dropout")?
                .parse()
                .map_err(|_| Error::Checkpoint("descriptor dropout is not a number".into()))?,
            node_types,
            edge_types,
        };
        spec.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(spec)
    }
}

/// Edge types a model must carry parameters for to encode `g`.
pub fn edge_type_backends(g: &MessageGraph) -> BTreeSet<EdgeType> {
    g.edge_types()
}

/// Edge types of the expansion plus the dummy in-edge types an auxiliary
/// graph over the same nodes can produce.
pub fn edge_types_with_dummies(g: &TypedGraph) -> BTreeSet<EdgeType> {
    let mut out = g.edge_types();
    let dummies: Vec<EdgeType> = out.iter().map(|e| EdgeType::dummy(e.src, e.dst)).collect();
    out.extend(dummies);
    out
}

impl AuxiliaryGraph {
    pub fn edge_type_backends(&self) -> BTreeSet<EdgeType> {
        edge_type_backends(&self.message_graph())
    }
}

#[derive(Clone, Debug)]
pub struct ProjectionBank {
    pub per_type: Vec<Mlp>,
}

#[derive(Clone, Debug)]
pub enum UpdateFn {
    Sage(Mlp),
    Gin { eps: ParamId, mlp: Mlp },
    GraphConv(Linear),
}

#[derive(Clone, Debug)]
pub struct HeteroLayer {
    pub messages: BTreeMap<EdgeType, Linear>,
    pub updates: Vec<UpdateFn>,
}

#[derive(Clone, Debug)]
pub struct BaseModel {
    pub spec: EncoderSpec,
    pub projections: ProjectionBank,
    pub layers: Vec<HeteroLayer>,
}

/// Encoder input features: original attributes from the hypergraph, dummy
/// attributes from the per-type table.
#[derive(Clone, Copy)]
pub struct NodeFeatures<'a> {
    pub hypergraph: &'a Hypergraph,
    pub dummy: Option<&'a DummyAttributeTable>,
}

impl<'a> NodeFeatures<'a> {
    pub fn new(hypergraph: &'a Hypergraph) -> Self {
        Self {
            hypergraph,
            dummy: None,
        }
    }

    pub fn with_dummies(hypergraph: &'a Hypergraph, dummy: &'a DummyAttributeTable) -> Self {
        Self {
            hypergraph,
            dummy: Some(dummy),
        }
    }
}

/// Output of [`BaseModel::encode`]: one row of `matrix` per addressable
/// node or dummy.
pub struct Embeddings {
    pub matrix: Var,
    index: BTreeMap<NodeRef, usize>,
}

impl Embeddings {
    pub fn row(&self, r: NodeRef) -> Option<usize> {
        self.index.get(&r).copied()
    }

    pub fn require_row(&self, r: NodeRef) -> Result<usize> {
        self.row(r)
            .ok_or_else(|| Error::Lookup(format!("no embedding for {r:?}")))
    }

    pub fn vector(&self, g: &Graph, r: NodeRef) -> Result<Vec<f64>> {
        Ok(g.value(self.matrix).row(self.require_row(r)?).to_vec())
    }

    pub fn refs(&self) -> impl Iterator<Item = NodeRef> + '_ {
        self.index.keys().copied()
    }
}

impl BaseModel {
    /// Registers all parameters in `store` under the `base.` prefix.
    pub fn new(spec: EncoderSpec, store: &mut ParamStore, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let d = spec.hidden_dim;
        let mut per_type = Vec::new();
        for (t, (name, dim)) in spec.node_types.iter().enumerate() {
            if *dim == 0 {
                return Err(Error::Config(format!("node type {name} has attribute dim 0")));
            }
            per_type.push(Mlp::new(
                store,
                &format!("base.proj.{t}"),
                &[*dim, d],
                Activation::Identity,
                rng,
            )?);
        }
        let mut layers = Vec::new();
        for k in 0..spec.layers {
            let mut messages = BTreeMap::new();
            for &e in &spec.edge_types {
                let star = if e.to_dummy { "s" } else { "" };
                let name = format!("base.layer{k}.msg.{}_{}{star}", e.src, e.dst);
                messages.insert(e, Linear::new(store, &name, d, d, false, rng)?);
            }
            let mut updates = Vec::new();
            for t in 0..spec.node_types.len() {
                let prefix = format!("base.layer{k}.upd.{t}");
                let u = match spec.style {
                    EncoderStyle::Sage => UpdateFn::Sage(Mlp::new(
                        store,
                        &prefix,
                        &[2 * d, d],
                        Activation::Identity,
                        rng,
                    )?),
                    EncoderStyle::Gin => UpdateFn::Gin {
                        eps: store.add(format!("{prefix}.eps"), Tensor::zeros(&[1]))?,
                        mlp: Mlp::new(
                            store,
                            &prefix,
                            &[d, spec.mlp_hidden, d],
                            Activation::Identity,
                            rng,
                        )?,
                    },
                    EncoderStyle::GraphConv => {
                        UpdateFn::GraphConv(Linear::new(store, &format!("{prefix}.self"), d, d, true, rng)?)
                    }
                };
                updates.push(u);
            }
            layers.push(HeteroLayer { messages, updates });
        }
        Ok(Self {
            spec,
            projections: ProjectionBank { per_type },
            layers,
        })
    }

    pub fn hidden_dim(&self) -> usize {
        self.spec.hidden_dim
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut out: Vec<ParamId> = self.projections.per_type.iter().flat_map(|m| m.params()).collect();
        for l in &self.layers {
            for lin in l.messages.values() {
                out.extend(lin.params());
            }
            for u in &l.updates {
                match u {
                    UpdateFn::Sage(m) => out.extend(m.params()),
                    UpdateFn::Gin { eps, mlp } => {
                        out.push(*eps);
                        out.extend(mlp.params());
                    }
                    UpdateFn::GraphConv(l) => out.extend(l.params()),
                }
            }
        }
        out
    }

    /// Runs the projections and all message-passing layers over `mg`.
    /// Dummies read their type's row of `features.dummy`.
    pub fn encode(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        mg: &MessageGraph,
        features: NodeFeatures<'_>,
        dropout: &mut Dropout<'_>,
    ) -> Result<Embeddings> {
        let n = mg.slots.len();
        let d = self.spec.hidden_dim;
        let num_types = self.spec.node_types.len();
        for (&e, list) in &mg.relations {
            if !list.is_empty() && !self.layers[0].messages.contains_key(&e) {
                return Err(Error::Config(format!(
                    "model has no message parameters for edge type {e:?}"
                )));
            }
        }

        let mut rows_by_type: Vec<Vec<usize>> = vec![Vec::new(); num_types];
        for (i, s) in mg.slots.iter().enumerate() {
            if s.node_type >= num_types {
                return Err(Error::Config(format!(
                    "node type {} is not known to the model",
                    s.node_type
                )));
            }
            rows_by_type[s.node_type].push(i);
        }
        let present: Vec<NodeTypeId> = (0..num_types).filter(|&t| !rows_by_type[t].is_empty()).collect();
        // concat_rows stacks types in `present` order; `perm` maps back to slots.
        let mut perm = vec![0usize; n];
        let mut offset = 0;
        for &t in &present {
            for (j, &slot) in rows_by_type[t].iter().enumerate() {
                perm[slot] = offset + j;
            }
            offset += rows_by_type[t].len();
        }

        let mut parts = Vec::new();
        for &t in &present {
            let dim = self.spec.node_types[t].1;
            let mut data = Vec::with_capacity(rows_by_type[t].len() * dim);
            for &slot in &rows_by_type[t] {
                let s = &mg.slots[slot];
                let attrs: &[f64] = match s.kind {
                    SlotKind::Node | SlotKind::Shadow { .. } => &features.hypergraph.node(s.node)?.attributes,
                    SlotKind::Dummy => features
                        .dummy
                        .ok_or_else(|| Error::Config("dummy attributes required".into()))?
                        .get(t)?,
                };
                if attrs.len() != dim {
                    return Err(Error::shape(
                        "encode",
                        format!("node {} has {} attributes, type expects {}", s.node, attrs.len(), dim),
                    ));
                }
                data.extend_from_slice(attrs);
            }
            let x = g.constant(Tensor::matrix(rows_by_type[t].len(), dim, data)?)?;
            parts.push(self.projections.per_type[t].forward(g, store, x, dropout)?);
        }
        let stacked = g.concat_rows(&parts)?;
        let mut h = g.gather_rows(stacked, perm.clone())?;

        let agg = self.spec.message_aggregator();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut msg: Option<Var> = None;
            for (e, pairs) in &mg.relations {
                if pairs.is_empty() {
                    continue;
                }
                let lin = &layer.messages[e];
                let srcs: BTreeSet<usize> = pairs.iter().map(|&(s, _)| s).collect();
                let local: BTreeMap<usize, usize> =
                    srcs.iter().enumerate().map(|(i, &s)| (s, i)).collect();
                let hs = g.gather_rows(h, srcs.into_iter().collect())?;
                let m = lin.forward(g, store, hs)?;
                let mut segments = vec![Vec::new(); n];
                for &(s, dst) in pairs {
                    segments[dst].push(local[&s]);
                }
                let a = g.segment_aggregate(m, segments, agg)?;
                msg = Some(match msg {
                    Some(prev) => g.add(prev, a)?,
                    None => a,
                });
            }
            let msg = match msg {
                Some(m) => m,
                None => g.constant(Tensor::zeros(&[n, d]))?,
            };

            let mut outs = Vec::new();
            for &t in &present {
                let own = g.gather_rows(h, rows_by_type[t].clone())?;
                let m_t = g.gather_rows(msg, rows_by_type[t].clone())?;
                let out = match &layer.updates[t] {
                    UpdateFn::Sage(mlp) => {
                        let cat = g.concat_cols(own, m_t)?;
                        mlp.forward(g, store, cat, dropout)?
                    }
                    UpdateFn::Gin { eps, mlp } => {
                        let e = g.param(store, *eps)?;
                        let scaled = g.scale_by(own, e)?;
                        let own1 = g.add(own, scaled)?;
                        let z = g.add(own1, m_t)?;
                        mlp.forward(g, store, z, dropout)?
                    }
                    UpdateFn::GraphConv(lin) => {
                        let s = lin.forward(g, store, own)?;
                        g.add(s, m_t)?
                    }
                };
                outs.push(out);
            }
            let stacked = g.concat_rows(&outs)?;
            h = g.gather_rows(stacked, perm.clone())?;
            if k < last {
                h = g.relu(h)?;
                h = dropout.apply(g, h)?;
            }
        }
        Ok(Embeddings {
            matrix: h,
            index: mg.addressable().collect(),
        })
    }
}
