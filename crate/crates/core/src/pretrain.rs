//! The two self-supervised tasks and the mini-batch pretraining loop.
//!
//! Node attribute construction decodes each node's attributes from the
//! embedding of its dummy; hyperedge prediction classifies true hyperedges
//! against perturbed copies. Both share the BASE encoder parameters.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autograd::{Aggregator, Graph, ParamStore, Var};
use crate::checkpoint::Checkpoint;
use crate::encoder::{edge_types_with_dummies, BaseModel, EncoderSpec, EncoderStyle, Embeddings, NodeFeatures};
use crate::error::{Error, Result};
use crate::expansion::{clique_expand, expand_hyperedges, AuxiliaryGraph, Batch, CliqueSampler, NodeRef};
use crate::hypergraph::{Hyperedge, HyperedgeId, Hypergraph, NodeId, NodeTypeId};
use crate::metrics;
use crate::nn::{Activation, Dropout, Mlp};
use crate::optim::{Adam, AdamConfig};
use crate::rng::{stream, Rng};
use crate::tensor::Tensor;

/// Per-type attribute vector given to every dummy of that type.
#[derive(Clone, Debug, PartialEq)]
pub struct DummyAttributeTable {
    per_type: Vec<Vec<f64>>,
}

impl DummyAttributeTable {
    pub fn get(&self, t: NodeTypeId) -> Result<&[f64]> {
        self.per_type
            .get(t)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::Lookup(format!("no dummy attributes for node type {t}")))
    }

    pub fn per_type(&self) -> &[Vec<f64>] {
        &self.per_type
    }
}

/// Elementwise mean of the attributes of each type's nodes in `split`.
pub fn dummy_attributes(h: &Hypergraph, split: &BTreeSet<NodeId>) -> Result<DummyAttributeTable> {
    let mut sums: Vec<Vec<f64>> = h.node_types().iter().map(|t| vec![0.0; t.attr_dim]).collect();
    let mut counts = vec![0usize; sums.len()];
    for &v in split {
        let n = h.node(v)?;
        counts[n.node_type] += 1;
        for (s, x) in sums[n.node_type].iter_mut().zip(&n.attributes) {
            *s += x;
        }
    }
    for (t, (s, &c)) in sums.iter_mut().zip(&counts).enumerate() {
        if c == 0 {
            return Err(Error::Config(format!(
                "node type {:?} has no nodes in the pretraining split",
                h.node_types()[t].name
            )));
        }
        s.iter_mut().for_each(|v| *v /= c as f64);
    }
    Ok(DummyAttributeTable { per_type: sums })
}

/// Candidate replacement nodes per type, ascending.
#[derive(Clone, Debug)]
pub struct TypePools {
    per_type: Vec<Vec<NodeId>>,
}

impl TypePools {
    pub fn all(h: &Hypergraph) -> Self {
        Self::from_nodes(h, h.nodes().iter().map(|n| n.id))
    }

    pub fn from_nodes(h: &Hypergraph, nodes: impl IntoIterator<Item = NodeId>) -> Self {
        let mut per_type = vec![BTreeSet::new(); h.node_types().len()];
        for v in nodes {
            if let Ok(n) = h.node(v) {
                per_type[n.node_type].insert(v);
            }
        }
        Self {
            per_type: per_type.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }

    pub fn of_type(&self, t: NodeTypeId) -> &[NodeId] {
        &self.per_type[t]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NegativeHyperedge {
    /// Sorted members of `f+ \ S_t ∪ R_t`.
    pub members: Vec<NodeId>,
    pub source: HyperedgeId,
    pub perturbed_type: NodeTypeId,
    pub replaced: Vec<NodeId>,
    pub inserted: Vec<NodeId>,
}

/// `|S_t|` for a slice of `slice_len` nodes of the perturbed type.
pub fn replacement_count(alpha: f64, slice_len: usize) -> usize {
    ((alpha * slice_len as f64).round() as usize).clamp(1, slice_len.max(1))
}

/// Perturbs `positive` by swapping an `alpha` fraction of one uniformly
/// chosen node type's members for nodes of that type outside the hyperedge,
/// drawn from `pool`. `forced_type` pins the perturbed type.
pub fn negative_sample_with(
    positive: &Hyperedge,
    h: &Hypergraph,
    alpha: f64,
    pool: &TypePools,
    forced_type: Option<NodeTypeId>,
    rng: &mut Rng,
) -> Result<NegativeHyperedge> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Config(format!("perturbation ratio {alpha} outside (0, 1]")));
    }
    let members: BTreeSet<NodeId> = positive.members.iter().copied().collect();
    let mut slices: BTreeMap<NodeTypeId, Vec<NodeId>> = BTreeMap::new();
    for &m in &positive.members {
        slices.entry(h.node_type_of(m)?).or_default().push(m);
    }
    let outside = |t: NodeTypeId| -> Vec<NodeId> {
        pool.of_type(t)
            .iter()
            .copied()
            .filter(|v| !members.contains(v))
            .collect()
    };
    let eligible: Vec<NodeTypeId> = slices
        .keys()
        .copied()
        .filter(|&t| forced_type.is_none_or(|f| f == t))
        .filter(|&t| !outside(t).is_empty())
        .collect();
    if eligible.is_empty() {
        return Err(Error::Sampling(format!(
            "hyperedge {} has no node type with replacement candidates",
            positive.id
        )));
    }
    let t = eligible[rng.random_range(0..eligible.len())];
    let slice = &slices[&t];
    let candidates = outside(t);
    let k = replacement_count(alpha, slice.len()).min(candidates.len());
    let mut replaced: Vec<NodeId> = sample(rng, slice.len(), k).into_iter().map(|i| slice[i]).collect();
    let mut inserted: Vec<NodeId> = sample(rng, candidates.len(), k)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    replaced.sort();
    inserted.sort();
    let mut out: BTreeSet<NodeId> = members;
    for r in &replaced {
        out.remove(r);
    }
    out.extend(inserted.iter().copied());
    Ok(NegativeHyperedge {
        members: out.into_iter().collect(),
        source: positive.id,
        perturbed_type: t,
        replaced,
        inserted,
    })
}

/// [`negative_sample_with`] over every node of `h`.
pub fn negative_sample(
    positive: &Hyperedge,
    h: &Hypergraph,
    alpha: f64,
    rng: &mut Rng,
) -> Result<NegativeHyperedge> {
    negative_sample_with(positive, h, alpha, &TypePools::all(h), None, rng)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Config(format!("alpha = {alpha} must lie in (0, 1]")));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::Config(format!("beta = {beta} must lie in [0, 1]")));
        }
        Ok(Self { alpha, beta })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Distance {
    SquaredL2,
    Cosine,
}

impl Distance {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(Distance::SquaredL2),
            "cosine" => Ok(Distance::Cosine),
            other => Err(Error::Config(format!("unknown distance {other:?} (expected l2 or cosine)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Distance::SquaredL2 => "l2",
            Distance::Cosine => "cosine",
        }
    }
}

/// One attribute decoder per node type.
#[derive(Clone, Debug)]
pub struct DecoderBank {
    pub per_type: Vec<Mlp>,
}

impl DecoderBank {
    pub fn new(spec: &EncoderSpec, store: &mut ParamStore, rng: &mut Rng) -> Result<Self> {
        let per_type = spec
            .node_types
            .iter()
            .enumerate()
            .map(|(t, (_, dim))| {
                Mlp::new(
                    store,
                    &format!("dec.{t}"),
                    &[spec.hidden_dim, spec.mlp_hidden, *dim],
                    Activation::Identity,
                    rng,
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self { per_type })
    }
}

/// Binary hyperedge classifier producing one logit per representation.
#[derive(Clone, Debug)]
pub struct EdgeClassifier {
    pub mlp: Mlp,
}

impl EdgeClassifier {
    pub fn new(spec: &EncoderSpec, store: &mut ParamStore, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            mlp: Mlp::new(
                store,
                "cls",
                &[spec.hidden_dim, spec.mlp_hidden, 1],
                Activation::Identity,
                rng,
            )?,
        })
    }

    pub fn logits(&self, g: &mut Graph, store: &ParamStore, eta: Var, dropout: &mut Dropout<'_>) -> Result<Var> {
        self.mlp.forward(g, store, eta, dropout)
    }
}

/// `eta_f = Aggregate({h_v : v in f})` for every set, stacked as rows.
pub fn hyperedge_representations(
    g: &mut Graph,
    emb: &Embeddings,
    sets: &[Vec<NodeId>],
    agg: Aggregator,
) -> Result<Var> {
    let segments = sets
        .iter()
        .map(|s| s.iter().map(|&v| emb.require_row(NodeRef::Node(v))).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    g.segment_aggregate(emb.matrix, segments, agg)
}

/// Mean over `targets` of `dist(x_v, DEC_t(h_{v*}))`.
pub fn attr_construction_loss(
    g: &mut Graph,
    store: &ParamStore,
    emb: &Embeddings,
    decoders: &DecoderBank,
    h: &Hypergraph,
    targets: &BTreeSet<NodeId>,
    dist: Distance,
    dropout: &mut Dropout<'_>,
) -> Result<Var> {
    if targets.is_empty() {
        return Err(Error::Config("attribute construction needs at least one node".into()));
    }
    let mut by_type: BTreeMap<NodeTypeId, Vec<NodeId>> = BTreeMap::new();
    for &v in targets {
        by_type.entry(h.node_type_of(v)?).or_default().push(v);
    }
    let mut total: Option<Var> = None;
    for (t, nodes) in by_type {
        let dec = decoders
            .per_type
            .get(t)
            .ok_or_else(|| Error::Config(format!("no decoder for node type {t}")))?;
        let rows = nodes
            .iter()
            .map(|&v| emb.require_row(NodeRef::Dummy(v)))
            .collect::<Result<Vec<_>>>()?;
        let hs = g.gather_rows(emb.matrix, rows)?;
        let decoded = dec.forward(g, store, hs, dropout)?;
        let dim = dec.out_dim();
        let mut data = Vec::with_capacity(nodes.len() * dim);
        for &v in &nodes {
            let a = &h.node(v)?.attributes;
            if a.len() != dim {
                return Err(Error::Config(format!(
                    "decoder for type {t} outputs {dim} values, node {v} has {}",
                    a.len()
                )));
            }
            data.extend_from_slice(a);
        }
        let x = g.constant(Tensor::matrix(nodes.len(), dim, data)?)?;
        let per_type = match dist {
            Distance::SquaredL2 => {
                let diff = g.sub(x, decoded)?;
                let sq = g.mul(diff, diff)?;
                g.sum(sq)?
            }
            Distance::Cosine => {
                let d = g.cosine_distance(x, decoded)?;
                g.sum(d)?
            }
        };
        total = Some(match total {
            Some(prev) => g.add(prev, per_type)?,
            None => per_type,
        });
    }
    g.scale(total.expect("targets non-empty"), 1.0 / targets.len() as f64)
}

/// Mean binary cross entropy of the classifier over the stacked
/// representations. Returns `(loss, logits)`.
pub fn hyperedge_prediction_loss(
    g: &mut Graph,
    store: &ParamStore,
    classifier: &EdgeClassifier,
    eta: Var,
    labels: &[f64],
    dropout: &mut Dropout<'_>,
) -> Result<(Var, Var)> {
    let logits = classifier.logits(g, store, eta, dropout)?;
    let loss = g.bce_with_logits(logits, labels.to_vec())?;
    Ok((loss, logits))
}

/// `beta * L_Tc + (1 - beta) * L_Tp`.
pub fn total_loss(l_tc: f64, l_tp: f64, beta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Config(format!("beta = {beta} must lie in [0, 1]")));
    }
    Ok(beta * l_tc + (1.0 - beta) * l_tp)
}

fn total_loss_var(g: &mut Graph, l_tc: Var, l_tp: Var, beta: f64) -> Result<Var> {
    let a = g.scale(l_tc, beta)?;
    let b = g.scale(l_tp, 1.0 - beta)?;
    g.add(a, b)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainConfig {
    pub style: EncoderStyle,
    pub layers: usize,
    pub hidden_dim: usize,
    pub mlp_hidden: usize,
    pub aggregator: Aggregator,
    pub dropout: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weights: LossWeights,
    pub dist: Distance,
    pub strict_dummies: bool,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            style: EncoderStyle::Sage,
            layers: 2,
            hidden_dim: 32,
            mlp_hidden: 32,
            aggregator: Aggregator::Mean,
            dropout: 0.2,
            lr: 5e-3,
            batch_size: 64,
            epochs: 50,
            weights: LossWeights { alpha: 0.1, beta: 0.6 },
            dist: Distance::SquaredL2,
            strict_dummies: false,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    /// Encoder architecture for `h`: message maps for every edge type of the
    /// full expansion, and for the matching dummy in-edges.
    pub fn encoder_spec(&self, h: &Hypergraph) -> EncoderSpec {
        EncoderSpec {
            style: self.style,
            layers: self.layers,
            hidden_dim: self.hidden_dim,
            mlp_hidden: self.mlp_hidden,
            aggregator: self.aggregator,
            dropout: self.dropout,
            node_types: h.node_types().iter().map(|t| (t.name.clone(), t.attr_dim)).collect(),
            edge_types: edge_types_with_dummies(&clique_expand(h)),
        }
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    #[serde(rename = "L_Tc")]
    pub l_tc: f64,
    #[serde(rename = "L_Tp")]
    pub l_tp: f64,
    #[serde(rename = "L_total")]
    pub l_total: f64,
    pub preval_auc: Option<f64>,
    #[serde(rename = "preval_Tc")]
    pub preval_tc: Option<f64>,
    pub preval_total: Option<f64>,
    pub wall_clock_s: f64,
}

/// Everything a pretraining run produces. `store` holds the BASE, decoder
/// and classifier parameters at the selected epoch.
pub struct PretrainOutcome {
    pub model: BaseModel,
    pub decoders: DecoderBank,
    pub classifier: EdgeClassifier,
    pub store: ParamStore,
    pub dummy_attrs: DummyAttributeTable,
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl PretrainOutcome {
    /// BASE parameters only, ready for fine-tuning.
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_store(self.model.spec.descriptor(), &self.store, "base.")
    }
}

/// Losses and logits of one forward pass over a batch.
pub struct BatchPass {
    pub graph: Graph,
    pub l_tc: Var,
    pub l_tp: Var,
    pub total: Var,
    pub logits: Var,
    pub labels: Vec<f64>,
}

/// Trainer state shared by the training loop and prevalidation.
pub struct Pretrainer<'h> {
    pub h: &'h Hypergraph,
    pub config: PretrainConfig,
    pub model: BaseModel,
    pub decoders: DecoderBank,
    pub classifier: EdgeClassifier,
    pub store: ParamStore,
    pub dummy_attrs: DummyAttributeTable,
}

impl<'h> Pretrainer<'h> {
    pub fn new(h: &'h Hypergraph, pretrain_nodes: &BTreeSet<NodeId>, config: PretrainConfig) -> Result<Self> {
        LossWeights::new(config.weights.alpha, config.weights.beta)?;
        if config.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(config.lr > 0.0) {
            return Err(Error::Config(format!("learning rate {} must be positive", config.lr)));
        }
        let dummy_attrs = dummy_attributes(h, pretrain_nodes)?;
        let spec = config.encoder_spec(h);
        let mut store = ParamStore::new();
        let mut init = stream(config.seed, "init");
        let model = BaseModel::new(spec, &mut store, &mut init)?;
        let decoders = DecoderBank::new(&model.spec, &mut store, &mut init)?;
        let classifier = EdgeClassifier::new(&model.spec, &mut store, &mut init)?;
        Ok(Self {
            h,
            config,
            model,
            decoders,
            classifier,
            store,
            dummy_attrs,
        })
    }

    /// One negative per positive, replacements drawn from the batch's own
    /// nodes. Positives without a legal perturbation are dropped.
    pub fn negatives(&self, batch: &Batch, rng: &mut Rng) -> Result<(Vec<HyperedgeId>, Vec<NegativeHyperedge>)> {
        let pools = TypePools::from_nodes(self.h, batch.nodes.iter().copied());
        let mut kept = Vec::new();
        let mut negs = Vec::new();
        for &fid in &batch.hyperedges {
            let f = self.h.hyperedge(fid)?;
            match negative_sample_with(f, self.h, self.config.weights.alpha, &pools, None, rng) {
                Ok(n) => {
                    kept.push(fid);
                    negs.push(n);
                }
                Err(Error::Sampling(msg)) => log::warn!("skipping positive: {msg}"),
                Err(e) => return Err(e),
            }
        }
        Ok((kept, negs))
    }

    pub fn auxiliary(&self, batch: &Batch) -> Result<AuxiliaryGraph> {
        if self.config.strict_dummies {
            AuxiliaryGraph::build_strict(&batch.graph, &batch.nodes, self.config.layers)
        } else {
            AuxiliaryGraph::build(&batch.graph, &batch.nodes)
        }
    }

    /// Encodes the batch's auxiliary graph once (dummies have no outgoing
    /// edges, so original-node embeddings equal those of the primary
    /// graph) and computes both task losses.
    pub fn forward(
        &self,
        batch: &Batch,
        positives: &[HyperedgeId],
        negatives: &[NegativeHyperedge],
        dropout: &mut Dropout<'_>,
    ) -> Result<BatchPass> {
        let aux = self.auxiliary(batch)?;
        let mg = aux.message_graph();
        let mut g = Graph::new();
        let feats = NodeFeatures::with_dummies(self.h, &self.dummy_attrs);
        let emb = self.model.encode(&mut g, &self.store, &mg, feats, dropout)?;
        let l_tc = attr_construction_loss(
            &mut g,
            &self.store,
            &emb,
            &self.decoders,
            self.h,
            &batch.nodes,
            self.config.dist,
            dropout,
        )?;
        if positives.is_empty() {
            return Err(Error::Sampling("batch has no usable positive hyperedge".into()));
        }
        let mut sets: Vec<Vec<NodeId>> = positives
            .iter()
            .map(|&f| self.h.hyperedge(f).map(|e| e.members.clone()))
            .collect::<Result<_>>()?;
        sets.extend(negatives.iter().map(|n| n.members.clone()));
        let mut labels = vec![1.0; positives.len()];
        labels.extend(std::iter::repeat_n(0.0, negatives.len()));
        let eta = hyperedge_representations(&mut g, &emb, &sets, self.model.spec.aggregator)?;
        let (l_tp, logits) =
            hyperedge_prediction_loss(&mut g, &self.store, &self.classifier, eta, &labels, dropout)?;
        let total = total_loss_var(&mut g, l_tc, l_tp, self.config.weights.beta)?;
        Ok(BatchPass {
            graph: g,
            l_tc,
            l_tp,
            total,
            logits,
            labels,
        })
    }

    /// Prevalidation metrics `(auc, L_Tc, L_total)` on held-out hyperedges,
    /// with a fixed negative draw so epochs are comparable.
    pub fn prevalidate(&self, batch: &Batch) -> Result<(f64, f64, f64)> {
        let mut rng = stream(self.config.seed, "preval-negatives");
        let (pos, negs) = self.negatives(batch, &mut rng)?;
        let pass = self.forward(batch, &pos, &negs, &mut Dropout::off())?;
        let g = &pass.graph;
        let scores = g.value(pass.logits).data().to_vec();
        let labels: Vec<bool> = pass.labels.iter().map(|&y| y > 0.5).collect();
        let auc = metrics::auc(&scores, &labels)?;
        Ok((auc, g.value(pass.l_tc).item(), g.value(pass.total).item()))
    }
}

/// Runs the full pretraining loop. Model selection keeps the epoch with the
/// lowest prevalidation total loss (the last epoch when there is no
/// prevalidation set).
pub fn pretrain(
    h: &Hypergraph,
    pretrain_edges: &[HyperedgeId],
    preval_edges: &[HyperedgeId],
    config: PretrainConfig,
) -> Result<PretrainOutcome> {
    pretrain_with_observer(h, pretrain_edges, preval_edges, config, |_| {})
}

pub fn pretrain_with_observer(
    h: &Hypergraph,
    pretrain_edges: &[HyperedgeId],
    preval_edges: &[HyperedgeId],
    config: PretrainConfig,
    mut observe: impl FnMut(&EpochRecord),
) -> Result<PretrainOutcome> {
    if pretrain_edges.is_empty() {
        return Err(Error::Config("pretraining split has no hyperedges".into()));
    }
    let mut pretrain_nodes = BTreeSet::new();
    for &f in pretrain_edges {
        pretrain_nodes.extend(h.hyperedge(f)?.members.iter().copied());
    }
    let mut trainer = Pretrainer::new(h, &pretrain_nodes, config.clone())?;
    let graph = expand_hyperedges(h, pretrain_edges)?;
    let sampler = CliqueSampler::new(pretrain_edges.to_vec(), config.batch_size)?;
    let preval_batch = if preval_edges.is_empty() {
        None
    } else {
        let g = expand_hyperedges(h, preval_edges)?;
        Some(Batch::from_hyperedges(h, &g, preval_edges.to_vec())?)
    };

    let mut sampler_rng = stream(config.seed, "sampler");
    let mut negative_rng = stream(config.seed, "negatives");
    let mut dropout_rng = stream(config.seed, "dropout");
    let mut adam = Adam::new(AdamConfig::with_lr(config.lr), &trainer.store);
    let started = Instant::now();
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, ParamStore)> = None;

    for epoch in 1..=config.epochs {
        let batches = sampler.epoch(h, &graph, &mut sampler_rng)?;
        let (mut sum_tc, mut sum_tp, mut sum_total, mut n) = (0.0, 0.0, 0.0, 0usize);
        for batch in &batches {
            let (pos, negs) = trainer.negatives(batch, &mut negative_rng)?;
            if pos.is_empty() {
                log::warn!("epoch {epoch}: batch without usable positives skipped");
                continue;
            }
            trainer.store.zero_grad();
            let mut dropout = Dropout::train(config.dropout, &mut dropout_rng);
            let mut pass = trainer.forward(batch, &pos, &negs, &mut dropout)?;
            let total = pass.graph.value(pass.total).item();
            if !total.is_finite() {
                return Err(Error::Numeric(format!("total loss at epoch {epoch}")));
            }
            pass.graph.backward(pass.total, &mut trainer.store)?;
            adam.step(&mut trainer.store);
            sum_tc += pass.graph.value(pass.l_tc).item();
            sum_tp += pass.graph.value(pass.l_tp).item();
            sum_total += total;
            n += 1;
        }
        if n == 0 {
            return Err(Error::Sampling(format!("epoch {epoch} had no trainable batch")));
        }
        let (preval_auc, preval_tc, preval_total) = match &preval_batch {
            Some(b) => {
                let (a, tc, tot) = trainer.prevalidate(b)?;
                (Some(a), Some(tc), Some(tot))
            }
            None => (None, None, None),
        };
        let record = EpochRecord {
            epoch,
            l_tc: sum_tc / n as f64,
            l_tp: sum_tp / n as f64,
            l_total: sum_total / n as f64,
            preval_auc,
            preval_tc,
            preval_total,
            wall_clock_s: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: L_Tc {:.4} L_Tp {:.4} preval AUC {:?}",
            record.l_tc,
            record.l_tp,
            record.preval_auc
        );
        observe(&record);
        let score = preval_total.unwrap_or(f64::NEG_INFINITY);
        let better = match &best {
            None => true,
            Some((s, _, _)) => score < *s || preval_total.is_none(),
        };
        if better {
            best = Some((score, epoch, trainer.store.clone()));
        }
        log.push(record);
    }
    let (_, best_epoch, store) = best.ok_or_else(|| Error::Config("epochs must be at least 1".into()))?;
    Ok(PretrainOutcome {
        model: trainer.model,
        decoders: trainer.decoders,
        classifier: trainer.classifier,
        store,
        dummy_attrs: trainer.dummy_attrs,
        log,
        best_epoch,
    })
}
