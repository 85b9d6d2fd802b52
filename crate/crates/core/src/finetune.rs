//! Downstream heads and fine-tuning loops: hyperedge-mapped node
//! classification and link prediction, from pretrained or random weights.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autograd::{Aggregator, Graph, ParamId, ParamStore, Var};
use crate::checkpoint::Checkpoint;
use crate::encoder::{BaseModel, EncoderSpec, Embeddings, NodeFeatures};
use crate::error::{Error, Result};
use crate::expansion::MessageGraph;
use crate::hypergraph::{HyperedgeId, Hypergraph, NodeId, NodeTypeId};
use crate::metrics;
use crate::nn::{Dropout, Linear};
use crate::optim::{Adam, AdamConfig};
use crate::pretrain::hyperedge_representations;
use crate::rng::{stream, Rng};

/// Member sets whose aggregate gives `z_u` for each node in `nodes`: the
/// union of all hyperedges containing `u`, with or without `u` itself.
/// Nodes in no hyperedge map to `{u}`.
pub fn final_embedding_sets(h: &Hypergraph, nodes: &[NodeId], include_self: bool) -> Result<Vec<Vec<NodeId>>> {
    nodes
        .iter()
        .map(|&u| {
            let mut set = BTreeSet::new();
            for &f in h.incident_hyperedges(u)? {
                set.extend(h.hyperedge(f)?.members.iter().copied());
            }
            if !include_self {
                set.remove(&u);
            }
            if set.is_empty() {
                set.insert(u);
            }
            Ok(set.into_iter().collect())
        })
        .collect()
}

/// `z_u` for every node in `nodes`, stacked as rows.
pub fn final_node_embeddings(
    g: &mut Graph,
    emb: &Embeddings,
    h: &Hypergraph,
    nodes: &[NodeId],
    agg: Aggregator,
    include_self: bool,
) -> Result<Var> {
    let sets = final_embedding_sets(h, nodes, include_self)?;
    hyperedge_representations(g, emb, &sets, agg)
}

/// Fraction of the labeled training examples that fine-tuning may use.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabelBudget {
    pub fraction: f64,
    pub seed: u64,
}

impl LabelBudget {
    pub fn new(fraction: f64, seed: u64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::Config(format!("label budget {fraction} outside (0, 1]")));
        }
        Ok(Self { fraction, seed })
    }

    fn take(&self, n: usize) -> usize {
        ((self.fraction * n as f64).round() as usize).clamp(1, n)
    }

    /// Stratified selection: `max(1, round(fraction * n_c))` per class.
    /// Output is ascending by node id.
    pub fn select_stratified(&self, examples: &[(NodeId, usize)]) -> Vec<(NodeId, usize)> {
        let mut rng = stream(self.seed, "label-budget");
        let mut by_class: BTreeMap<usize, Vec<NodeId>> = BTreeMap::new();
        for &(v, y) in examples {
            by_class.entry(y).or_default().push(v);
        }
        let mut out = Vec::new();
        for (y, mut vs) in by_class {
            vs.sort();
            vs.shuffle(&mut rng);
            let k = self.take(vs.len());
            out.extend(vs.into_iter().take(k).map(|v| (v, y)));
        }
        out.sort();
        out
    }

    /// Uniform selection of `max(1, round(fraction * n))` items, in input order.
    pub fn select_uniform<T: Clone>(&self, items: &[T]) -> Vec<T> {
        if items.is_empty() {
            return Vec::new();
        }
        let mut rng = stream(self.seed, "label-budget");
        let mut idx: Vec<usize> = (0..items.len()).collect();
        idx.shuffle(&mut rng);
        let mut keep: Vec<usize> = idx.into_iter().take(self.take(items.len())).collect();
        keep.sort();
        keep.into_iter().map(|i| items[i].clone()).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FinetuneConfig {
    pub lr: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub freeze_base: bool,
    pub include_self: bool,
    pub aggregator: Aggregator,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            lr: 5e-3,
            max_epochs: 100,
            patience: 10,
            freeze_base: false,
            include_self: true,
            aggregator: Aggregator::Mean,
            seed: 0,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Where the BASE weights come from.
#[derive(Clone, Debug)]
pub enum Init {
    Random,
    Pretrained(Checkpoint),
}

impl Init {
    pub fn name(&self) -> &'static str {
        match self {
            Init::Random => "random",
            Init::Pretrained(_) => "pretrained",
        }
    }
}

/// A BASE model with its own parameter store.
pub struct Backbone {
    pub model: BaseModel,
    pub store: ParamStore,
}

impl Backbone {
    /// Random weights use the `init` stream of `seed`, exactly as a fresh
    /// pretraining run would. Pretrained weights require every BASE
    /// parameter to be present in the checkpoint.
    pub fn build(init: &Init, random_spec: &EncoderSpec, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        let mut rng = stream(seed, "init");
        match init {
            Init::Random => {
                let model = BaseModel::new(random_spec.clone(), &mut store, &mut rng)?;
                Ok(Self { model, store })
            }
            Init::Pretrained(ckpt) => {
                let spec = EncoderSpec::from_descriptor(&ckpt.descriptor)?;
                let model = BaseModel::new(spec, &mut store, &mut rng)?;
                let saved = ckpt.to_store()?;
                let copied = store.load_matching(&saved)?;
                if copied != store.len() || copied != saved.len() {
                    return Err(Error::Checkpoint(format!(
                        "checkpoint holds {} tensors, model needs {}, {} matched",
                        saved.len(),
                        store.len(),
                        copied
                    )));
                }
                Ok(Self { model, store })
            }
        }
    }
}

/// Final metrics of one fine-tuning run.
#[derive(Clone, Debug, PartialEq)]
pub struct FinetuneOutcome {
    pub metrics: Vec<(String, f64)>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub train_examples: usize,
    /// Validation metric per epoch.
    pub history: Vec<f64>,
}

impl FinetuneOutcome {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }
}

/// One line of a results file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub task: String,
    pub encoder: String,
    pub init: String,
    pub budget: f64,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

/// Shared early-stopping loop. `step` runs one training update; `score`
/// returns the validation metric (higher is better) with dropout off.
fn train_loop(
    cfg: &FinetuneConfig,
    store: &mut ParamStore,
    trainable: Vec<ParamId>,
    mut step: impl FnMut(&mut ParamStore, usize) -> Result<()>,
    mut score: impl FnMut(&ParamStore) -> Result<f64>,
) -> Result<(usize, usize, Vec<f64>, ParamStore)> {
    let mut adam = Adam::for_params(AdamConfig::with_lr(cfg.lr), store, trainable);
    let mut best = (f64::NEG_INFINITY, 0usize, store.clone());
    let mut history = Vec::new();
    let mut since_best = 0;
    let mut epochs_run = 0;
    for epoch in 1..=cfg.max_epochs {
        store.zero_grad();
        step(store, epoch)?;
        adam.step(store);
        let s = score(store)?;
        history.push(s);
        epochs_run = epoch;
        if s > best.0 {
            best = (s, epoch, store.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok((best.1, epochs_run, history, best.2))
}

fn trainable_params(backbone_params: Vec<ParamId>, head: &Linear, freeze_base: bool) -> Vec<ParamId> {
    let mut ids = if freeze_base { Vec::new() } else { backbone_params };
    ids.extend(head.params());
    ids
}

/// Labeled nodes per split for node classification.
#[derive(Clone, Debug, Default)]
pub struct NodeLabels {
    pub train: Vec<(NodeId, usize)>,
    pub valid: Vec<(NodeId, usize)>,
    pub test: Vec<(NodeId, usize)>,
    pub num_classes: usize,
}

/// Trains BASE plus a linear head with cross-entropy on `z_u` over the
/// budgeted training labels; `graph` is the message graph encoded each
/// epoch. Reports test accuracy and F1-macro at the best validation epoch.
pub fn finetune_node_classification(
    h: &Hypergraph,
    graph: &MessageGraph,
    mut backbone: Backbone,
    labels: &NodeLabels,
    budget: LabelBudget,
    cfg: &FinetuneConfig,
) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    let c = labels.num_classes;
    if c < 2 {
        return Err(Error::Config(format!("node classification needs at least 2 classes, got {c}")));
    }
    if labels.valid.is_empty() || labels.test.is_empty() {
        return Err(Error::Config("node classification needs validation and test labels".into()));
    }
    let train = budget.select_stratified(&labels.train);
    if train.is_empty() {
        return Err(Error::Config("no labeled training nodes".into()));
    }
    let present: BTreeSet<usize> = train.iter().map(|&(_, y)| y).collect();
    for k in 0..c {
        if !present.contains(&k) {
            log::warn!("class {k} has no training example under budget {}", budget.fraction);
        }
    }
    let mut head_rng = stream(cfg.seed, "head");
    let head = Linear::new(&mut backbone.store, "head.cls", backbone.model.hidden_dim(), c, true, &mut head_rng)?;
    let trainable = trainable_params(backbone.model.params(), &head, cfg.freeze_base);
    let model = &backbone.model;
    let spec_dropout = model.spec.dropout;
    let mut dropout_rng = stream(cfg.seed, "finetune-dropout");

    let forward = |g: &mut Graph, store: &ParamStore, nodes: &[NodeId], dropout: &mut Dropout<'_>| -> Result<Var> {
        let emb = model.encode(g, store, graph, NodeFeatures::new(h), dropout)?;
        let z = final_node_embeddings(g, &emb, h, nodes, cfg.aggregator, cfg.include_self)?;
        head.forward(g, store, z)
    };
    let predict = |store: &ParamStore, examples: &[(NodeId, usize)]| -> Result<Vec<usize>> {
        let nodes: Vec<NodeId> = examples.iter().map(|&(v, _)| v).collect();
        let mut g = Graph::new();
        let logits = forward(&mut g, store, &nodes, &mut Dropout::off())?;
        let t = g.value(logits);
        Ok((0..t.rows())
            .map(|i| {
                let row = t.row(i);
                (0..row.len()).fold(0, |best, j| if row[j] > row[best] { j } else { best })
            })
            .collect())
    };
    let train_nodes: Vec<NodeId> = train.iter().map(|&(v, _)| v).collect();
    let train_y: Vec<usize> = train.iter().map(|&(_, y)| y).collect();
    let valid_y: Vec<usize> = labels.valid.iter().map(|&(_, y)| y).collect();

    let mut store = std::mem::take(&mut backbone.store);
    let (best_epoch, epochs_run, history, best_store) = train_loop(
        cfg,
        &mut store,
        trainable,
        |store, _| {
            let mut g = Graph::new();
            let mut dropout = Dropout::train(spec_dropout, &mut dropout_rng);
            let logits = forward(&mut g, store, &train_nodes, &mut dropout)?;
            let loss = g.softmax_cross_entropy(logits, train_y.clone())?;
            g.backward(loss, store)
        },
        |store| metrics::accuracy(&predict(store, &labels.valid)?, &valid_y),
    )?;
    let pred = predict(&best_store, &labels.test)?;
    let truth: Vec<usize> = labels.test.iter().map(|&(_, y)| y).collect();
    Ok(FinetuneOutcome {
        metrics: vec![
            ("accuracy".into(), metrics::accuracy(&pred, &truth)?),
            ("f1_macro".into(), metrics::f1_macro(&pred, &truth, c)?),
        ],
        best_epoch,
        epochs_run,
        train_examples: train.len(),
        history,
    })
}

/// Link prediction between an anchor type and a target end-node type.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinkTask {
    pub anchor_type: NodeTypeId,
    pub target_type: NodeTypeId,
}

/// A positive hyperedge with the end-node pair `(anchor, target)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct LinkExample {
    pub hyperedge: HyperedgeId,
    pub anchor: NodeId,
    pub target: NodeId,
}

impl LinkTask {
    pub fn new(h: &Hypergraph, anchor: &str, target: &str) -> Result<Self> {
        let find = |n: &str| {
            h.node_type_by_name(n)
                .map(|t| t.id)
                .ok_or_else(|| Error::Config(format!("unknown node type {n:?}")))
        };
        let task = Self {
            anchor_type: find(anchor)?,
            target_type: find(target)?,
        };
        if task.anchor_type == task.target_type {
            return Err(Error::Config("link task end types must differ".into()));
        }
        Ok(task)
    }

    /// One example per (anchor, target) member pair of each hyperedge.
    pub fn examples(&self, h: &Hypergraph, hyperedges: &[HyperedgeId]) -> Result<Vec<LinkExample>> {
        let mut out = Vec::new();
        for &f in hyperedges {
            let e = h.hyperedge(f)?;
            let of = |t: NodeTypeId| -> Result<Vec<NodeId>> {
                let mut v = Vec::new();
                for &m in &e.members {
                    if h.node_type_of(m)? == t {
                        v.push(m);
                    }
                }
                Ok(v)
            };
            for a in of(self.anchor_type)? {
                for t in of(self.target_type)? {
                    out.push(LinkExample {
                        hyperedge: f,
                        anchor: a,
                        target: t,
                    });
                }
            }
        }
        Ok(out)
    }

    /// The positive with `target` replaced by a same-type node outside the
    /// hyperedge; `None` when no candidate exists.
    pub fn negative(
        &self,
        h: &Hypergraph,
        ex: &LinkExample,
        candidates: &[NodeId],
        rng: &mut Rng,
    ) -> Result<Option<Vec<NodeId>>> {
        let members = &h.hyperedge(ex.hyperedge)?.members;
        let outside: Vec<NodeId> = candidates.iter().copied().filter(|v| !members.contains(v)).collect();
        if outside.is_empty() {
            return Ok(None);
        }
        let r = outside[rng.random_range(0..outside.len())];
        let mut neg: Vec<NodeId> = members.iter().copied().filter(|&m| m != ex.target).collect();
        neg.push(r);
        neg.sort();
        Ok(Some(neg))
    }
}

/// Examples per split for link prediction.
#[derive(Clone, Debug, Default)]
pub struct LinkSplits {
    pub train: Vec<LinkExample>,
    pub valid: Vec<LinkExample>,
    pub test: Vec<LinkExample>,
}

/// Trains BASE plus a linear scorer on hyperedge representations with
/// binary cross-entropy, one negative per positive (fresh each epoch for
/// training, fixed for evaluation). Reports test AUC.
pub fn finetune_link_prediction(
    h: &Hypergraph,
    graph: &MessageGraph,
    mut backbone: Backbone,
    task: LinkTask,
    splits: &LinkSplits,
    budget: LabelBudget,
    cfg: &FinetuneConfig,
) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    let candidates = h.nodes_of_type(task.target_type);
    let train = budget.select_uniform(&splits.train);
    if train.is_empty() || splits.valid.is_empty() || splits.test.is_empty() {
        return Err(Error::Config("link prediction needs train, validation and test examples".into()));
    }
    let fixed = |examples: &[LinkExample], purpose: &str| -> Result<Vec<(Vec<NodeId>, Vec<NodeId>)>> {
        let mut rng = stream(cfg.seed, purpose);
        let mut out = Vec::new();
        for ex in examples {
            match task.negative(h, ex, &candidates, &mut rng)? {
                Some(neg) => out.push((h.hyperedge(ex.hyperedge)?.members.clone(), neg)),
                None => log::warn!("no replacement for node {} in hyperedge {}", ex.target, ex.hyperedge),
            }
        }
        Ok(out)
    };
    let valid = fixed(&splits.valid, "link-valid")?;
    let test = fixed(&splits.test, "link-test")?;
    if valid.is_empty() || test.is_empty() {
        return Err(Error::Sampling("no evaluable link example".into()));
    }

    let mut head_rng = stream(cfg.seed, "head");
    let head = Linear::new(&mut backbone.store, "head.link", backbone.model.hidden_dim(), 1, true, &mut head_rng)?;
    let trainable = trainable_params(backbone.model.params(), &head, cfg.freeze_base);
    let model = &backbone.model;
    let spec_dropout = model.spec.dropout;
    let mut dropout_rng = stream(cfg.seed, "finetune-dropout");
    let mut negative_rng = stream(cfg.seed, "link-train");

    let forward = |g: &mut Graph, store: &ParamStore, sets: &[Vec<NodeId>], dropout: &mut Dropout<'_>| -> Result<Var> {
        let emb = model.encode(g, store, graph, NodeFeatures::new(h), dropout)?;
        let eta = hyperedge_representations(g, &emb, sets, cfg.aggregator)?;
        head.forward(g, store, eta)
    };
    let evaluate = |store: &ParamStore, pairs: &[(Vec<NodeId>, Vec<NodeId>)]| -> Result<f64> {
        let mut sets: Vec<Vec<NodeId>> = pairs.iter().map(|(p, _)| p.clone()).collect();
        sets.extend(pairs.iter().map(|(_, n)| n.clone()));
        let labels: Vec<bool> = (0..sets.len()).map(|i| i < pairs.len()).collect();
        let mut g = Graph::new();
        let logits = forward(&mut g, store, &sets, &mut Dropout::off())?;
        metrics::auc(g.value(logits).data(), &labels)
    };

    let mut store = std::mem::take(&mut backbone.store);
    let (best_epoch, epochs_run, history, best_store) = train_loop(
        cfg,
        &mut store,
        trainable,
        |store, _| {
            let mut pos = Vec::new();
            let mut neg = Vec::new();
            for ex in &train {
                if let Some(n) = task.negative(h, ex, &candidates, &mut negative_rng)? {
                    pos.push(h.hyperedge(ex.hyperedge)?.members.clone());
                    neg.push(n);
                }
            }
            if pos.is_empty() {
                return Err(Error::Sampling("no trainable link example".into()));
            }
            let mut labels = vec![1.0; pos.len()];
            labels.extend(std::iter::repeat_n(0.0, neg.len()));
            pos.extend(neg);
            let mut g = Graph::new();
            let mut dropout = Dropout::train(spec_dropout, &mut dropout_rng);
            let logits = forward(&mut g, store, &pos, &mut dropout)?;
            let loss = g.bce_with_logits(logits, labels)?;
            g.backward(loss, store)
        },
        |store| evaluate(store, &valid),
    )?;
    Ok(FinetuneOutcome {
        metrics: vec![("auc".into(), evaluate(&best_store, &test)?)],
        best_epoch,
        epochs_run,
        train_examples: train.len(),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::fixtures::paper_authors;

    #[test]
    fn z_sets_follow_incidence() {
        let h = paper_authors();
        let sets = final_embedding_sets(&h, &[NodeId(1), NodeId(3)], true).unwrap();
        assert_eq!(sets[0], vec![NodeId(0), NodeId(1), NodeId(2)]);
        assert_eq!(sets[1], vec![NodeId(3)]);
        let sets = final_embedding_sets(&h, &[NodeId(1)], false).unwrap();
        assert_eq!(sets[0], vec![NodeId(0), NodeId(2)]);
    }

    #[test]
    fn budget_rules() {
        assert!(LabelBudget::new(0.0, 1).is_err());
        assert!(LabelBudget::new(1.5, 1).is_err());
        let examples: Vec<(NodeId, usize)> = (0..40).map(|i| (NodeId(i), usize::from(i >= 30))).collect();
        let b = LabelBudget::new(0.05, 9).unwrap();
        let picked = b.select_stratified(&examples);
        // 0.05 * 30 rounds to 2; 0.05 * 10 rounds to 1 (0.5 rounds away from zero).
        assert_eq!(picked.iter().filter(|&&(_, y)| y == 0).count(), 2);
        assert_eq!(picked.iter().filter(|&&(_, y)| y == 1).count(), 1);
        assert_eq!(picked, b.select_stratified(&examples));
        let all = LabelBudget::new(1.0, 3).unwrap().select_stratified(&examples);
        assert_eq!(all, examples);
        assert_eq!(LabelBudget::new(0.5, 3).unwrap().select_uniform(&[1, 2, 3, 4]).len(), 2);
    }

    #[test]
    fn link_negative_differs_in_target_only() {
        let h = paper_authors();
        let task = LinkTask::new(&h, "P", "A").unwrap();
        let ex = task.examples(&h, &[HyperedgeId(1)]).unwrap();
        assert_eq!(ex.len(), 2);
        let cands = h.nodes_of_type(1);
        let neg = task.negative(&h, &ex[0], &cands, &mut stream(0, "t")).unwrap().unwrap();
        assert_eq!(neg, vec![NodeId(0), NodeId(2), NodeId(3)]);
    }
}
