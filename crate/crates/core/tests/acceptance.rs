//! Acceptance suite. Runs as a plain binary so that every criterion prints
//! exactly one PASS/FAIL line; pass criterion numbers as arguments to run a
//! subset.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::TestRunner;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use sphh::autograd::{Aggregator, Graph, ParamId, ParamStore, Var};
use sphh::data::{generate_synthetic, Dataset, Split, SyntheticSpec};
use sphh::encoder::{BaseModel, EncoderStyle, NodeFeatures};
use sphh::expansion::{clique_expand, AuxiliaryGraph, Batch, EdgeType, MessageGraph, NodeRef};
use sphh::finetune::*;
use sphh::hypergraph::{HyperedgeId, Hypergraph, NodeId};
use sphh::metrics;
use sphh::nn::{Dropout, Linear};
use sphh::pretrain::*;
use sphh::rng::{stream, Rng};
use sphh::tensor::Tensor;

type Outcome = Result<String, String>;

fn main() {
    let only: BTreeSet<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(&str, Duration, fn() -> Outcome); 8] = [
        ("gradient oracle", Duration::from_secs(60), gradient_oracle),
        ("expansion oracle", Duration::from_secs(10), expansion_oracle),
        ("negative sampling invariants", Duration::from_secs(30), negative_sampling),
        ("dummy leakage", Duration::from_secs(10), leakage),
        ("pretraining convergence", Duration::from_secs(600), convergence),
        ("transfer gain", Duration::from_secs(1800), transfer_gain),
        ("metric oracles", Duration::from_secs(5), metric_oracles),
        ("pipeline determinism", Duration::from_secs(900), determinism),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let result = run();
        let took = start.elapsed();
        let result = match result {
            Ok(detail) if took > *budget => Err(format!("{detail}; exceeded {}s", budget.as_secs())),
            r => r,
        };
        match result {
            Ok(detail) => println!("criterion {n} {name}: PASS ({detail}; {:.1}s)", took.as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} {name}: FAIL ({detail}; {:.1}s)", took.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

fn sample<T: std::fmt::Debug>(strategy: impl Strategy<Value = T>, runner: &mut TestRunner) -> T {
    strategy.new_tree(runner).unwrap().current()
}

/// Random hypergraph in which every declared type has at least one node and
/// at least one hyperedge exists.
fn usable_hypergraph(runner: &mut TestRunner, nodes: usize, types: usize, edges: usize, dim: usize) -> Hypergraph {
    loop {
        let h = sample(arb_hypergraph(nodes, types, edges, dim), runner);
        let all: BTreeSet<NodeId> = h.nodes().iter().map(|n| n.id).collect();
        if h.num_hyperedges() > 0 && dummy_attributes(&h, &all).is_ok() {
            return h;
        }
    }
}

// ---------------------------------------------------------------- 1

const FD_STEP: f64 = 1e-5;
const FD_TOLERANCE: f64 = 1e-4;
const INSTANCES: usize = 20;
/// Coordinates checked per parameter tensor.
const COORDS: usize = 4;

fn randomize(store: &mut ParamStore, rng: &mut Rng) {
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        for x in store.value_mut(id).data_mut() {
            *x = rng.random_range(-0.8..0.8);
        }
    }
}

#[derive(Default)]
struct GradCheck {
    error: f64,
    checked: usize,
    /// Coordinates within one step of a ReLU or max kink.
    skipped: usize,
}

/// Relative error `|a - n| / (|a| + |n|)` between the analytic gradient and
/// central differences, over sampled coordinates of every parameter. A
/// coordinate whose central difference moves when the step is halved sits
/// next to a kink and is skipped.
fn gradcheck<S>(
    state: &mut S,
    store: fn(&mut S) -> &mut ParamStore,
    eval: impl Fn(&S) -> (Graph, Var),
    rng: &mut Rng,
) -> GradCheck {
    let (mut g, loss) = eval(state);
    store(state).zero_grad();
    g.backward(loss, store(state)).unwrap();
    let ids: Vec<ParamId> = store(state).ids().collect();
    let (mut diff, mut scale) = (0.0, 0.0);
    let mut out = GradCheck::default();
    for id in ids {
        let len = store(state).value(id).len();
        let mut coords: Vec<usize> = (0..len).collect();
        coords.shuffle(rng);
        for &k in coords.iter().take(COORDS) {
            let analytic = store(state).grad(id).data()[k];
            let orig = store(state).value(id).data()[k];
            let mut central = |step: f64| {
                let mut at = |x: f64| {
                    store(state).value_mut(id).data_mut()[k] = x;
                    let (g, l) = eval(state);
                    g.value(l).item()
                };
                let d = (at(orig + step) - at(orig - step)) / (2.0 * step);
                store(state).value_mut(id).data_mut()[k] = orig;
                d
            };
            let numeric = central(FD_STEP);
            let half = central(FD_STEP / 2.0);
            if (numeric - half).abs() > 1e-6 * (1.0 + numeric.abs()) {
                out.skipped += 1;
                continue;
            }
            out.checked += 1;
            diff += (analytic - numeric).powi(2);
            scale += analytic * analytic + numeric * numeric;
        }
    }
    out.error = if scale == 0.0 { 0.0 } else { diff.sqrt() / scale.sqrt() };
    out
}

struct EncoderCase {
    h: Hypergraph,
    model: BaseModel,
    store: ParamStore,
    graph: MessageGraph,
    table: DummyAttributeTable,
    weights: Tensor,
}

fn encoder_case(runner: &mut TestRunner, style: EncoderStyle, agg: Aggregator, strict: bool, rng: &mut Rng) -> EncoderCase {
    let h = usable_hypergraph(runner, 8, 3, 5, 3);
    let all: BTreeSet<NodeId> = h.nodes().iter().map(|n| n.id).collect();
    let table = dummy_attributes(&h, &all).unwrap();
    let g = clique_expand(&h);
    let aux = if strict { AuxiliaryGraph::build_strict(&g, &all, 2) } else { AuxiliaryGraph::build(&g, &all) }.unwrap();
    let mut store = ParamStore::new();
    let model = BaseModel::new(spec_for(&h, style, 2, 4, agg), &mut store, &mut stream(rng.random(), "init")).unwrap();
    randomize(&mut store, rng);
    let graph = aux.message_graph();
    let rows = graph.slots.len();
    let weights = Tensor::matrix(rows, 4, (0..rows * 4).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    EncoderCase {
        graph,
        h,
        model,
        store,
        table,
        weights,
    }
}

fn encoder_loss(c: &EncoderCase) -> (Graph, Var) {
    let mut g = Graph::new();
    let emb = c
        .model
        .encode(&mut g, &c.store, &c.graph, NodeFeatures::with_dummies(&c.h, &c.table), &mut Dropout::off())
        .unwrap();
    let w = g.constant(c.weights.clone()).unwrap();
    let prod = g.mul(emb.matrix, w).unwrap();
    let loss = g.sum(prod).unwrap();
    (g, loss)
}

struct PretrainCase {
    trainer: Pretrainer<'static>,
    batch: Batch,
    positives: Vec<HyperedgeId>,
    negatives: Vec<NegativeHyperedge>,
    part: LossPart,
}

#[derive(Clone, Copy)]
enum LossPart {
    Construction,
    Prediction,
    Total,
}

fn tiny_synthetic(seed: u64, dim: usize) -> Dataset {
    let text = format!(
        "seed = {seed}\nnode_types = P:8,A:8,F:4\nanchor_type = P\nattr_dim = {dim}\ncommunities = 2\n\
         hyperedges = 8\nmembers = A:1-2,F:1\nnoise = 0.2\n"
    );
    generate_synthetic(&SyntheticSpec::parse(&text).unwrap()).unwrap().dataset
}

fn pretrain_case(i: usize, part: LossPart, dist: Distance, beta: f64, rng: &mut Rng) -> PretrainCase {
    let h: &'static Hypergraph = Box::leak(Box::new(tiny_synthetic(i as u64, 3).hypergraph));
    let nodes: BTreeSet<NodeId> = h.nodes().iter().map(|n| n.id).collect();
    let cfg = PretrainConfig {
        style: STYLES[i % 3],
        aggregator: AGGREGATORS[(i / 3) % 3],
        layers: 1 + i % 2,
        hidden_dim: 4,
        mlp_hidden: 3,
        dropout: 0.0,
        dist,
        weights: LossWeights::new(0.5, beta).unwrap(),
        seed: i as u64,
        ..PretrainConfig::default()
    };
    let mut trainer = Pretrainer::new(h, &nodes, cfg).unwrap();
    randomize(&mut trainer.store, rng);
    let g = clique_expand(h);
    let batch = Batch::from_hyperedges(h, &g, h.hyperedges().iter().map(|f| f.id).collect()).unwrap();
    let (positives, negatives) = trainer.negatives(&batch, rng).unwrap();
    PretrainCase {
        trainer,
        batch,
        positives,
        negatives,
        part,
    }
}

fn pretrain_loss(c: &PretrainCase) -> (Graph, Var) {
    let pass = c.trainer.forward(&c.batch, &c.positives, &c.negatives, &mut Dropout::off()).unwrap();
    let v = match c.part {
        LossPart::Construction => pass.l_tc,
        LossPart::Prediction => pass.l_tp,
        LossPart::Total => pass.total,
    };
    (pass.graph, v)
}

struct HeadCase {
    h: Hypergraph,
    model: BaseModel,
    head: Linear,
    store: ParamStore,
    graph: MessageGraph,
    nodes: Vec<NodeId>,
    labels: Vec<usize>,
    agg: Aggregator,
    include_self: bool,
}

fn head_case(i: usize, rng: &mut Rng) -> HeadCase {
    let d = tiny_synthetic(100 + i as u64, 3);
    let h = d.hypergraph;
    let mut store = ParamStore::new();
    let mut init = stream(i as u64, "init");
    let model = BaseModel::new(spec_for(&h, STYLES[i % 3], 2, 4, Aggregator::Mean), &mut store, &mut init).unwrap();
    let head = Linear::new(&mut store, "head.cls", 4, 3, true, &mut init).unwrap();
    randomize(&mut store, rng);
    let nodes: Vec<NodeId> = h.nodes().iter().map(|n| n.id).collect();
    let labels = nodes.iter().map(|_| rng.random_range(0..3)).collect();
    HeadCase {
        graph: clique_expand(&h).message_graph(),
        h,
        model,
        head,
        store,
        nodes,
        labels,
        agg: AGGREGATORS[i % 3],
        include_self: i % 2 == 0,
    }
}

fn head_loss(c: &HeadCase) -> (Graph, Var) {
    let mut g = Graph::new();
    let emb = c.model.encode(&mut g, &c.store, &c.graph, NodeFeatures::new(&c.h), &mut Dropout::off()).unwrap();
    let z = final_node_embeddings(&mut g, &emb, &c.h, &c.nodes, c.agg, c.include_self).unwrap();
    let logits = c.head.forward(&mut g, &c.store, z).unwrap();
    let loss = g.softmax_cross_entropy(logits, c.labels.clone()).unwrap();
    (g, loss)
}

fn gradient_oracle() -> Outcome {
    let mut runner = TestRunner::deterministic();
    let mut rng = stream(0, "gradcheck");
    let mut worst: BTreeMap<String, f64> = BTreeMap::new();
    let (mut checked, mut skipped) = (0, 0);
    let mut record = |case: String, r: GradCheck| {
        let w = worst.entry(case).or_insert(0.0);
        *w = w.max(r.error);
        checked += r.checked;
        skipped += r.skipped;
    };
    for style in STYLES {
        for agg in AGGREGATORS {
            for i in 0..INSTANCES {
                let mut c = encoder_case(&mut runner, style, agg, i % 2 == 1, &mut rng);
                let err = gradcheck(&mut c, |c| &mut c.store, encoder_loss, &mut rng);
                record(format!("{}/{}", style.name(), agg.name()), err);
            }
        }
    }
    let losses: [(&str, LossPart, Distance, Option<f64>); 5] = [
        ("T_c l2", LossPart::Construction, Distance::SquaredL2, Some(1.0)),
        ("T_c cosine", LossPart::Construction, Distance::Cosine, Some(1.0)),
        ("T_p bce", LossPart::Prediction, Distance::SquaredL2, Some(0.0)),
        ("total l2", LossPart::Total, Distance::SquaredL2, None),
        ("total cosine", LossPart::Total, Distance::Cosine, None),
    ];
    for (name, part, dist, beta) in losses {
        for i in 0..INSTANCES {
            let beta = beta.unwrap_or_else(|| rng.random_range(0.05..0.95));
            let mut c = pretrain_case(i, part, dist, beta, &mut rng);
            let err = gradcheck(&mut c, |c| &mut c.trainer.store, pretrain_loss, &mut rng);
            record(name.to_string(), err);
        }
    }
    for i in 0..INSTANCES {
        let mut c = head_case(i, &mut rng);
        let err = gradcheck(&mut c, |c| &mut c.store, head_loss, &mut rng);
        record("finetune cross-entropy".into(), err);
    }
    let (case, err) = worst.iter().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let detail = format!(
        "{} cases x {INSTANCES} instances, worst {err:.2e} in {case}, {checked} coordinates, {skipped} at kinks",
        worst.len()
    );
    if *err < FD_TOLERANCE && skipped * 20 < checked {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- 2

fn expansion_oracle() -> Outcome {
    let mut runner = TestRunner::deterministic();
    for n in 0..200 {
        let h = sample(arb_hypergraph(15, 3, 10, 1), &mut runner);
        let g = clique_expand(&h);
        let mut expected: BTreeSet<(EdgeType, NodeId, NodeId)> = BTreeSet::new();
        let mut origins: BTreeMap<(NodeId, NodeId), Vec<HyperedgeId>> = BTreeMap::new();
        for f in h.hyperedges() {
            for &u in &f.members {
                for &v in &f.members {
                    let (tu, tv) = (h.node_type_of(u).unwrap(), h.node_type_of(v).unwrap());
                    if tu != tv {
                        expected.insert((EdgeType::new(tu, tv), u, v));
                        origins.entry((u, v)).or_default().push(f.id);
                    }
                }
            }
        }
        let got: BTreeSet<(EdgeType, NodeId, NodeId)> =
            g.edges().iter().flat_map(|(&t, pairs)| pairs.iter().map(move |&(u, v)| (t, u, v))).collect();
        if got != expected {
            return Err(format!("hypergraph {n}: edge sets differ"));
        }
        let nodes: BTreeSet<NodeId> = g.nodes().collect();
        if nodes != h.nodes().iter().map(|x| x.id).collect() {
            return Err(format!("hypergraph {n}: node sets differ"));
        }
        for ((u, v), mut fs) in origins {
            fs.sort();
            if g.origins(u, v) != fs.as_slice() {
                return Err(format!("hypergraph {n}: origins of ({u}, {v}) differ"));
            }
        }
    }
    Ok("200 hypergraphs, exact edge-set equality".into())
}

// ---------------------------------------------------------------- 3

const ALPHAS: [f64; 4] = [0.1, 0.2, 0.5, 1.0];

fn check_negative(f: &sphh::hypergraph::Hyperedge, n: &NegativeHyperedge, h: &Hypergraph, alpha: f64) -> Result<(), String> {
    let pos: BTreeSet<NodeId> = f.members.iter().copied().collect();
    let neg: BTreeSet<NodeId> = n.members.iter().copied().collect();
    let slice = f.members.iter().filter(|&&m| h.node_type_of(m).unwrap() == n.perturbed_type).count();
    // Short candidate pools cap the replacement count.
    let candidates = h.nodes_of_type(n.perturbed_type).len() - slice;
    let ok = neg.len() == pos.len()
        && n.members.len() == f.members.len()
        && neg != pos
        && n.replaced.len() == replacement_count(alpha, slice).min(candidates)
        && n.inserted.len() == n.replaced.len()
        && n.inserted.iter().all(|v| !pos.contains(v) && h.node_type_of(*v).unwrap() == n.perturbed_type)
        && n.replaced.iter().all(|v| pos.contains(v) && !neg.contains(v) && h.node_type_of(*v).unwrap() == n.perturbed_type)
        && neg == &(&pos - &n.replaced.iter().copied().collect()) | &n.inserted.iter().copied().collect();
    if ok {
        Ok(())
    } else {
        Err(format!("illegal negative {n:?} for {f:?} at alpha {alpha}"))
    }
}

fn negative_sampling() -> Outcome {
    // Uniformity: one hyperedge, full per-type pools.
    let h = Hypergraph::new(
        types(&[("P", 1), ("A", 1)]),
        (0..10).map(|i| node(i, 0, vec![0.0])).chain((10..30).map(|i| node(i, 1, vec![0.0]))).collect(),
        vec![edge(0, &[0, 10, 11, 12, 13])],
    )
    .unwrap();
    let f = &h.hyperedges()[0];
    let mut rng = stream(0, "negative-acceptance");
    let mut counts: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut per_type = [0usize; 2];
    for i in 0..10_000 {
        let alpha = ALPHAS[i % 4];
        let n = negative_sample(f, &h, alpha, &mut rng).map_err(|e| e.to_string())?;
        check_negative(f, &n, &h, alpha)?;
        for &v in &n.inserted {
            *counts.entry(v).or_default() += 1;
            per_type[n.perturbed_type] += 1;
        }
    }
    let mut worst: f64 = 0.0;
    for v in h.nodes().iter().map(|x| x.id).filter(|v| !f.members.contains(v)) {
        let t = h.node_type_of(v).unwrap();
        let candidates = h.nodes_of_type(t).len() - f.members.iter().filter(|&&m| h.node_type_of(m).unwrap() == t).count();
        let expected = per_type[t] as f64 / candidates as f64;
        let got = *counts.get(&v).unwrap_or(&0) as f64;
        worst = worst.max((got - expected).abs() / expected);
    }
    if worst > 0.2 {
        return Err(format!("replacement frequency deviates {:.1}% from uniform", 100.0 * worst));
    }
    // Invariants on random hypergraphs.
    let mut runner = TestRunner::deterministic();
    let mut checked = 0;
    while checked < 10_000 {
        let h = sample(arb_hypergraph(15, 3, 8, 1), &mut runner);
        for f in h.hyperedges() {
            let alpha = ALPHAS[checked % 4];
            match negative_sample(f, &h, alpha, &mut rng) {
                Ok(n) => {
                    check_negative(f, &n, &h, alpha)?;
                    checked += 1;
                }
                Err(sphh::Error::Sampling(_)) => {}
                Err(e) => return Err(e.to_string()),
            }
        }
    }
    Ok(format!("10000 + {checked} samples legal, max frequency deviation {:.1}%", 100.0 * worst))
}

// ---------------------------------------------------------------- 4

fn leakage() -> Outcome {
    let mut runner = TestRunner::deterministic();
    let mut rng = stream(0, "leakage");
    let mut probes = 0;
    for (layers, strict) in [(1, false), (2, true)] {
        for i in 0..30 {
            let h = usable_hypergraph(&mut runner, 10, 3, 6, 2);
            let all: BTreeSet<NodeId> = h.nodes().iter().map(|n| n.id).collect();
            // Dummy inputs are fixed type means computed once, as in training.
            let table = dummy_attributes(&h, &all).unwrap();
            let g = clique_expand(&h);
            let aux = if strict { AuxiliaryGraph::build_strict(&g, &all, layers) } else { AuxiliaryGraph::build(&g, &all) }
                .unwrap()
                .message_graph();
            let style = STYLES[i % 3];
            let (model, store) = model_for(&h, style, layers, 4, AGGREGATORS[(i / 3) % 3], i as u64);
            let dummies = |h: &Hypergraph| {
                let mut gr = Graph::new();
                let emb = model
                    .encode(&mut gr, &store, &aux, NodeFeatures::with_dummies(h, &table), &mut Dropout::off())
                    .unwrap();
                all.iter()
                    .map(|&v| (v, emb.vector(&gr, NodeRef::Dummy(v)).unwrap()))
                    .collect::<BTreeMap<_, _>>()
            };
            let before = dummies(&h);
            for &v in &all {
                let nodes = h
                    .nodes()
                    .iter()
                    .map(|n| {
                        let a = if n.id == v { n.attributes.iter().map(|_| rng.random_range(-50.0..50.0)).collect() } else { n.attributes.clone() };
                        node(n.id.0, n.node_type, a)
                    })
                    .collect();
                let edges = h.hyperedges().iter().map(|e| (e.id, e.members.clone())).collect();
                let perturbed = Hypergraph::new(h.node_types().to_vec(), nodes, edges).unwrap();
                let after = dummies(&perturbed);
                if after[&v] != before[&v] {
                    return Err(format!("h_v* moved for {v} (layers {layers}, strict {strict}, {})", style.name()));
                }
                probes += 1;
            }
        }
    }
    Ok(format!("{probes} perturbations, K=1 literal and K=2 strict, exact equality"))
}

// ---------------------------------------------------------------- 5

const CONVERGENCE_SPEC: &str = "seed = 1\nnode_types = P:300,A:200,F:100\nanchor_type = P\nattr_dim = 8\n\
                                communities = 2\nhyperedges = 600\nmembers = P:3-4,A:4-6,F:4-5\nnoise = 0.05\n\
                                attr_noise = 0.5\n";

fn convergence() -> Outcome {
    let d = generate_synthetic(&SyntheticSpec::parse(CONVERGENCE_SPEC).unwrap()).unwrap().dataset;
    let cfg = PretrainConfig {
        epochs: 50,
        weights: LossWeights::new(1.0, 0.6).unwrap(),
        seed: 0,
        ..PretrainConfig::default()
    };
    let out = pretrain(&d.hypergraph, &d.hyperedges_in(Split::Pretrain), &d.hyperedges_in(Split::Preval), cfg)
        .map_err(|e| e.to_string())?;
    let best = &out.log[out.best_epoch - 1];
    let auc = best.preval_auc.unwrap();
    let ratio = out.log.last().unwrap().l_tc / out.log[0].l_tc;
    let detail = format!(
        "{} nodes, selected epoch {} preval AUC {auc:.3}, T_c final/epoch-1 {ratio:.3}",
        d.hypergraph.num_nodes(),
        out.best_epoch
    );
    if auc >= 0.95 && ratio <= 0.5 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- 6

const TRANSFER_SPEC: &str = "seed = 1\nnode_types = P:1000,A:600,F:200\nanchor_type = P\nattr_dim = 32\n\
                             communities = 2\nhyperedges = 1000\nmembers = A:2-4,F:1-2\nnoise = 0.1\n\
                             attr_noise = 3.0\n";

fn transfer_gain() -> Outcome {
    let d = generate_synthetic(&SyntheticSpec::parse(TRANSFER_SPEC).unwrap()).unwrap().dataset;
    let h = &d.hypergraph;
    let labels = NodeLabels {
        train: d.labeled_in(Split::Train),
        valid: d.labeled_in(Split::Valid),
        test: d.labeled_in(Split::Test),
        num_classes: d.num_classes(),
    };
    let graph = clique_expand(h).message_graph();
    let mut ok_budget = true;
    let mut ok_trend = false;
    let mut parts = Vec::new();
    for style in [EncoderStyle::Sage, EncoderStyle::GraphConv] {
        let mut gaps = [0.0; 2];
        let mut means = [[0.0; 2]; 2];
        for seed in 0..3u64 {
            let cfg = PretrainConfig {
                style,
                seed,
                ..PretrainConfig::default()
            };
            let out = pretrain(h, &d.hyperedges_in(Split::Pretrain), &d.hyperedges_in(Split::Preval), cfg.clone())
                .map_err(|e| e.to_string())?;
            let ckpt = out.checkpoint();
            for (b, budget) in [0.05, 0.15].into_iter().enumerate() {
                for (k, init) in [Init::Pretrained(ckpt.clone()), Init::Random].into_iter().enumerate() {
                    let backbone = Backbone::build(&init, &cfg.encoder_spec(h), seed + 100).map_err(|e| e.to_string())?;
                    let fcfg = FinetuneConfig {
                        seed,
                        ..FinetuneConfig::default()
                    };
                    let o = finetune_node_classification(h, &graph, backbone, &labels, LabelBudget::new(budget, seed).unwrap(), &fcfg)
                        .map_err(|e| e.to_string())?;
                    means[b][k] += o.metric("accuracy").unwrap() / 3.0;
                }
            }
        }
        for b in 0..2 {
            gaps[b] = means[b][0] - means[b][1];
        }
        ok_budget &= means[0][0] >= means[0][1];
        ok_trend |= gaps[0] >= gaps[1];
        parts.push(format!(
            "{} 5%: {:.3} vs {:.3}, 15%: {:.3} vs {:.3}",
            style.name(),
            means[0][0],
            means[0][1],
            means[1][0],
            means[1][1]
        ));
    }
    let detail = format!("pretrained vs random; {}", parts.join("; "));
    if ok_budget && ok_trend {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- 7

fn metric_oracles() -> Outcome {
    let mut rng = stream(0, "metrics");
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let n = rng.random_range(1..60);
        let c = rng.random_range(2..6);
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let mut cm = vec![vec![0usize; c]; c];
        for (&t, &p) in truth.iter().zip(&pred) {
            cm[t][p] += 1;
        }
        let acc = (0..c).map(|k| cm[k][k]).sum::<usize>() as f64 / n as f64;
        let f1 = (0..c)
            .map(|k| {
                let tp = cm[k][k] as f64;
                let fp = (0..c).filter(|&t| t != k).map(|t| cm[t][k]).sum::<usize>() as f64;
                let fn_ = (0..c).filter(|&p| p != k).map(|p| cm[k][p]).sum::<usize>() as f64;
                let (precision, recall) = (tp / (tp + fp), tp / (tp + fn_));
                if tp == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                }
            })
            .sum::<f64>()
            / c as f64;
        worst = worst.max((metrics::accuracy(&pred, &truth).unwrap() - acc).abs());
        worst = worst.max((metrics::f1_macro(&pred, &truth, c).unwrap() - f1).abs());

        let m = rng.random_range(2..80);
        let levels: Vec<f64> = (0..rng.random_range(2..10)).map(|_| rng.random_range(-3.0..3.0)).collect();
        let scores: Vec<f64> = (0..m).map(|_| *levels.choose(&mut rng).unwrap()).collect();
        let mut labels: Vec<bool> = (0..m).map(|_| rng.random()).collect();
        labels[0] = true;
        labels[1] = false;
        let (mut wins, mut pairs) = (0.0, 0.0);
        for i in 0..m {
            for j in 0..m {
                if labels[i] && !labels[j] {
                    pairs += 1.0;
                    wins += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        let got = metrics::auc(&scores, &labels).unwrap();
        let err = (got - wins / pairs).abs();
        if err > 1e-12 {
            return Err(format!("case {case}: auc {got} vs {}", wins / pairs));
        }
        worst = worst.max(err);
    }
    if worst <= 1e-12 {
        Ok(format!("100 cases, max deviation {worst:.1e}"))
    } else {
        Err(format!("max deviation {worst:.1e}"))
    }
}

// ---------------------------------------------------------------- 8

const PIPELINE_SPEC: &str = "seed = 9\nnode_types = P:200,A:120,F:40\nanchor_type = P\nattr_dim = 8\ncommunities = 2\n\
                             hyperedges = 200\nmembers = A:2-3,F:1\nnoise = 0.1\n";

const PIPELINE_CONFIG: &str = "dataset = data/manifest.txt\nout_dir = runs\nencoder = sage\nepochs = 5\nseeds = 0,1\n\
                               finetune.max_epochs = 20\nlink.anchor = P\nlink.target = A\n";

fn sphh(dir: &Path, args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_sphh"))
        .current_dir(dir)
        .args(args)
        .env("SPHH_LOG", "quiet")
        .output()
        .map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("sphh {args:?} failed: {}", String::from_utf8_lossy(&o.stderr)))
    }
}

/// Every file under `dir`, with wall-clock fields removed from logs.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
            let mut bytes = fs::read(&p).unwrap();
            if rel.ends_with(".log") {
                let masked: Vec<String> = String::from_utf8(bytes)
                    .unwrap()
                    .lines()
                    .map(|l| {
                        let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                        v.as_object_mut().unwrap().remove("wall_clock_s");
                        v.to_string()
                    })
                    .collect();
                bytes = masked.join("\n").into_bytes();
            }
            out.insert(rel, bytes);
        }
    }
    out
}

fn pipeline(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    fs::write(dir.join("spec.txt"), PIPELINE_SPEC).unwrap();
    fs::write(dir.join("run.txt"), PIPELINE_CONFIG).unwrap();
    sphh(dir, &["gen-synth", "spec.txt", "data"])?;
    sphh(dir, &["pretrain", "run.txt"])?;
    let mut runs: Vec<_> = fs::read_dir(dir.join("runs")).unwrap().map(|e| e.unwrap().path()).collect();
    runs.sort();
    let ckpt = runs[0].join("base.ckpt");
    let ckpt = ckpt.to_str().unwrap();
    for task in ["nodeclass", "linkpred"] {
        for budget in ["0.05", "0.15"] {
            sphh(dir, &["finetune", "run.txt", "--init", "pretrained", ckpt, "--task", task, "--budget", budget])?;
            sphh(dir, &["finetune", "run.txt", "--init", "random", "--task", task, "--budget", budget])?;
        }
    }
    Ok(snapshot(dir))
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = pipeline(a.path())?;
    let second = pipeline(b.path())?;
    if first.keys().ne(second.keys()) {
        return Err("runs produced different file sets".into());
    }
    for (name, bytes) in &first {
        if &second[name] != bytes {
            return Err(format!("{name} differs between runs"));
        }
    }
    let logs = first.keys().filter(|k| k.ends_with(".log")).count();
    let ckpts = first.keys().filter(|k| k.ends_with(".ckpt")).count();
    Ok(format!("{} files identical ({logs} logs, {ckpts} checkpoints, results)", first.len()))
}
