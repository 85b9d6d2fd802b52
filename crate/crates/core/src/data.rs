//! Dataset manifests, the tab-separated node/hyperedge/label files, temporal
//! splits, and the planted-community synthetic generator.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::hypergraph::{HyperedgeId, Hypergraph, Node, NodeId, NodeType};
use crate::kv::{parse_pairs, KvFile};
use crate::rng::stream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Pretrain,
    Preval,
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 5] = [Split::Pretrain, Split::Preval, Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Pretrain => "pretrain",
            Split::Preval => "preval",
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

/// Half-open timestamp range `[lo, hi)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeRange {
    pub lo: f64,
    pub hi: f64,
}

impl TimeRange {
    pub fn contains(&self, t: f64) -> bool {
        self.lo <= t && t < self.hi
    }

    pub fn parse(s: &str) -> std::result::Result<Self, String> {
        let body = s
            .trim()
            .strip_prefix('[')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| format!("expected [lo,hi), got {s:?}"))?;
        let (lo, hi) = body.split_once(',').ok_or_else(|| format!("expected [lo,hi), got {s:?}"))?;
        let lo: f64 = lo.trim().parse().map_err(|_| format!("bad lower bound in {s:?}"))?;
        let hi: f64 = hi.trim().parse().map_err(|_| format!("bad upper bound in {s:?}"))?;
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(format!("empty or inverted range {s:?}"));
        }
        Ok(Self { lo, hi })
    }
}

impl std::fmt::Display for TimeRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{},{})", self.lo, self.hi)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    /// `(name, attribute dim)` in type-id order.
    pub node_types: Vec<(String, usize)>,
    pub nodes_path: PathBuf,
    pub hyperedges_path: PathBuf,
    pub labels_path: Option<PathBuf>,
    pub timestamp_field: String,
    /// One range per split, in [`Split::ALL`] order.
    pub splits: Vec<(Split, TimeRange)>,
    /// Directory relative paths resolve against.
    pub base_dir: PathBuf,
}

const MANIFEST_KEYS: &[&str] = &[
    "node_types",
    "nodes_path",
    "hyperedges_path",
    "labels_path",
    "timestamp_field",
    "split.pretrain",
    "split.preval",
    "split.train",
    "split.valid",
    "split.test",
];

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let kv = KvFile::read(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_kv(&kv, base)
    }

    pub fn from_kv(kv: &KvFile, base_dir: PathBuf) -> Result<Self> {
        kv.reject_unknown(MANIFEST_KEYS)?;
        let node_types: Vec<(String, usize)> =
            parse_pairs(kv.require("node_types")?).map_err(|m| kv.error("node_types", m))?;
        let mut splits = Vec::new();
        for s in Split::ALL {
            let key = format!("split.{}", s.name());
            let r = TimeRange::parse(kv.require(&key)?).map_err(|m| kv.error(&key, m))?;
            splits.push((s, r));
        }
        let m = Self {
            node_types,
            nodes_path: kv.require("nodes_path")?.into(),
            hyperedges_path: kv.require("hyperedges_path")?.into(),
            labels_path: kv.get("labels_path").map(PathBuf::from),
            timestamp_field: kv.get("timestamp_field").unwrap_or("timestamp").to_string(),
            splits,
            base_dir,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.node_types.is_empty() {
            return Err(Error::Config("manifest declares no node types".into()));
        }
        let mut names = BTreeSet::new();
        for (n, d) in &self.node_types {
            if !names.insert(n) {
                return Err(Error::Config(format!("node type {n:?} declared twice")));
            }
            if *d == 0 {
                return Err(Error::Config(format!("node type {n:?} has attribute dim 0")));
            }
        }
        for w in self.splits.windows(2) {
            let ((a, ra), (b, rb)) = (w[0], w[1]);
            if ra.hi > rb.lo {
                return Err(Error::Config(format!(
                    "split {} {} overlaps or follows split {} {}",
                    a.name(),
                    ra,
                    b.name(),
                    rb
                )));
            }
        }
        let reserved = ["id", "type", "attributes", "members"];
        if reserved.contains(&self.timestamp_field.as_str()) || self.timestamp_field.is_empty() {
            return Err(Error::Config(format!(
                "timestamp_field {:?} clashes with a fixed column",
                self.timestamp_field
            )));
        }
        Ok(())
    }

    pub fn split_of(&self, t: f64) -> Option<Split> {
        self.splits.iter().find(|(_, r)| r.contains(t)).map(|&(s, _)| s)
    }

    pub fn range(&self, s: Split) -> TimeRange {
        self.splits.iter().find(|(x, _)| *x == s).expect("all splits present").1
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn to_text(&self) -> String {
        let types: Vec<String> = self.node_types.iter().map(|(n, d)| format!("{n}:{d}")).collect();
        let mut out = String::new();
        writeln!(out, "node_types = {}", types.join(",")).unwrap();
        writeln!(out, "nodes_path = {}", self.nodes_path.display()).unwrap();
        writeln!(out, "hyperedges_path = {}", self.hyperedges_path.display()).unwrap();
        if let Some(p) = &self.labels_path {
            writeln!(out, "labels_path = {}", p.display()).unwrap();
        }
        writeln!(out, "timestamp_field = {}", self.timestamp_field).unwrap();
        for (s, r) in &self.splits {
            writeln!(out, "split.{} = {}", s.name(), r).unwrap();
        }
        out
    }
}

/// A loaded hypergraph with its timestamps, split assignment and labels.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub hypergraph: Hypergraph,
    pub hyperedge_time: BTreeMap<HyperedgeId, f64>,
    pub node_time: BTreeMap<NodeId, f64>,
    pub hyperedge_split: BTreeMap<HyperedgeId, Split>,
    /// Earliest split of any incident hyperedge; isolated nodes are absent.
    pub node_split: BTreeMap<NodeId, Split>,
    pub labels: BTreeMap<NodeId, usize>,
}

impl Dataset {
    pub fn from_parts(
        manifest: DatasetManifest,
        hypergraph: Hypergraph,
        hyperedge_time: BTreeMap<HyperedgeId, f64>,
        node_time: BTreeMap<NodeId, f64>,
        labels: BTreeMap<NodeId, usize>,
    ) -> Result<Self> {
        let mut hyperedge_split = BTreeMap::new();
        for f in hypergraph.hyperedges() {
            let t = *hyperedge_time
                .get(&f.id)
                .ok_or_else(|| Error::Config(format!("hyperedge {} has no timestamp", f.id)))?;
            let s = manifest
                .split_of(t)
                .ok_or_else(|| Error::Config(format!("hyperedge {} timestamp {t} is in no split", f.id)))?;
            hyperedge_split.insert(f.id, s);
        }
        let mut node_split: BTreeMap<NodeId, Split> = BTreeMap::new();
        for f in hypergraph.hyperedges() {
            let s = hyperedge_split[&f.id];
            for &m in &f.members {
                node_split.entry(m).and_modify(|e| *e = (*e).min(s)).or_insert(s);
            }
        }
        for v in labels.keys() {
            if !hypergraph.contains_node(*v) {
                return Err(Error::Config(format!("label for unknown node {v}")));
            }
        }
        Ok(Self {
            manifest,
            hypergraph,
            hyperedge_time,
            node_time,
            hyperedge_split,
            node_split,
            labels,
        })
    }

    pub fn hyperedges_in(&self, s: Split) -> Vec<HyperedgeId> {
        self.hyperedge_split.iter().filter(|(_, &x)| x == s).map(|(&f, _)| f).collect()
    }

    pub fn nodes_in(&self, s: Split) -> Vec<NodeId> {
        self.node_split.iter().filter(|(_, &x)| x == s).map(|(&v, _)| v).collect()
    }

    /// Labeled nodes whose split is `s`, ascending by id.
    pub fn labeled_in(&self, s: Split) -> Vec<(NodeId, usize)> {
        self.labels
            .iter()
            .filter(|(v, _)| self.node_split.get(v) == Some(&s))
            .map(|(&v, &y)| (v, y))
            .collect()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.values().max().map_or(0, |m| m + 1)
    }
}

struct Table<'a> {
    path: &'a Path,
    columns: BTreeMap<String, usize>,
    width: usize,
}

impl Table<'_> {
    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.columns
            .get(name)
            .copied()
            .ok_or_else(|| self.err(1, format!("header lacks column {name:?}")))
    }
}

/// Yields `(line number, fields)` for every data line after the header.
fn read_table<'a>(path: &'a Path, text: &'a str) -> Result<(Table<'a>, Vec<(usize, Vec<&'a str>)>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: "missing header".into(),
    })?;
    let names: Vec<&str> = header.split('\t').map(str::trim).collect();
    let columns = names.iter().enumerate().map(|(i, n)| (n.to_string(), i)).collect();
    let table = Table {
        path,
        columns,
        width: names.len(),
    };
    let mut rows = Vec::new();
    for (i, l) in lines {
        let fields: Vec<&str> = l.split('\t').map(str::trim).collect();
        if fields.len() != table.width {
            return Err(table.err(i + 1, format!("expected {} fields, found {}", table.width, fields.len())));
        }
        rows.push((i + 1, fields));
    }
    Ok((table, rows))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads the manifest at `path` and everything it references.
pub fn load(path: &Path) -> Result<Dataset> {
    load_manifest(DatasetManifest::read(path)?)
}

pub fn load_manifest(manifest: DatasetManifest) -> Result<Dataset> {
    let type_ids: BTreeMap<&str, usize> = manifest
        .node_types
        .iter()
        .enumerate()
        .map(|(i, (n, _))| (n.as_str(), i))
        .collect();
    let types: Vec<NodeType> = manifest
        .node_types
        .iter()
        .enumerate()
        .map(|(id, (name, attr_dim))| NodeType {
            id,
            name: name.clone(),
            attr_dim: *attr_dim,
        })
        .collect();
    let ts = manifest.timestamp_field.as_str();

    let nodes_path = manifest.resolve(&manifest.nodes_path);
    let text = read_text(&nodes_path)?;
    let (table, rows) = read_table(&nodes_path, &text)?;
    let (c_id, c_type, c_attr) = (table.col("id")?, table.col("type")?, table.col("attributes")?);
    let c_ts = table.columns.get(ts).copied();
    let mut nodes = Vec::with_capacity(rows.len());
    let mut node_time = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for (line, f) in &rows {
        let id: usize = f[c_id].parse().map_err(|_| table.err(*line, format!("bad node id {:?}", f[c_id])))?;
        if !seen.insert(id) {
            return Err(table.err(*line, format!("duplicate node id {id}")));
        }
        let t = *type_ids
            .get(f[c_type])
            .ok_or_else(|| table.err(*line, format!("unknown node type {:?}", f[c_type])))?;
        let attributes = f[c_attr]
            .split_whitespace()
            .map(|x| x.parse::<f64>().map_err(|_| table.err(*line, format!("bad attribute {x:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if attributes.len() != types[t].attr_dim {
            return Err(table.err(
                *line,
                format!("type {} expects {} attributes, found {}", types[t].name, types[t].attr_dim, attributes.len()),
            ));
        }
        if attributes.iter().any(|a| !a.is_finite()) {
            return Err(table.err(*line, "non-finite attribute"));
        }
        if let Some(c) = c_ts {
            if !f[c].is_empty() {
                let tv: f64 = f[c].parse().map_err(|_| table.err(*line, format!("bad timestamp {:?}", f[c])))?;
                node_time.insert(NodeId(id), tv);
            }
        }
        nodes.push(Node {
            id: NodeId(id),
            node_type: t,
            attributes,
        });
    }

    let edges_path = manifest.resolve(&manifest.hyperedges_path);
    let text = read_text(&edges_path)?;
    let (table, rows) = read_table(&edges_path, &text)?;
    let (c_id, c_ts, c_mem) = (table.col("id")?, table.col(ts)?, table.col("members")?);
    let mut hyperedges = Vec::with_capacity(rows.len());
    let mut hyperedge_time = BTreeMap::new();
    for (line, f) in &rows {
        let id: usize = f[c_id]
            .parse()
            .map_err(|_| table.err(*line, format!("bad hyperedge id {:?}", f[c_id])))?;
        let t: f64 = f[c_ts].parse().map_err(|_| table.err(*line, format!("bad timestamp {:?}", f[c_ts])))?;
        if !t.is_finite() {
            return Err(table.err(*line, "non-finite timestamp"));
        }
        if hyperedge_time.insert(HyperedgeId(id), t).is_some() {
            return Err(table.err(*line, format!("duplicate hyperedge id {id}")));
        }
        let members = f[c_mem]
            .split_whitespace()
            .map(|x| {
                let m: usize = x.parse().map_err(|_| table.err(*line, format!("bad member {x:?}")))?;
                if !seen.contains(&m) {
                    return Err(table.err(*line, format!("unknown node reference {m}")));
                }
                Ok(NodeId(m))
            })
            .collect::<Result<Vec<_>>>()?;
        hyperedges.push((HyperedgeId(id), members));
    }
    let hypergraph = Hypergraph::new(types, nodes, hyperedges)?;

    let mut labels = BTreeMap::new();
    if let Some(lp) = &manifest.labels_path {
        let labels_path = manifest.resolve(lp);
        let text = read_text(&labels_path)?;
        let (table, rows) = read_table(&labels_path, &text)?;
        let (c_node, c_label) = (table.col("node")?, table.col("label")?);
        for (line, f) in &rows {
            let v: usize = f[c_node].parse().map_err(|_| table.err(*line, format!("bad node id {:?}", f[c_node])))?;
            let y: usize = f[c_label].parse().map_err(|_| table.err(*line, format!("bad label {:?}", f[c_label])))?;
            if !seen.contains(&v) {
                return Err(table.err(*line, format!("unknown node reference {v}")));
            }
            if labels.insert(NodeId(v), y).is_some() {
                return Err(table.err(*line, format!("node {v} labeled twice")));
            }
        }
    }
    Dataset::from_parts(manifest, hypergraph, hyperedge_time, node_time, labels)
}

fn join_f64(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// Canonical file contents `(manifest, nodes, hyperedges, labels)`: records
/// sorted by id, members ascending, floats in shortest round-trip form.
pub fn render(d: &Dataset) -> (String, String, String, Option<String>) {
    let h = &d.hypergraph;
    let ts = &d.manifest.timestamp_field;
    let with_time = !d.node_time.is_empty();
    let mut nodes = String::new();
    if with_time {
        writeln!(nodes, "id\ttype\t{ts}\tattributes").unwrap();
    } else {
        writeln!(nodes, "id\ttype\tattributes").unwrap();
    }
    for n in h.nodes() {
        let ty = &h.node_types()[n.node_type].name;
        if with_time {
            let t = d.node_time.get(&n.id).map(|t| t.to_string()).unwrap_or_default();
            writeln!(nodes, "{}\t{ty}\t{t}\t{}", n.id, join_f64(&n.attributes)).unwrap();
        } else {
            writeln!(nodes, "{}\t{ty}\t{}", n.id, join_f64(&n.attributes)).unwrap();
        }
    }
    let mut edges = String::new();
    writeln!(edges, "id\t{ts}\tmembers").unwrap();
    let mut sorted: Vec<_> = h.hyperedges().iter().collect();
    sorted.sort_by_key(|f| f.id);
    for f in sorted {
        let members: Vec<String> = f.members.iter().map(|m| m.to_string()).collect();
        writeln!(edges, "{}\t{}\t{}", f.id, d.hyperedge_time[&f.id], members.join(" ")).unwrap();
    }
    let labels = d.manifest.labels_path.as_ref().map(|_| {
        let mut s = String::from("node\tlabel\n");
        for (v, y) in &d.labels {
            writeln!(s, "{v}\t{y}").unwrap();
        }
        s
    });
    (d.manifest.to_text(), nodes, edges, labels)
}

/// Writes the dataset under `dir` with its manifest as `manifest.txt`,
/// returning the manifest path.
pub fn write(d: &Dataset, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (manifest, nodes, edges, labels) = render(d);
    let put = |rel: &Path, body: &str| -> Result<()> {
        let p = dir.join(rel);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
    };
    put(&d.manifest.nodes_path, &nodes)?;
    put(&d.manifest.hyperedges_path, &edges)?;
    if let (Some(p), Some(body)) = (&d.manifest.labels_path, labels) {
        put(p, &body)?;
    }
    let mp = dir.join("manifest.txt");
    std::fs::write(&mp, manifest).map_err(|e| Error::io(&mp, e))?;
    Ok(mp)
}

/// Planted-community generator parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    /// `(type name, node count)`.
    pub node_types: Vec<(String, usize)>,
    /// The type contributing exactly one member to every hyperedge; its
    /// nodes carry the community label.
    pub anchor_type: String,
    pub attr_dim: usize,
    pub communities: usize,
    pub hyperedges: usize,
    /// Inclusive member-count range per node type, on top of the anchor.
    pub members: Vec<(String, (usize, usize))>,
    /// Probability that a member other than the anchor is drawn from another community.
    pub noise: f64,
    /// Standard deviation of the isotropic attribute noise around each
    /// community centroid; centroids are standard normal.
    pub attr_noise: f64,
    /// Hyperedge timestamps are integers uniform in `[0, time_span)`.
    pub time_span: usize,
    /// Split boundaries as fractions of `time_span`.
    pub split_fractions: [f64; 4],
}

const SYNTH_KEYS: &[&str] = &[
    "seed",
    "node_types",
    "anchor_type",
    "attr_dim",
    "communities",
    "hyperedges",
    "members",
    "noise",
    "attr_noise",
    "time_span",
    "split_fractions",
];

impl SyntheticSpec {
    pub fn read(path: &Path) -> Result<Self> {
        Self::from_kv(&KvFile::read(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(&KvFile::parse(Path::new("<spec>"), text)?)
    }

    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        kv.reject_unknown(SYNTH_KEYS)?;
        let node_types = parse_pairs(kv.require("node_types")?).map_err(|m| kv.error("node_types", m))?;
        let members = kv
            .require("members")?
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| {
                let bad = || kv.error("members", format!("expected type:lo-hi, got {p:?}"));
                let (n, r) = p.split_once(':').ok_or_else(bad)?;
                let (lo, hi) = match r.split_once('-') {
                    Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
                    None => {
                        let k = r.trim().parse().map_err(|_| bad())?;
                        (k, k)
                    }
                };
                Ok((n.trim().to_string(), (lo, hi)))
            })
            .collect::<Result<Vec<_>>>()?;
        let split_fractions = match kv.get("split_fractions") {
            None => [0.5, 0.6, 0.8, 0.9],
            Some(s) => {
                let v: Vec<f64> = s
                    .split(',')
                    .map(|x| x.trim().parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| kv.error("split_fractions", "expected four comma-separated numbers"))?;
                v.try_into()
                    .map_err(|_| kv.error("split_fractions", "expected four comma-separated numbers"))?
            }
        };
        let spec = Self {
            seed: kv.parse_or("seed", 0)?,
            node_types,
            anchor_type: kv.require("anchor_type")?.to_string(),
            attr_dim: kv.parse_or("attr_dim", 8)?,
            communities: kv.parse_or("communities", 2)?,
            hyperedges: kv
                .parse_value("hyperedges")?
                .ok_or_else(|| Error::Config("missing key \"hyperedges\"".into()))?,
            members,
            noise: kv.parse_or("noise", 0.0)?,
            attr_noise: kv.parse_or("attr_noise", 1.0)?,
            time_span: kv.parse_or("time_span", 100)?,
            split_fractions,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_text(&self) -> String {
        let types: Vec<String> = self.node_types.iter().map(|(n, c)| format!("{n}:{c}")).collect();
        let members: Vec<String> = self
            .members
            .iter()
            .map(|(n, (lo, hi))| format!("{n}:{lo}-{hi}"))
            .collect();
        let fr: Vec<String> = self.split_fractions.iter().map(|f| f.to_string()).collect();
        format!(
            "seed = {}\nnode_types = {}\nanchor_type = {}\nattr_dim = {}\ncommunities = {}\n\
             hyperedges = {}\nmembers = {}\nnoise = {}\nattr_noise = {}\ntime_span = {}\nsplit_fractions = {}\n",
            self.seed,
            types.join(","),
            self.anchor_type,
            self.attr_dim,
            self.communities,
            self.hyperedges,
            members.join(","),
            self.noise,
            self.attr_noise,
            self.time_span,
            fr.join(",")
        )
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.node_types.is_empty() {
            return cfg("synthetic spec declares no node types".into());
        }
        let mut names = BTreeSet::new();
        for (n, c) in &self.node_types {
            if !names.insert(n.as_str()) {
                return cfg(format!("node type {n:?} declared twice"));
            }
            if *c == 0 {
                return cfg(format!("node type {n:?} has count 0"));
            }
            if self.communities > *c {
                return cfg(format!(
                    "{} communities but type {n:?} has only {c} nodes",
                    self.communities
                ));
            }
        }
        if !names.contains(self.anchor_type.as_str()) {
            return cfg(format!("anchor type {:?} is not declared", self.anchor_type));
        }
        if self.attr_dim == 0 || self.communities == 0 || self.hyperedges == 0 || self.time_span == 0 {
            return cfg("attr_dim, communities, hyperedges and time_span must be positive".into());
        }
        if !(0.0..1.0).contains(&self.noise) {
            return cfg(format!("noise {} outside [0, 1)", self.noise));
        }
        if !(self.attr_noise >= 0.0 && self.attr_noise.is_finite()) {
            return cfg(format!("attr_noise {} must be non-negative", self.attr_noise));
        }
        let mut min_members = 0;
        for (n, (lo, hi)) in &self.members {
            if !names.contains(n.as_str()) {
                return cfg(format!("members entry {n:?} names an undeclared node type"));
            }
            if lo > hi {
                return cfg(format!("members range for {n:?} is inverted"));
            }
            let count = self.node_types.iter().find(|(m, _)| m == n).unwrap().1;
            let mut smallest_community = count / self.communities;
            if n == &self.anchor_type {
                // The anchor itself is never drawn again.
                smallest_community -= 1;
            }
            if *hi > smallest_community {
                return cfg(format!(
                    "up to {hi} {n:?} members per hyperedge but a community holds only {smallest_community}"
                ));
            }
            min_members += lo;
        }
        if min_members == 0 {
            return cfg("every hyperedge needs at least one member besides the anchor".into());
        }
        let f = self.split_fractions;
        if !(0.0 < f[0] && f.windows(2).all(|w| w[0] <= w[1]) && f[3] < 1.0) {
            return cfg("split_fractions must be increasing within (0, 1)".into());
        }
        Ok(())
    }
}

/// Generator output: the dataset plus the planted community of every node.
#[derive(Clone, Debug)]
pub struct Synthetic {
    pub dataset: Dataset,
    pub communities: BTreeMap<NodeId, usize>,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Synthetic> {
    spec.validate()?;
    let c = spec.communities;
    let mut community_rng = stream(spec.seed, "synth-communities");
    let mut attr_rng = stream(spec.seed, "synth-attributes");
    let mut edge_rng = stream(spec.seed, "synth-hyperedges");
    let mut time_rng = stream(spec.seed, "synth-timestamps");
    let noise = Normal::new(0.0, spec.attr_noise).map_err(|e| Error::Config(e.to_string()))?;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    let types: Vec<NodeType> = spec
        .node_types
        .iter()
        .enumerate()
        .map(|(id, (name, _))| NodeType {
            id,
            name: name.clone(),
            attr_dim: spec.attr_dim,
        })
        .collect();
    let anchor = types.iter().position(|t| t.name == spec.anchor_type).expect("validated");

    let mut nodes = Vec::new();
    let mut communities = BTreeMap::new();
    // pools[t][k]: nodes of type t in community k.
    let mut pools: Vec<Vec<Vec<NodeId>>> = Vec::new();
    let mut next = 0usize;
    for (t, (_, count)) in spec.node_types.iter().enumerate() {
        let centroids: Vec<Vec<f64>> = (0..c)
            .map(|_| (0..spec.attr_dim).map(|_| unit.sample(&mut attr_rng)).collect())
            .collect();
        let mut order: Vec<usize> = (0..*count).collect();
        order.shuffle(&mut community_rng);
        let mut assign = vec![0; *count];
        for (rank, &i) in order.iter().enumerate() {
            assign[i] = rank % c;
        }
        let mut by_comm = vec![Vec::new(); c];
        for (i, &k) in assign.iter().enumerate() {
            let id = NodeId(next + i);
            let attributes = centroids[k].iter().map(|m| m + noise.sample(&mut attr_rng)).collect();
            nodes.push(Node {
                id,
                node_type: t,
                attributes,
            });
            communities.insert(id, k);
            by_comm[k].push(id);
        }
        next += count;
        pools.push(by_comm);
    }

    let mut anchors: Vec<NodeId> = pools[anchor].iter().flatten().copied().collect();
    anchors.sort();
    anchors.shuffle(&mut edge_rng);
    let mut hyperedges = Vec::with_capacity(spec.hyperedges);
    let mut hyperedge_time = BTreeMap::new();
    for i in 0..spec.hyperedges {
        let a = anchors[i % anchors.len()];
        let home = communities[&a];
        let mut members = vec![a];
        for (name, (lo, hi)) in &spec.members {
            let t = types.iter().position(|x| &x.name == name).expect("validated");
            let k = edge_rng.random_range(*lo..=*hi);
            let mut chosen = BTreeSet::new();
            while chosen.len() < k {
                let comm = if c > 1 && edge_rng.random::<f64>() < spec.noise {
                    let other = edge_rng.random_range(0..c - 1);
                    if other >= home {
                        other + 1
                    } else {
                        other
                    }
                } else {
                    home
                };
                let pool = &pools[t][comm];
                let v = pool[edge_rng.random_range(0..pool.len())];
                if v != a {
                    chosen.insert(v);
                }
            }
            members.extend(chosen);
        }
        let id = HyperedgeId(i);
        hyperedge_time.insert(id, time_rng.random_range(0..spec.time_span) as f64);
        hyperedges.push((id, members));
    }
    let hypergraph = Hypergraph::new(types, nodes, hyperedges)?;

    let labels = pools[anchor]
        .iter()
        .enumerate()
        .flat_map(|(k, vs)| vs.iter().map(move |&v| (v, k)))
        .collect();
    let span = spec.time_span as f64;
    let mut cuts = vec![0.0];
    cuts.extend(spec.split_fractions.iter().map(|f| (f * span).round()));
    cuts.push(span);
    let manifest = DatasetManifest {
        node_types: spec.node_types.iter().map(|(n, _)| (n.clone(), spec.attr_dim)).collect(),
        nodes_path: "nodes.tsv".into(),
        hyperedges_path: "hyperedges.tsv".into(),
        labels_path: Some("labels.tsv".into()),
        timestamp_field: "timestamp".into(),
        splits: Split::ALL
            .iter()
            .enumerate()
            .map(|(i, &s)| (s, TimeRange { lo: cuts[i], hi: cuts[i + 1] }))
            .collect(),
        base_dir: PathBuf::new(),
    };
    manifest.validate()?;
    let dataset = Dataset::from_parts(manifest, hypergraph, hyperedge_time, BTreeMap::new(), labels)?;
    Ok(Synthetic { dataset, communities })
}
