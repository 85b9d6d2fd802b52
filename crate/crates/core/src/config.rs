//! Run configuration: defaults, `key = value` parsing, overrides,
//! validation and the hash that names run directories.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::autograd::Aggregator;
use crate::encoder::EncoderStyle;
use crate::error::{Error, Result};
use crate::finetune::FinetuneConfig;
use crate::kv::KvFile;
use crate::pretrain::{Distance, LossWeights, PretrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub out_dir: PathBuf,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
    pub seeds: Vec<u64>,
    pub link_anchor: Option<String>,
    pub link_target: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("manifest.txt"),
            out_dir: PathBuf::from("runs"),
            pretrain: PretrainConfig::default(),
            finetune: FinetuneConfig::default(),
            seeds: vec![0],
            link_anchor: None,
            link_target: None,
        }
    }
}

const KEYS: &[&str] = &[
    "dataset",
    "out_dir",
    "encoder",
    "layers",
    "hidden_dim",
    "mlp_hidden",
    "aggregator",
    "dropout",
    "lr",
    "batch_size",
    "epochs",
    "alpha",
    "beta",
    "dist",
    "strict_dummies",
    "seed",
    "seeds",
    "finetune.lr",
    "finetune.max_epochs",
    "finetune.patience",
    "finetune.freeze_base",
    "finetune.include_self",
    "finetune.aggregator",
    "link.anchor",
    "link.target",
];

fn wrap<T>(kv: &KvFile, key: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config(m) => kv.error(key, m),
        other => other,
    })
}

impl RunConfig {
    pub fn read(path: &Path) -> Result<Self> {
        Self::from_kv(&KvFile::read(path)?, path.parent().unwrap_or(Path::new("")))
    }

    /// Reads `path` and applies `key=value` overrides before validation.
    pub fn read_with_overrides(path: &Path, overrides: &[String]) -> Result<Self> {
        let mut kv = KvFile::read(path)?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            kv.set(k.trim(), v.trim());
        }
        Self::from_kv(&kv, path.parent().unwrap_or(Path::new("")))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(&KvFile::parse(Path::new("<config>"), text)?, Path::new(""))
    }

    /// Relative paths resolve against `base`.
    pub fn from_kv(kv: &KvFile, base: &Path) -> Result<Self> {
        kv.reject_unknown(KEYS)?;
        let d = Self::default();
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let style = match kv.get("encoder") {
            Some(s) => wrap(kv, "encoder", EncoderStyle::parse(s))?,
            None => d.pretrain.style,
        };
        let aggregator = match kv.get("aggregator") {
            Some(s) => wrap(kv, "aggregator", Aggregator::parse(s))?,
            None => d.pretrain.aggregator,
        };
        let dist = match kv.get("dist") {
            Some(s) => wrap(kv, "dist", Distance::parse(s))?,
            None => d.pretrain.dist,
        };
        let seeds = match (kv.get("seeds"), kv.get("seed")) {
            (Some(_), Some(_)) => return Err(kv.error("seeds", "give either seed or seeds, not both")),
            (Some(s), None) => s
                .split(',')
                .map(|x| x.trim().parse::<u64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| kv.error("seeds", format!("cannot parse {s:?}")))?,
            (None, Some(_)) => vec![kv.parse_or("seed", 0)?],
            (None, None) => d.seeds.clone(),
        };
        let alpha = kv.parse_or("alpha", d.pretrain.weights.alpha)?;
        let beta = kv.parse_or("beta", d.pretrain.weights.beta)?;
        let pretrain = PretrainConfig {
            style,
            layers: kv.parse_or("layers", d.pretrain.layers)?,
            hidden_dim: kv.parse_or("hidden_dim", d.pretrain.hidden_dim)?,
            mlp_hidden: kv.parse_or("mlp_hidden", d.pretrain.mlp_hidden)?,
            aggregator,
            dropout: kv.parse_or("dropout", d.pretrain.dropout)?,
            lr: kv.parse_or("lr", d.pretrain.lr)?,
            batch_size: kv.parse_or("batch_size", d.pretrain.batch_size)?,
            epochs: kv.parse_or("epochs", d.pretrain.epochs)?,
            weights: LossWeights { alpha, beta },
            dist,
            strict_dummies: kv.parse_or("strict_dummies", d.pretrain.strict_dummies)?,
            seed: seeds.first().copied().unwrap_or(0),
        };
        let finetune = FinetuneConfig {
            lr: kv.parse_or("finetune.lr", d.finetune.lr)?,
            max_epochs: kv.parse_or("finetune.max_epochs", d.finetune.max_epochs)?,
            patience: kv.parse_or("finetune.patience", d.finetune.patience)?,
            freeze_base: kv.parse_or("finetune.freeze_base", d.finetune.freeze_base)?,
            include_self: kv.parse_or("finetune.include_self", d.finetune.include_self)?,
            aggregator: match kv.get("finetune.aggregator") {
                Some(s) => wrap(kv, "finetune.aggregator", Aggregator::parse(s))?,
                None => aggregator,
            },
            seed: pretrain.seed,
        };
        let cfg = Self {
            dataset: resolve(kv.get("dataset").unwrap_or("manifest.txt")),
            out_dir: resolve(kv.get("out_dir").unwrap_or("runs")),
            pretrain,
            finetune,
            seeds,
            link_anchor: kv.get("link.anchor").map(str::to_string),
            link_target: kv.get("link.target").map(str::to_string),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.pretrain;
        LossWeights::new(p.weights.alpha, p.weights.beta)?;
        if p.layers == 0 || p.hidden_dim == 0 || p.mlp_hidden == 0 {
            return Err(Error::Config("layers, hidden_dim and mlp_hidden must be positive".into()));
        }
        if p.batch_size == 0 || p.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be positive".into()));
        }
        if !(p.lr > 0.0 && p.lr.is_finite()) {
            return Err(Error::Config(format!("lr {} must be positive", p.lr)));
        }
        if !(0.0..1.0).contains(&p.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", p.dropout)));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        self.finetune.validate()?;
        if self.link_anchor.is_some() != self.link_target.is_some() {
            return Err(Error::Config("link.anchor and link.target go together".into()));
        }
        Ok(())
    }

    /// Pretraining settings for one seed.
    pub fn pretrain_for(&self, seed: u64) -> PretrainConfig {
        PretrainConfig {
            seed,
            ..self.pretrain.clone()
        }
    }

    pub fn finetune_for(&self, seed: u64) -> FinetuneConfig {
        FinetuneConfig {
            seed,
            ..self.finetune.clone()
        }
    }

    /// Canonical text of every setting that affects results, seeds and
    /// output location excluded.
    pub fn canonical(&self) -> String {
        let p = &self.pretrain;
        let f = &self.finetune;
        format!(
            "dataset = {}\nencoder = {}\nlayers = {}\nhidden_dim = {}\nmlp_hidden = {}\naggregator = {}\n\
             dropout = {}\nlr = {}\nbatch_size = {}\nepochs = {}\nalpha = {}\nbeta = {}\ndist = {}\n\
             strict_dummies = {}\nfinetune.lr = {}\nfinetune.max_epochs = {}\nfinetune.patience = {}\n\
             finetune.freeze_base = {}\nfinetune.include_self = {}\nfinetune.aggregator = {}\n\
             link.anchor = {}\nlink.target = {}\n",
            self.dataset.display(),
            p.style.name(),
            p.layers,
            p.hidden_dim,
            p.mlp_hidden,
            p.aggregator.name(),
            p.dropout,
            p.lr,
            p.batch_size,
            p.epochs,
            p.weights.alpha,
            p.weights.beta,
            p.dist.name(),
            p.strict_dummies,
            f.lr,
            f.max_epochs,
            f.patience,
            f.freeze_base,
            f.include_self,
            f.aggregator.name(),
            self.link_anchor.as_deref().unwrap_or(""),
            self.link_target.as_deref().unwrap_or(""),
        )
    }

    /// First 12 hex digits of the SHA-256 of [`RunConfig::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    pub fn run_dir(&self, seed: u64) -> PathBuf {
        self.out_dir.join(format!("run-{}-s{seed}", self.hash()))
    }
}
