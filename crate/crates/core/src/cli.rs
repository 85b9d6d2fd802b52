//! The `sphh` command line: synthetic data generation, pretraining,
//! fine-tuning and result reports.

use std::ffi::OsString;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::data::{self, Dataset, Split, SyntheticSpec};
use crate::error::{Error, Result};
use crate::expansion::{clique_expand, expand_hyperedges};
use crate::finetune::{
    finetune_link_prediction, finetune_node_classification, Backbone, FinetuneOutcome, Init, LabelBudget,
    LinkSplits, LinkTask, NodeLabels, ResultRecord,
};
use crate::pretrain::{pretrain_with_observer, EpochRecord};
use crate::report;

#[derive(Parser, Debug)]
#[command(name = "sphh", version, about = "Self-supervised pretraining for heterogeneous hypergraph networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a planted-community dataset from a spec file.
    GenSynth { spec: PathBuf, out_dir: PathBuf },
    /// Pretrain the BASE encoder once per configured seed.
    Pretrain {
        config: PathBuf,
        /// `key=value` overrides applied on top of the config file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Fine-tune on a downstream task and append result records.
    Finetune {
        config: PathBuf,
        /// `pretrained <checkpoint>` or `random`.
        #[arg(long, num_args = 1..=2, value_names = ["MODE", "CHECKPOINT"], required = true)]
        init: Vec<String>,
        #[arg(long, value_enum)]
        task: Task,
        #[arg(long)]
        budget: f64,
        /// Results file; defaults to `<out_dir>/results.jsonl`.
        #[arg(long)]
        results: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Summarize a results file as a pretrained-versus-random table.
    Report { results: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Nodeclass,
    Linkpred,
}

impl Task {
    fn name(self) -> &'static str {
        match self {
            Task::Nodeclass => "nodeclass",
            Task::Linkpred => "linkpred",
        }
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Exit code for an error: bad input is 1, failures during computation 2.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::Checkpoint(_) | Error::Io { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn init_logging() -> Result<()> {
    let level = match std::env::var("SPHH_LOG").as_deref() {
        Err(_) | Ok("info") => log::LevelFilter::Info,
        Ok("quiet") => log::LevelFilter::Error,
        Ok("debug") => log::LevelFilter::Debug,
        Ok(other) => {
            return Err(Error::Config(format!(
                "SPHH_LOG={other:?} (expected quiet, info or debug)"
            )))
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
    Ok(())
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = init_logging() {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenSynth { spec, out_dir } => cmd_gen_synth(&spec, &out_dir),
        Command::Pretrain { config, overrides } => {
            let cfg = RunConfig::read_with_overrides(&config, &overrides)?;
            cmd_pretrain(&cfg).map(|_| ())
        }
        Command::Finetune {
            config,
            init,
            task,
            budget,
            results,
            overrides,
        } => {
            let cfg = RunConfig::read_with_overrides(&config, &overrides)?;
            let init = parse_init(&init)?;
            let budget_ok = LabelBudget::new(budget, 0)?;
            let results = results.unwrap_or_else(|| cfg.out_dir.join("results.jsonl"));
            cmd_finetune(&cfg, &init, task, budget_ok.fraction, &results).map(|_| ())
        }
        Command::Report { results } => {
            print!("{}", cmd_report(&results)?);
            Ok(())
        }
    }
}

fn parse_init(args: &[String]) -> Result<Init> {
    match args {
        [m] if m == "random" => Ok(Init::Random),
        [m, path] if m == "pretrained" => Ok(Init::Pretrained(Checkpoint::read(Path::new(path))?)),
        [m] if m == "pretrained" => Err(Error::Config("--init pretrained needs a checkpoint path".into())),
        _ => Err(Error::Config(format!(
            "--init expects `pretrained <checkpoint>` or `random`, got {args:?}"
        ))),
    }
}

pub fn cmd_gen_synth(spec: &Path, out_dir: &Path) -> Result<()> {
    let spec = SyntheticSpec::read(spec)?;
    let synth = data::generate_synthetic(&spec)?;
    let manifest = data::write(&synth.dataset, out_dir)?;
    let spec_copy = out_dir.join("spec.txt");
    std::fs::write(&spec_copy, spec.to_text()).map_err(|e| Error::io(&spec_copy, e))?;
    println!("{}", manifest.display());
    Ok(())
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    data::load(&cfg.dataset)
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

/// Runs pretraining for every seed and returns the checkpoint paths.
pub fn cmd_pretrain(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let ds = load_dataset(cfg)?;
    let h = &ds.hypergraph;
    let pre = ds.hyperedges_in(Split::Pretrain);
    let preval = ds.hyperedges_in(Split::Preval);
    let mut out = Vec::new();
    for &seed in &cfg.seeds {
        let dir = cfg.run_dir(seed);
        create_dir(&dir)?;
        let log_path = dir.join("pretrain.log");
        let mut log_file = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
        let header = json!({
            "seed": seed,
            "config_hash": cfg.hash(),
            "config": cfg.canonical(),
        });
        writeln!(log_file, "{header}").map_err(|e| Error::io(&log_path, e))?;
        let mut write_err = None;
        let outcome = pretrain_with_observer(h, &pre, &preval, cfg.pretrain_for(seed), |r: &EpochRecord| {
            if let Err(e) = writeln!(log_file, "{}", serde_json::to_string(r).expect("record serializes")) {
                write_err.get_or_insert(e);
            }
        })?;
        if let Some(e) = write_err {
            return Err(Error::io(&log_path, e));
        }
        let ckpt = dir.join("base.ckpt");
        outcome.checkpoint().write(&ckpt)?;
        log::info!("seed {seed}: best epoch {} saved to {}", outcome.best_epoch, ckpt.display());
        println!("{}", ckpt.display());
        out.push(ckpt);
    }
    Ok(out)
}

pub fn node_labels(ds: &Dataset) -> NodeLabels {
    NodeLabels {
        train: ds.labeled_in(Split::Train),
        valid: ds.labeled_in(Split::Valid),
        test: ds.labeled_in(Split::Test),
        num_classes: ds.num_classes(),
    }
}

/// Runs fine-tuning for every seed, appending records to `results`.
pub fn cmd_finetune(
    cfg: &RunConfig,
    init: &Init,
    task: Task,
    budget: f64,
    results: &Path,
) -> Result<Vec<ResultRecord>> {
    let ds = load_dataset(cfg)?;
    let h = &ds.hypergraph;
    let link = match task {
        Task::Linkpred => {
            let (Some(a), Some(t)) = (&cfg.link_anchor, &cfg.link_target) else {
                return Err(Error::Config("link prediction needs link.anchor and link.target".into()));
            };
            Some(LinkTask::new(h, a, t)?)
        }
        Task::Nodeclass => None,
    };
    let mut records = Vec::new();
    for &seed in &cfg.seeds {
        let spec = cfg.pretrain_for(seed).encoder_spec(h);
        let backbone = Backbone::build(init, &spec, seed)?;
        let encoder = backbone.model.spec.style.name().to_string();
        let budget_sel = LabelBudget::new(budget, seed)?;
        let fcfg = cfg.finetune_for(seed);
        let outcome: FinetuneOutcome = match link {
            None => {
                let graph = clique_expand(h).message_graph();
                finetune_node_classification(h, &graph, backbone, &node_labels(&ds), budget_sel, &fcfg)?
            }
            Some(task) => {
                let mut visible = ds.hyperedges_in(Split::Pretrain);
                visible.extend(ds.hyperedges_in(Split::Preval));
                let graph = expand_hyperedges(h, &visible)?.message_graph();
                let splits = LinkSplits {
                    train: task.examples(h, &ds.hyperedges_in(Split::Train))?,
                    valid: task.examples(h, &ds.hyperedges_in(Split::Valid))?,
                    test: task.examples(h, &ds.hyperedges_in(Split::Test))?,
                };
                finetune_link_prediction(h, &graph, backbone, task, &splits, budget_sel, &fcfg)?
            }
        };
        log::info!(
            "seed {seed}: best epoch {} of {}, {} training examples",
            outcome.best_epoch,
            outcome.epochs_run,
            outcome.train_examples
        );
        for (metric, value) in &outcome.metrics {
            records.push(ResultRecord {
                task: task.name().into(),
                encoder: encoder.clone(),
                init: init.name().into(),
                budget,
                seed,
                metric: metric.clone(),
                value: *value,
            });
        }
    }
    if let Some(parent) = results.parent() {
        if !parent.as_os_str().is_empty() {
            create_dir(parent)?;
        }
    }
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(results)
        .map_err(|e| Error::io(results, e))?;
    for r in &records {
        writeln!(f, "{}", serde_json::to_string(r).expect("record serializes")).map_err(|e| Error::io(results, e))?;
        println!("{} {} {} budget={} seed={} {}={:.4}", r.task, r.encoder, r.init, r.budget, r.seed, r.metric, r.value);
    }
    Ok(records)
}

pub fn cmd_report(results: &Path) -> Result<String> {
    let records = report::read_results(results)?;
    Ok(report::render(&report::aggregate(&records)))
}
