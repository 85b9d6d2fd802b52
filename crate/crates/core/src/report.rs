//! Aggregation of fine-tuning results into the pretrained-versus-random
//! comparison table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::finetune::ResultRecord;

pub fn read_results(path: &Path) -> Result<Vec<ResultRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_results(path, &text)
}

pub fn parse_results(path: &Path, text: &str) -> Result<Vec<ResultRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Mean and sample standard deviation (`None` for a single value).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub stddev: Option<f64>,
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let stddev = (n > 1).then(|| {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1) as f64).sqrt()
    });
    Some(Summary { n, mean, stddev })
}

/// `(task, encoder, budget as text, metric)`.
pub type CellKey = (String, String, String, String);

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub pretrained: Option<Summary>,
    pub random: Option<Summary>,
}

impl Cell {
    /// `Some("pretrained")` / `Some("random")` when both are present and
    /// the means differ.
    pub fn better(&self) -> Option<&'static str> {
        match (self.pretrained, self.random) {
            (Some(p), Some(r)) if p.mean > r.mean => Some("pretrained"),
            (Some(p), Some(r)) if r.mean > p.mean => Some("random"),
            _ => None,
        }
    }
}

pub fn aggregate(records: &[ResultRecord]) -> BTreeMap<CellKey, Cell> {
    let mut groups: BTreeMap<(CellKey, String), Vec<f64>> = BTreeMap::new();
    for r in records {
        let key = (r.task.clone(), r.encoder.clone(), r.budget.to_string(), r.metric.clone());
        groups.entry((key, r.init.clone())).or_default().push(r.value);
    }
    let mut cells: BTreeMap<CellKey, Cell> = BTreeMap::new();
    for ((key, init), values) in groups {
        let cell = cells.entry(key).or_insert(Cell {
            pretrained: None,
            random: None,
        });
        match init.as_str() {
            "pretrained" => cell.pretrained = summarize(&values),
            "random" => cell.random = summarize(&values),
            other => log::warn!("ignoring records with init {other:?}"),
        }
    }
    cells
}

fn fmt_summary(s: Option<Summary>, mark: bool) -> String {
    match s {
        None => "-".into(),
        Some(s) => {
            let sd = s.stddev.map_or("n/a".to_string(), |v| format!("{v:.4}"));
            format!("{:.4} ± {sd} (n={}){}", s.mean, s.n, if mark { " *" } else { "" })
        }
    }
}

/// Plain-text table; `*` marks the better initialization of each cell.
pub fn render(cells: &BTreeMap<CellKey, Cell>) -> String {
    let mut rows = vec![[
        "task".to_string(),
        "encoder".into(),
        "budget".into(),
        "metric".into(),
        "pretrained".into(),
        "random".into(),
    ]];
    for ((task, enc, budget, metric), cell) in cells {
        let better = cell.better();
        rows.push([
            task.clone(),
            enc.clone(),
            budget.clone(),
            metric.clone(),
            fmt_summary(cell.pretrained, better == Some("pretrained")),
            fmt_summary(cell.random, better == Some("random")),
        ]);
    }
    let widths: Vec<usize> = (0..6)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in &rows {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .map(|(s, &w)| format!("{s}{}", " ".repeat(w - s.chars().count())))
            .collect();
        writeln!(out, "{}", line.join("  ").trim_end()).unwrap();
    }
    out
}
