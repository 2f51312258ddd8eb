//! Summary tables built from finished cells. Nothing here trains.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};

use seqrec_core::models::Architecture;

use crate::run::{RunResult, ERROR_FILE, RUN_FILE};

pub const SUMMARY_MD: &str = "summary.md";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const RUNS_CSV: &str = "runs.csv";
pub const TIMING_CSV: &str = "timing.csv";

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Done(Box<RunResult>),
    Failed { name: String, message: String },
}

/// Every cell directory under `runs`, in name order.
pub fn collect_cells(runs: &Path) -> Result<Vec<Cell>> {
    let mut dirs: Vec<_> = std::fs::read_dir(runs)
        .with_context(|| format!("reading {}", runs.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let mut cells = Vec::new();
    for dir in dirs {
        let name = dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
        if dir.join(ERROR_FILE).exists() {
            let message = std::fs::read_to_string(dir.join(ERROR_FILE))?.trim().to_string();
            cells.push(Cell::Failed { name, message });
        } else if dir.join(RUN_FILE).exists() {
            cells.push(Cell::Done(Box::new(RunResult::load(&dir.join(RUN_FILE))?)));
        }
    }
    Ok(cells)
}

fn arch_order(a: Architecture) -> usize {
    Architecture::ALL.iter().position(|&x| x == a).unwrap_or(usize::MAX)
}

/// Seeds of one (model, loss) row.
#[derive(Debug, Clone)]
pub struct Row<'a> {
    pub model: &'static str,
    pub loss: String,
    pub runs: Vec<&'a RunResult>,
}

impl Row<'_> {
    fn mean(&self, f: impl Fn(&RunResult) -> f64) -> f64 {
        self.runs.iter().map(|r| f(r)).sum::<f64>() / self.runs.len() as f64
    }

    pub fn hit10(&self) -> f64 {
        self.mean(|r| r.test.hit(10))
    }

    pub fn ndcg10(&self) -> f64 {
        self.mean(|r| r.test.ndcg(10))
    }

    pub fn seconds(&self) -> f64 {
        self.mean(|r| r.resources.train_seconds)
    }

    pub fn score_evals(&self) -> f64 {
        self.mean(|r| r.resources.score_evals as f64)
    }

    pub fn negative_samples(&self) -> f64 {
        self.mean(|r| r.resources.negative_samples as f64)
    }
}

pub fn rows(cells: &[Cell]) -> Vec<Row<'_>> {
    let mut groups: BTreeMap<_, Row<'_>> = BTreeMap::new();
    for cell in cells {
        let Cell::Done(r) = cell else { continue };
        let c = &r.config;
        let key = (arch_order(c.model.architecture), c.loss.kind, c.loss.negatives());
        groups
            .entry(key)
            .or_insert_with(|| Row {
                model: c.model.architecture.model_name(),
                loss: c.loss.label(),
                runs: Vec::new(),
            })
            .runs
            .push(r);
    }
    let mut rows: Vec<_> = groups.into_values().collect();
    for row in &mut rows {
        row.runs.sort_by_key(|r| r.config.train.seed);
    }
    rows
}

/// Mean test HIT@10 / NDCG@10 and counters per (model, loss). No wall-clock
/// column, so identical runs give identical bytes.
pub fn summary_csv(cells: &[Cell]) -> String {
    let mut out = String::from("model,loss,seeds,hit_at_10,ndcg_at_10,score_evals,negative_samples\n");
    for row in rows(cells) {
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.1},{:.1}",
            row.model,
            row.loss,
            row.runs.len(),
            row.hit10(),
            row.ndcg10(),
            row.score_evals(),
            row.negative_samples()
        );
    }
    out
}

pub fn summary_markdown(cells: &[Cell]) -> String {
    let mut out = String::from(
        "| model | loss | seeds | HIT@10 | NDCG@10 | seconds | score evals |\n\
         |---|---|---:|---:|---:|---:|---:|\n",
    );
    for row in rows(cells) {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {:.4} | {:.4} | {:.1} | {:.0} |",
            row.model,
            row.loss,
            row.runs.len(),
            row.hit10(),
            row.ndcg10(),
            row.seconds(),
            row.score_evals()
        );
    }
    let failed: Vec<_> = cells
        .iter()
        .filter_map(|c| match c {
            Cell::Failed { name, message } => Some((name, message)),
            Cell::Done(_) => None,
        })
        .collect();
    if !failed.is_empty() {
        out.push_str("\nFailed cells:\n\n");
        for (name, message) in failed {
            let _ = writeln!(out, "- `{name}`: {message}");
        }
    }
    out
}

/// One line per cell, deterministic.
pub fn runs_csv(cells: &[Cell]) -> String {
    let mut out = String::from(
        "cell,model,loss,seed,status,best_epoch,epochs,valid_hit_at_10,valid_ndcg_at_10,\
         test_hit_at_10,test_ndcg_at_10,sampled_hit_at_10,sampled_ndcg_at_10,score_evals,negative_samples\n",
    );
    for cell in cells {
        match cell {
            Cell::Done(r) => {
                let c = &r.config;
                let _ = writeln!(
                    out,
                    "{},{},{},{},ok,{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}",
                    c.cell_name(),
                    c.model.architecture.model_name(),
                    c.loss.label(),
                    c.train.seed,
                    r.best_epoch,
                    r.records.len(),
                    r.valid.hit(10),
                    r.valid.ndcg(10),
                    r.test.hit(10),
                    r.test.ndcg(10),
                    r.sampled_test.hit(10),
                    r.sampled_test.ndcg(10),
                    r.resources.score_evals,
                    r.resources.negative_samples
                );
            }
            Cell::Failed { name, .. } => {
                let _ = writeln!(out, "{name},,,,failed,,,,,,,,,,");
            }
        }
    }
    out
}

/// Wall-clock per cell; differs between otherwise identical runs.
pub fn timing_csv(cells: &[Cell]) -> String {
    let mut out = String::from("cell,train_seconds,epochs,seconds_per_epoch\n");
    for cell in cells {
        if let Cell::Done(r) = cell {
            let epochs = r.records.len().max(1);
            let secs = r.resources.train_seconds;
            let _ = writeln!(
                out,
                "{},{:.3},{},{:.4}",
                r.config.cell_name(),
                secs,
                r.records.len(),
                secs / epochs as f64
            );
        }
    }
    out
}

/// Write the four report files into `out`.
pub fn write_reports(cells: &[Cell], out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for (name, text) in [
        (SUMMARY_MD, summary_markdown(cells)),
        (SUMMARY_CSV, summary_csv(cells)),
        (RUNS_CSV, runs_csv(cells)),
        (TIMING_CSV, timing_csv(cells)),
    ] {
        let path = out.join(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
