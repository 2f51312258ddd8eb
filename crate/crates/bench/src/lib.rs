//! Command-line harness around `seqrec-core`.

pub mod cli;
pub mod report;
pub mod run;

use std::path::Path;

use anyhow::{bail, Context, Result};

use seqrec_core::checkpoint::Checkpoint;
use seqrec_core::data::{write_sequence_lines, write_vocabulary, Dataset};
use seqrec_core::evaluation::{full_rank_metrics, per_timestamp_eval, sampled_metrics, MetricsReport, Phase, PerTimestampReport};
use seqrec_core::losses::LossSpec;
use seqrec_core::metering::Meter;
use seqrec_core::models::Architecture;
use seqrec_core::synthetic::{markov_log, planted_pattern, to_sequence_lines, MarkovConfig};

use cli::{BenchArgs, Command, EvalArgs, PerTimestampArgs, PreprocessArgs, ReportArgs, SynthArgs, SynthKind, TrainArgs};
use run::{cell_name, load_split, run_cell, RunConfig, ERROR_FILE, RUN_FILE};

/// Process exit status of a finished command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Some requested bench cells failed.
    PartialFailure,
}

pub fn execute(command: Command) -> Result<Outcome> {
    match command {
        Command::Preprocess(a) => preprocess(a),
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
        Command::PerTimestamp(a) => per_timestamp(a),
        Command::Report(a) => report_cmd(a),
    }
    .map(|ok| if ok { Outcome::Success } else { Outcome::PartialFailure })
}

/// True if `err` is a command-line usage problem rather than a runtime failure.
pub fn is_usage_error(err: &anyhow::Error) -> bool {
    matches!(
        err.downcast_ref::<seqrec_core::Error>(),
        Some(seqrec_core::Error::Usage(_))
    )
}

fn usage(message: impl Into<String>) -> anyhow::Error {
    seqrec_core::Error::Usage(message.into()).into()
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn preprocess(a: PreprocessArgs) -> Result<bool> {
    let data = Dataset::load(&a.data.dataset, a.data.format, &a.data.preprocess_config())?;
    let stats = data.stats();
    write_sequence_lines(&a.out.join("sequences.txt"), &data)?;
    write_vocabulary(&a.out.join("vocab.tsv"), &data.vocab)?;
    write(&a.out.join("stats.txt"), &format!("{stats}\n"))?;
    println!("{stats}");
    Ok(true)
}

fn synth(a: SynthArgs) -> Result<bool> {
    let seqs = match a.kind {
        SynthKind::Planted => planted_pattern(a.users, a.items, a.min_len, a.max_len, a.seed)?,
        SynthKind::Markov => {
            let cfg = MarkovConfig {
                users: a.users,
                items: a.items,
                successors: a.successors,
                noise: a.noise,
                min_len: a.min_len,
                max_len: a.max_len,
            };
            markov_log(&cfg, a.seed)?
        }
    };
    write(&a.out, &to_sequence_lines(&seqs))?;
    Ok(true)
}

fn print_metrics(label: &str, r: &MetricsReport) {
    let cols: Vec<String> = r
        .ks
        .iter()
        .map(|&k| format!("hit@{k} {:.4} ndcg@{k} {:.4}", r.hit(k), r.ndcg(k)))
        .collect();
    println!("{label:<8} {}", cols.join("  "));
}

fn train(a: TrainArgs) -> Result<bool> {
    let loss = cli::loss_spec(a.loss, a.negatives, a.mask_prob)?;
    let config = RunConfig {
        dataset: a.data.dataset.clone(),
        format: a.data.format,
        preprocess: a.data.preprocess_config(),
        model: a.model_args.config(a.model),
        train: a.optim.config(a.seed),
        loss,
        out: a.out.clone(),
        ks: a.eval.ks(),
        sampled_negatives: a.eval.sampled_negatives,
    };
    config.validate()?;
    let split = load_split(&config.dataset, config.format, &config.preprocess)?;
    let result = run_cell(&config, &split)?;
    println!(
        "{} {}: best epoch {} of {}",
        a.model,
        loss.label(),
        result.best_epoch,
        result.records.len()
    );
    print_metrics("valid", &result.valid);
    print_metrics("test", &result.test);
    print_metrics("sampled", &result.sampled_test);
    Ok(true)
}

fn eval(a: EvalArgs) -> Result<bool> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let params = ck.parameters()?;
    let split = load_split(&a.data.dataset, a.data.format, &a.data.preprocess_config())?;
    if split.num_items != ck.model.num_items {
        bail!(
            "checkpoint {} was trained on {} items, dataset has {}",
            a.checkpoint.display(),
            ck.model.num_items,
            split.num_items
        );
    }
    let ks = a.eval.ks();
    let valid = full_rank_metrics(&ck.model, &params, &split, Phase::Valid, &ks)?;
    let test = full_rank_metrics(&ck.model, &params, &split, Phase::Test, &ks)?;
    let sampled = sampled_metrics(
        &ck.model,
        &params,
        &split,
        a.seed,
        a.eval.sampled_negatives,
        &ks,
        &mut Meter::default(),
    )?;
    for (name, report) in [("valid", &valid), ("test", &test), ("sampled", &sampled)] {
        let text = serde_json::to_string_pretty(report)? + "\n";
        write(&a.out.join(format!("metrics_{name}.json")), &text)?;
        print_metrics(name, report);
    }
    Ok(true)
}

/// `(architecture, loss, seed)` cells in grid order; non-sampled losses
/// ignore the negatives list.
pub fn grid(a: &BenchArgs) -> Result<Vec<(Architecture, LossSpec, u64)>> {
    let mut losses: Vec<LossSpec> = Vec::new();
    for &kind in &a.loss {
        let specs = if kind.is_sampled() {
            a.negatives
                .iter()
                .map(|&n| cli::loss_spec(kind, Some(n), None))
                .collect::<Result<Vec<_>, _>>()?
        } else {
            vec![cli::loss_spec(kind, None, a.mask_prob)?]
        };
        for s in specs {
            if !losses.contains(&s) {
                losses.push(s);
            }
        }
    }
    let mut cells = Vec::new();
    for &model in &a.model {
        for &loss in &losses {
            for &seed in &a.seed {
                cells.push((model, loss, seed));
            }
        }
    }
    Ok(cells)
}

fn bench(a: BenchArgs) -> Result<bool> {
    let cells = grid(&a)?;
    if cells.is_empty() {
        return Err(usage("empty grid: give at least one model, loss and seed"));
    }
    let split = load_split(&a.data.dataset, a.data.format, &a.data.preprocess_config())?;
    let runs = a.out.join("runs");
    let mut failed = 0usize;
    for (i, &(arch, loss, seed)) in cells.iter().enumerate() {
        let model = a.model_args.config(arch);
        let dir = runs.join(cell_name(&model, &loss, seed));
        let config = RunConfig {
            dataset: a.data.dataset.clone(),
            format: a.data.format,
            preprocess: a.data.preprocess_config(),
            model,
            train: a.optim.config(seed),
            loss,
            out: dir.clone(),
            ks: a.eval.ks(),
            sampled_negatives: a.eval.sampled_negatives,
        };
        log::info!("cell {}/{}: {}", i + 1, cells.len(), config.cell_name());
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        for stale in [ERROR_FILE, RUN_FILE] {
            let p = dir.join(stale);
            if p.exists() {
                std::fs::remove_file(&p).with_context(|| format!("removing {}", p.display()))?;
            }
        }
        if let Err(e) = run_cell(&config, &split) {
            failed += 1;
            log::error!("{} failed: {e:#}", config.cell_name());
            write(&dir.join(ERROR_FILE), &format!("{e:#}\n"))?;
        }
    }
    let collected = report::collect_cells(&runs)?;
    report::write_reports(&collected, &a.out)?;
    print!("{}", report::summary_markdown(&collected));
    if failed > 0 {
        log::error!("{failed} of {} cells failed", cells.len());
    }
    Ok(failed == 0)
}

/// Position-aligned wide table: one `hit`/`ndcg` column pair per loss.
pub fn merged_csv(curves: &[(String, PerTimestampReport)]) -> String {
    let mut out = String::from("position,count");
    for (label, _) in curves {
        out.push_str(&format!(",{label}_hit_at_10,{label}_ndcg_at_10"));
    }
    out.push('\n');
    let Some((_, first)) = curves.first() else {
        return out;
    };
    for p in &first.positions {
        out.push_str(&format!("{},{}", p.position, p.count));
        for (_, c) in curves {
            match c.get(p.position) {
                Some(q) => out.push_str(&format!(",{:.6},{:.6}", q.hit10, q.ndcg10)),
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    out
}

fn per_timestamp(a: PerTimestampArgs) -> Result<bool> {
    if a.loss.is_empty() {
        return Err(usage("no loss given"));
    }
    let split = load_split(&a.data.dataset, a.data.format, &a.data.preprocess_config())?;
    let mut curves = Vec::new();
    for &kind in &a.loss {
        let negatives = kind.is_sampled().then_some(a.negatives);
        let spec = cli::loss_spec(kind, negatives, None)?;
        let name = format!("{}_{}_s{}", a.model.model_name(), spec.label(), a.seed);
        let path = a.runs.join(name).join(run::CHECKPOINT_FILE);
        if !path.exists() {
            bail!("missing checkpoint for {}: expected {}", spec.label(), path.display());
        }
        let ck = Checkpoint::load(&path)?;
        if ck.model.num_items != split.num_items {
            bail!(
                "{} was trained on {} items, dataset has {}",
                path.display(),
                ck.model.num_items,
                split.num_items
            );
        }
        let report = per_timestamp_eval(&ck.model, &ck.parameters()?, &split)?;
        report.write_csv(&a.out.join(format!("{}.csv", kind)))?;
        log::info!(
            "{}: peak hit@10 at position {:?}",
            spec.label(),
            report
                .positions
                .iter()
                .max_by(|x, y| x.hit10.total_cmp(&y.hit10))
                .map(|p| p.position)
        );
        curves.push((kind.to_string(), report));
    }
    write(&a.out.join("merged.csv"), &merged_csv(&curves))?;
    Ok(true)
}

fn report_cmd(a: ReportArgs) -> Result<bool> {
    let cells = report::collect_cells(&a.runs)?;
    if cells.is_empty() {
        return Err(usage(format!("no finished cells under {}", a.runs.display())));
    }
    report::write_reports(&cells, &a.out)?;
    print!("{}", report::summary_markdown(&cells));
    Ok(true)
}
