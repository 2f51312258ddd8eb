//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use ndarray::{array, Array2};
use rand::Rng;

use seqrec_bench::run::RunResult;
use seqrec_core::data::{left_pad, Dataset, InputFormat, ItemId, PreprocessConfig, SplitDataset, UserSplit};
use seqrec_core::evaluation::{full_rank_metrics, sampled_metrics, Phase, DEFAULT_KS, SAMPLED_NEGATIVES};
use seqrec_core::losses::*;
use seqrec_core::metering::Meter;
use seqrec_core::models::{gradient_check, score_full, Architecture, GradCheckConfig, ModelConfig, ParameterSet, SeqModel};
use seqrec_core::training::{fit, TrainConfig};
use seqrec_core::{derived_rng, rng_from_seed};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn desk() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/desk_markov.txt")
}

fn desk_split() -> SplitDataset {
    Dataset::load(&desk(), InputFormat::SequenceLines, &PreprocessConfig::default())
        .and_then(|d| d.split())
        .expect("bundled dataset loads")
}

/// Shared training flags of the desk runs.
const DESK: &[&str] = &[
    "--dim", "32", "--max-len", "20", "--batch-size", "128", "--lr", "3e-3",
];
const DESK_T: usize = 20;

fn seqrec(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_seqrec"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "seqrec {} exited with {}: {}",
            args.first().unwrap_or(&""),
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn bench(out: &Path, extra: &[&str]) -> Result<(), String> {
    let data = desk();
    let mut args = vec!["bench", "--dataset", data.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(DESK);
    args.extend_from_slice(extra);
    seqrec(&args)
}

fn load_run(runs: &Path, cell: &str) -> Result<RunResult, String> {
    RunResult::load(&runs.join("runs").join(cell).join("run.json")).map_err(|e| format!("{e:#}"))
}

fn gradient_suite() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();
    let mut checks = 0;
    for arch in Architecture::ALL {
        for kind in LossKind::ALL {
            for seed in 0..100 {
                let cfg = GradCheckConfig { seed, ..GradCheckConfig::default() };
                let r = gradient_check(arch, kind, &cfg).map_err(|e| e.to_string())?;
                if r.max_rel_error > worst {
                    worst = r.max_rel_error;
                    worst_at = format!("{arch}/{kind} seed {seed}");
                }
                checks += 1;
            }
        }
    }
    ensure!(worst < 1e-4, "max relative error {worst:.3e} at {worst_at}");
    Ok(format!("{checks} instances over 24 pairs, max relative error {worst:.2e}"))
}

fn closed_form_losses() -> Outcome {
    let ln2 = std::f64::consts::LN_2;
    let c = |pos: f64, neg: &[f64]| CandidateScores::new(pos, neg.to_vec());
    let e = |r: seqrec_core::Result<f64>| r.expect("valid input");
    let cases: Vec<(&str, f64, f64)> = vec![
        ("bpr zero margin", e(bpr_loss(&c(0.0, &[0.0]))), ln2),
        ("bpr margin 1", e(bpr_loss(&c(1.0, &[0.0]))), 0.313262),
        ("bpr-max uniform", e(bpr_max_loss(&c(0.0, &[0.0, 0.0]))), ln2),
        ("bpr-max (1; 0, 2)", e(bpr_max_loss(&c(1.0, &[0.0, 2.0]))), 1.126928),
        ("top1 zero", e(top1_loss(&c(0.0, &[0.0]))), 1.0),
        ("top1 margin 10", e(top1_loss(&c(10.0, &[0.0]))), 0.500045),
        ("top1-max (1; 0, 2)", e(top1_max_loss(&c(1.0, &[0.0, 2.0]))), 1.600529),
        ("bce zero", e(bce_loss(&[c(0.0, &[0.0])])), 2.0 * ln2),
        ("ce uniform |I|=4", e(ce_last_loss(&FullScores::dense(Array2::zeros((1, 4))), 3)), 4f64.ln()),
        ("ce peaked", e(ce_last_loss(&FullScores::dense(array![[2.0, 0.0, 0.0, 0.0]]), 1)), 0.340753),
        (
            "ce-all mean",
            e(enhanced_ce_loss(&FullScores::dense(array![[2.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0]]), &[1, 4])),
            0.863524,
        ),
        ("mlm uniform", e(mlm_loss(&FullScores::dense(array![[1.0, 1.0, 1.0, 1.0]]), &[2])), 4f64.ln()),
    ];
    let mut worst: f64 = 0.0;
    for (name, got, want) in &cases {
        let err = (got - want).abs();
        ensure!(err < 1e-6, "{name}: {got} vs {want}");
        worst = worst.max(err);
    }
    Ok(format!("{} values, max abs error {worst:.1e}", cases.len()))
}

fn reduction_identities() -> Outcome {
    let mut rng = rng_from_seed(2024);
    for i in 0..1000 {
        let one = CandidateScores::new(rng.gen_range(-20.0..20.0), vec![rng.gen_range(-20.0..20.0)]);
        let bpr = bpr_loss(&one).unwrap();
        ensure!(bpr_max_loss(&one).unwrap() == bpr, "bpr-max != bpr at instance {i}");
        ensure!(top1_max_loss(&one).unwrap() == top1_loss(&one).unwrap(), "top1-max != top1 at instance {i}");
        let items = rng.gen_range(2..9);
        let row = Array2::from_shape_fn((1, items), |_| rng.gen_range(-20.0..20.0));
        let target = rng.gen_range(1..=items as ItemId);
        let f = FullScores::dense(row);
        ensure!(
            enhanced_ce_loss(&f, &[target]).unwrap() == ce_last_loss(&f, target).unwrap(),
            "ce-all != ce-last at instance {i}"
        );
    }
    Ok("1000 instances, bit-exact".into())
}

fn random_split(rng: &mut seqrec_core::Rng, users: usize, items: usize) -> SplitDataset {
    let users = (0..users)
        .map(|u| {
            let len = rng.gen_range(3..12);
            let seq: Vec<ItemId> = (0..len).map(|_| rng.gen_range(1..=items as ItemId)).collect();
            UserSplit {
                user: u as u32,
                train: seq[..len - 2].to_vec(),
                valid: seq[len - 2],
                test: seq[len - 1],
            }
        })
        .collect();
    SplitDataset { num_items: items, users }
}

/// Position of `target` after sorting by (score desc, id asc).
fn sorted_rank(scores: &[f64], target: ItemId) -> usize {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    order.iter().position(|&i| i + 1 == target as usize).unwrap() + 1
}

fn brute_force(model: &SeqModel, params: &ParameterSet, split: &SplitDataset, phase: Phase) -> (Vec<f64>, Vec<f64>) {
    let t = model.config.max_len;
    let mut hit = vec![0.0; DEFAULT_KS.len()];
    let mut ndcg = vec![0.0; DEFAULT_KS.len()];
    for u in &split.users {
        let (prefix, target) = match phase {
            Phase::Valid => (u.train.clone(), u.valid),
            Phase::Test => (u.test_prefix(), u.test),
        };
        let input = if model.config.architecture.is_bidirectional() {
            mlm_inference_input(&prefix, t, model.mask_id())
        } else {
            left_pad(&prefix, t)
        };
        let h = model.hidden_states(params, &input).unwrap();
        let rank = sorted_rank(&score_full(params, h.row(t - 1).as_slice().unwrap()), target);
        for (i, &k) in DEFAULT_KS.iter().enumerate() {
            if rank <= k {
                hit[i] += 1.0;
                ndcg[i] += 1.0 / (rank as f64 + 1.0).log2();
            }
        }
    }
    let n = split.users.len() as f64;
    (hit.iter().map(|v| v / n).collect(), ndcg.iter().map(|v| v / n).collect())
}

fn metric_oracle() -> Outcome {
    let mut tie_cases = 0;
    for case in 0..50u64 {
        let mut rng = derived_rng(314, case);
        let items = rng.gen_range(2..=10);
        let users = rng.gen_range(1..=20);
        let split = random_split(&mut rng, users, items);
        let architecture = Architecture::ALL[case as usize % 3];
        let tie = case % 2 == 0;
        let model = SeqModel::new(
            ModelConfig {
                architecture,
                dim: 4,
                layers: 1,
                heads: 2,
                max_len: 5,
                dropout: 0.0,
                init_scale: if case % 3 == 0 { 0.0 } else { 0.7 },
            },
            items,
        )
        .unwrap();
        let mut params = model.init_parameters(&mut rng);
        if tie {
            let emb = params.tensors_mut().iter_mut().next().unwrap();
            let (a, b) = (rng.gen_range(1..=items), rng.gen_range(1..=items));
            let row = emb.row(a).to_owned();
            emb.row_mut(b).assign(&row);
        }
        if tie || case % 3 == 0 {
            tie_cases += 1;
        }
        for phase in [Phase::Valid, Phase::Test] {
            let report = full_rank_metrics(&model, &params, &split, phase, &DEFAULT_KS).unwrap();
            let (hit, ndcg) = brute_force(&model, &params, &split, phase);
            ensure!(report.hit == hit, "case {case} {phase}: hit {:?} vs {hit:?}", report.hit);
            ensure!(report.ndcg == ndcg, "case {case} {phase}: ndcg {:?} vs {ndcg:?}", report.ndcg);
        }
    }
    Ok(format!("50 instances ({tie_cases} with ties), exact equality"))
}

fn cost_accounting(work: &Path) -> Outcome {
    // one user with 50 training targets
    let seq: Vec<ItemId> = (0..53).map(|i| (i % 60 + 1) as ItemId).collect();
    let split = SplitDataset {
        num_items: 60,
        users: vec![UserSplit { user: 0, train: seq[..51].to_vec(), valid: seq[51], test: seq[52] }],
    };
    let model = SeqModel::new(ModelConfig { dim: 8, max_len: 50, ..ModelConfig::default() }, 60).unwrap();
    let cfg = TrainConfig { epochs: 1, batch_size: 1, ..TrainConfig::default() };
    let count = |kind| {
        let spec = LossSpec::with_negatives(kind, 50).unwrap();
        fit(&model, &split, &cfg, &spec).unwrap().meter
    };
    let (bpr, bce) = (count(LossKind::Bpr), count(LossKind::Bce));
    ensure!(
        bpr.negative_samples == 50 && bce.negative_samples == 2500,
        "l=50 negatives: bpr {} bce {}",
        bpr.negative_samples,
        bce.negative_samples
    );
    ensure!(bce.score_evals == 50 * bpr.score_evals, "l=50 scorings: bpr {} bce {}", bpr.score_evals, bce.score_evals);

    let out = work.join("cost");
    bench(&out, &["--model", "sasrec", "--loss", "bpr,bce", "--negatives", "100", "--epochs", "2", "--seed", "1"])?;
    let bpr = load_run(&out, "sasrec_bpr-100_s1")?;
    let bce = load_run(&out, "sasrec_bce-100_s1")?;
    let split = desk_split();
    let trainable: Vec<usize> = split
        .users
        .iter()
        .filter(|u| u.train.len() >= 2)
        .map(|u| (u.train.len() - 1).min(DESK_T))
        .collect();
    let (users, positions) = (trainable.len() as u64, trainable.iter().sum::<usize>() as u64);
    let (p, c) = (bpr.records[0].score_evals, bce.records[0].score_evals);
    ensure!(p == users * 101, "bpr scorings {p}, expected {}", users * 101);
    ensure!(c * users == p * positions, "bce/bpr = {c}/{p}, expected l̄ = {positions}/{users}");
    let (tp, tc) = (bpr.resources.train_seconds, bce.resources.train_seconds);
    ensure!(tc > tp, "bce-100 took {tc:.2}s, bpr-100 {tp:.2}s");
    Ok(format!(
        "l=50: {} vs {} negatives; desk: bce/bpr scorings = {:.3} = l̄ exactly, wall-clock {tc:.1}s vs {tp:.1}s",
        2500,
        50,
        c as f64 / p as f64
    ))
}

fn direction_of_effect(work: &Path) -> Outcome {
    let start = Instant::now();
    let out = work.join("desk");
    bench(
        &out,
        &["--model", "sasrec,gru4rec", "--loss", "ce-all,bce", "--negatives", "1", "--epochs", "25", "--seed", "1,2,3"],
    )?;
    let mut lines = Vec::new();
    let mut ok = true;
    for model in ["sasrec", "gru4rec"] {
        let mut wins = 0;
        let mut detail = Vec::new();
        for seed in 1..=3 {
            let ce = load_run(&out, &format!("{model}_ce-all_s{seed}"))?;
            let bce = load_run(&out, &format!("{model}_bce-1_s{seed}"))?;
            let win = ce.test.hit(10) > bce.test.hit(10) && ce.test.ndcg(10) > bce.test.ndcg(10);
            wins += win as usize;
            detail.push(format!(
                "s{seed} {:.3}/{:.3} vs {:.3}/{:.3}",
                ce.test.hit(10),
                ce.test.ndcg(10),
                bce.test.hit(10),
                bce.test.ndcg(10)
            ));
        }
        ok &= wins >= 2;
        lines.push(format!("{model} {wins}/3 ({})", detail.join(", ")));
    }
    let secs = start.elapsed().as_secs_f64();
    let summary = format!("{}; {secs:.0}s", lines.join("; "));
    ensure!(ok, "{summary}");
    ensure!(secs < 900.0, "took {secs:.0}s");
    Ok(summary)
}

fn per_position_shape(work: &Path) -> Outcome {
    let start = Instant::now();
    let out = work.join("desk");
    bench(&out, &["--model", "sasrec", "--loss", "ce-last", "--epochs", "25", "--seed", "1"])?;
    let data = desk();
    let curves = work.join("curves");
    seqrec(&[
        "per-timestamp",
        "--dataset",
        data.to_str().unwrap(),
        "--runs",
        out.join("runs").to_str().unwrap(),
        "--model",
        "sasrec",
        "--seed",
        "1",
        "--out",
        curves.to_str().unwrap(),
    ])?;
    let text = std::fs::read_to_string(curves.join("merged.csv")).map_err(|e| e.to_string())?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).ok_or(format!("no column {name}"));
    let (pos, last, all, bce) = (col("position")?, col("ce-last_hit_at_10")?, col("ce-all_hit_at_10")?, col("bce_hit_at_10")?);
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap_or(f64::NAN)).collect())
        .collect();
    let final_train = (DESK_T + 1) as f64;
    let peak = rows
        .iter()
        .max_by(|a, b| a[last].total_cmp(&b[last]))
        .ok_or("empty curve")?;
    let at_final = rows.iter().find(|r| r[pos] == final_train).ok_or("final training position missing")?;
    let earlier_lower = rows.iter().filter(|r| r[pos] < final_train).all(|r| r[last] < at_final[last]);
    let dominated = rows.iter().filter(|r| r[all] >= r[bce]).count();
    let share = dominated as f64 / rows.len() as f64;
    let secs = start.elapsed().as_secs_f64();
    let summary = format!(
        "ce-last peak {:.3} at position {} (final training position {}); ce-all >= bce at {dominated}/{} positions ({:.0}%); {secs:.0}s",
        peak[last],
        peak[pos],
        final_train,
        rows.len(),
        100.0 * share
    );
    ensure!(peak[pos] == final_train && earlier_lower, "{summary}");
    ensure!(share >= 0.7, "{summary}");
    ensure!(secs < 600.0, "{summary}");
    Ok(summary)
}

/// A single untrained model scores items through a fixed random bias, which
/// correlates with the popularity of the test items, so the expectation is
/// taken over independent parameter draws.
fn sampled_sanity() -> Outcome {
    let split = desk_split();
    let model = SeqModel::new(
        ModelConfig { dim: 32, max_len: DESK_T, dropout: 0.0, ..ModelConfig::default() },
        split.num_items,
    )
    .unwrap();
    let mut hits = Vec::new();
    let mut evaluations = 0;
    for draw in 0..10 {
        let params = model.init_parameters(&mut derived_rng(99, draw));
        let mut meter = Meter::default();
        let r = sampled_metrics(&model, &params, &split, draw, SAMPLED_NEGATIVES, &[10], &mut meter).unwrap();
        ensure!(meter.score_evals == (r.users * (SAMPLED_NEGATIVES + 1)) as u64, "draw {draw}: {} scorings", meter.score_evals);
        evaluations += r.users;
        hits.push(r.hit(10));
    }
    let mean = hits.iter().sum::<f64>() / hits.len() as f64;
    let (lo, hi) = hits.iter().fold((1.0f64, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
    let summary = format!("sampled hit@10 {mean:.4} over {evaluations} evaluations (10 draws, {lo:.4}..{hi:.4})");
    ensure!((mean - 0.099).abs() <= 0.02, "{summary}");
    Ok(summary)
}

fn reproducibility(work: &Path) -> Outcome {
    let mut outputs = Vec::new();
    for name in ["repro_a", "repro_b"] {
        let out = work.join(name);
        bench(&out, &["--model", "sasrec,gru4rec", "--loss", "bpr,ce-all", "--epochs", "2", "--seed", "3"])?;
        let summary = std::fs::read(out.join("summary.csv")).map_err(|e| e.to_string())?;
        let runs = std::fs::read(out.join("runs.csv")).map_err(|e| e.to_string())?;
        outputs.push((summary, runs));
    }
    ensure!(outputs[0].0 == outputs[1].0, "summary.csv differs between identical runs");
    ensure!(outputs[0].1 == outputs[1].1, "runs.csv differs between identical runs");
    Ok(format!("summary.csv byte-identical ({} bytes)", outputs[0].0.len()))
}

fn main() {
    let work = tempfile::tempdir().expect("temporary directory");
    let w = work.path();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("gradient suite", Box::new(gradient_suite)),
        ("closed-form loss values", Box::new(closed_form_losses)),
        ("reduction identities", Box::new(reduction_identities)),
        ("metric oracle", Box::new(metric_oracle)),
        ("cost accounting", Box::new(|| cost_accounting(w))),
        ("direction of effect", Box::new(|| direction_of_effect(w))),
        ("per-position shape", Box::new(|| per_position_shape(w))),
        ("sampled-metric sanity", Box::new(sampled_sanity)),
        ("reproducibility", Box::new(|| reproducibility(w))),
    ];
    // optional criterion numbers on the command line select a subset
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    let mut ran = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({secs:.1}s) {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("criterion {} {name}: FAIL ({secs:.1}s) {detail}", i + 1);
            }
        }
    }
    println!("{} of {ran} criteria passed", ran - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
