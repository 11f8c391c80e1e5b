use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::dataset::{generate_synthetic, load_interactions_with, write_interactions, LoadOptions, SyntheticConfig};
use crate::encoder::{encode, read_checkpoint, write_checkpoint, EncoderConfig, EncoderMode};
use crate::error::{Error, Result};
use crate::gradcheck::{check_end_to_end, check_loss, GradcheckReport};
use crate::graph::NormalizedBipartiteGraph;
use crate::metrics::{eval_report_csv, eval_threads_from_env, evaluate_with_threads, EvalResult};
use crate::trainer::{train, TrainHistory};

pub const EMBEDDINGS_FILE: &str = "embeddings.bin";
pub const HISTORY_FILE: &str = "history.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const EVAL_FILE: &str = "eval.csv";

/// Largest relative error `gradcheck` accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Exit status for a failed command: 3 when training started and then
/// aborted, 2 for everything caught before that.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::TrainingAborted { .. } => 3,
        _ => 2,
    }
}

/// Content hash in git's SHA-256 object layout (`blob <len>\0<bytes>`).
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

#[derive(Debug, Clone)]
pub struct TrainOutputs {
    pub out_dir: PathBuf,
    pub history: TrainHistory,
    pub final_eval: Option<EvalResult>,
}

/// Trains from a config file and writes the final embeddings, the
/// evaluation history and a manifest into the output directory.
pub fn run_train(config_path: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<TrainOutputs> {
    let mut cfg = RunConfig::load(config_path)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    if let Some(o) = out {
        cfg.out_dir = Some(o.to_path_buf());
    }
    cfg.validate()?;
    let train_path = cfg
        .train_path
        .clone()
        .ok_or_else(|| Error::Config("train_path: required".into()))?;
    let test_path = cfg
        .test_path
        .clone()
        .ok_or_else(|| Error::Config("test_path: required".into()))?;
    let out_dir = cfg
        .out_dir
        .clone()
        .ok_or_else(|| Error::Config("out_dir: required (or pass --out)".into()))?;

    let dataset = load_interactions_with(
        &train_path,
        &test_path,
        LoadOptions {
            num_users: cfg.num_users,
            num_items: cfg.num_items,
        },
    )?;
    let graph = NormalizedBipartiteGraph::build(&dataset);
    let mut tc = cfg.train.clone();
    tc.eval_threads = eval_threads_from_env();
    log::info!(
        "{} users, {} items, {} train edges; encoder {} loss {}",
        dataset.num_users(),
        dataset.num_items(),
        dataset.num_train_interactions(),
        cfg.encoder.mode.as_str(),
        cfg.loss.kind.as_str()
    );
    let (base, history) = train(&dataset, &graph, &cfg.encoder, &cfg.loss, &tc)?;
    let finals = encode(&base, &graph, &cfg.encoder)?;

    fs::create_dir_all(&out_dir)?;
    write_checkpoint(&out_dir.join(EMBEDDINGS_FILE), &finals)?;
    fs::write(out_dir.join(HISTORY_FILE), history.to_csv(cfg.record_timing))?;
    let manifest = format!(
        "# mscl {}\n# train_sha256 = {}\n# test_sha256 = {}\n# users = {} items = {} train_edges = {}\n{}",
        env!("CARGO_PKG_VERSION"),
        content_hash(&fs::read(&train_path)?),
        content_hash(&fs::read(&test_path)?),
        dataset.num_users(),
        dataset.num_items(),
        dataset.num_train_interactions(),
        cfg.serialize()
    );
    fs::write(out_dir.join(MANIFEST_FILE), manifest)?;

    let final_eval = history.last().map(|r| EvalResult {
        recall: r.recall,
        ndcg: r.ndcg,
        k: tc.eval_k,
        num_users_evaluated: 0,
    });
    Ok(TrainOutputs {
        out_dir,
        history,
        final_eval,
    })
}

pub fn cmd_train(config_path: &Path, out: Option<&Path>, seed: Option<u64>) -> i32 {
    match run_train(config_path, out, seed) {
        Ok(o) => {
            if let Some(e) = o.final_eval {
                println!("recall@{k}={} ndcg@{k}={}", e.recall, e.ndcg, k = e.k);
            }
            println!("wrote {}", o.out_dir.display());
            0
        }
        Err(e) => report(&e),
    }
}

fn report(err: &Error) -> i32 {
    eprintln!("error: {err}");
    exit_code(err)
}

/// Evaluates a checkpoint of final embeddings. The checkpoint must match
/// the user and item counts of the dataset exactly.
pub fn run_eval(checkpoint: &Path, train_path: &Path, test_path: &Path, k: usize, out: Option<&Path>) -> Result<EvalResult> {
    if k == 0 {
        return Err(Error::Config("k: must be positive".into()));
    }
    let finals = read_checkpoint(checkpoint)?;
    let dataset = load_interactions_with(train_path, test_path, LoadOptions::default())?;
    if finals.num_users() != dataset.num_users() || finals.num_items() != dataset.num_items() {
        return Err(Error::Shape(format!(
            "checkpoint holds {} users x {} items, dataset has {} x {}",
            finals.num_users(),
            finals.num_items(),
            dataset.num_users(),
            dataset.num_items()
        )));
    }
    let result = evaluate_with_threads(&dataset, &finals, k, eval_threads_from_env())?;
    let csv_path = match out {
        Some(p) => p.to_path_buf(),
        None => checkpoint.with_file_name(EVAL_FILE),
    };
    fs::write(csv_path, eval_report_csv(&result))?;
    Ok(result)
}

pub fn cmd_eval(checkpoint: &Path, train_path: &Path, test_path: &Path, k: usize, out: Option<&Path>) -> i32 {
    match run_eval(checkpoint, train_path, test_path, k, out) {
        Ok(r) => {
            println!("recall={} ndcg={}", r.recall, r.ndcg);
            0
        }
        Err(e) => report(&e),
    }
}

#[derive(Debug, Clone)]
pub struct GradcheckSummary {
    pub loss: GradcheckReport,
    pub end_to_end: GradcheckReport,
}

impl GradcheckSummary {
    pub fn max_relative_error(&self) -> f64 {
        self.loss.max_relative_error.max(self.end_to_end.max_relative_error)
    }

    pub fn passed(&self) -> bool {
        self.max_relative_error() <= GRADCHECK_TOLERANCE
    }
}

/// Finite-difference check of the configured loss, alone and through the
/// configured encoder (LightGCN with two layers when the config says MF).
pub fn run_gradcheck(config_path: &Path, trials: usize, corruption: Option<f64>) -> Result<GradcheckSummary> {
    let cfg = RunConfig::load(config_path)?;
    cfg.validate()?;
    if trials == 0 {
        return Err(Error::Config("trials: must be positive".into()));
    }
    let encoder = if cfg.encoder.mode == EncoderMode::Mf {
        EncoderConfig::lightgcn_mean(2)
    } else {
        cfg.encoder.clone()
    };
    let seed = cfg.train.seed;
    Ok(GradcheckSummary {
        loss: check_loss(&cfg.loss, trials, seed, corruption)?,
        end_to_end: check_end_to_end(&cfg.loss, &encoder, cfg.train.l2_lambda, trials, seed ^ 1, corruption)?,
    })
}

pub fn cmd_gradcheck(config_path: &Path, trials: usize, corruption: Option<f64>) -> i32 {
    let summary = match run_gradcheck(config_path, trials, corruption) {
        Ok(s) => s,
        Err(e) => return report(&e),
    };
    for (name, r) in [("loss", &summary.loss), ("end_to_end", &summary.end_to_end)] {
        println!(
            "{name}: trials={} coordinates={} max_rel_err={:.3e}",
            r.trials, r.coordinates, r.max_relative_error
        );
    }
    if summary.passed() {
        return 0;
    }
    for (name, r) in [("loss", &summary.loss), ("end_to_end", &summary.end_to_end)] {
        if r.max_relative_error > GRADCHECK_TOLERANCE {
            if let Some(w) = &r.worst {
                eprintln!(
                    "{name}: worst coordinate trial {} {} component {}: analytic {} numeric {}",
                    w.trial, w.entity, w.component, w.analytic, w.numeric
                );
            }
        }
    }
    1
}

/// Writes a block-structured synthetic dataset as `train.txt`/`test.txt`.
pub fn run_synth(params: &SyntheticConfig, out_dir: &Path, seed: u64) -> Result<(PathBuf, PathBuf)> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ds = generate_synthetic(params, &mut rng)?;
    fs::create_dir_all(out_dir)?;
    let (train_path, test_path) = (out_dir.join("train.txt"), out_dir.join("test.txt"));
    write_interactions(&ds, &train_path, &test_path)?;
    Ok((train_path, test_path))
}

pub fn cmd_synth(params: &SyntheticConfig, out_dir: &Path, seed: u64) -> i32 {
    match run_synth(params, out_dir, seed) {
        Ok((tr, te)) => {
            println!("wrote {} and {}", tr.display(), te.display());
            0
        }
        Err(e) => report(&e),
    }
}
