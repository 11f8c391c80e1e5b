use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mscl::cli::{RunConfig, EMBEDDINGS_FILE, HISTORY_FILE, MANIFEST_FILE};
use mscl::dataset::{load_interactions, SyntheticConfig};
use mscl::encoder::{write_checkpoint, EmbeddingTable};
use mscl::table::Table;

fn mscl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mscl"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, seed: &str) -> (PathBuf, PathBuf) {
    let out = mscl(&["synth", "--out", p(dir), "--seed", seed, "--blocks", "3", "--users-per-block", "15", "--items-per-block", "12", "--density", "0.5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (dir.join("train.txt"), dir.join("test.txt"))
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.conf");
    let text = format!(
        "# small run\ntrain_path = data/train.txt\ntest_path = data/test.txt\nout_dir = out\n\
         encoder = lightgcn_mean\nlayers = 2\nloss = mscl\nnum_positives = 3\nembedding_dim = 8\n\
         batch_size = 64\nepochs = 6\neval_every = 2\nk = 10\nlearning_rate = 0.01\n{extra}"
    );
    fs::write(&path, text).unwrap();
    path
}

fn setup(extra: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    synth(&dir.path().join("data"), "5");
    let cfg = write_config(dir.path(), extra);
    (dir, cfg)
}

#[test]
fn synth_round_trips_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (tr, te) = synth(&dir.path().join("a"), "9");
    let (tr2, te2) = synth(&dir.path().join("b"), "9");
    assert_eq!(fs::read(&tr).unwrap(), fs::read(&tr2).unwrap());
    assert_eq!(fs::read(&te).unwrap(), fs::read(&te2).unwrap());
    let ds = load_interactions(&tr, &te).unwrap();
    assert_eq!(ds.num_users(), 45);
    let cfg = SyntheticConfig { num_blocks: 3, users_per_block: 15, items_per_block: 12, ..Default::default() };
    // with noise some items fall outside the block; most must not
    let (mut inside, mut total) = (0, 0);
    for u in 0..ds.num_users() {
        for &i in ds.train_positives(u) {
            total += 1;
            inside += usize::from(cfg.item_block(i) == cfg.user_block(u));
        }
    }
    assert!(inside as f64 > 0.8 * total as f64);
    assert!(!mscl(&["synth", "--out", p(&dir.path().join("c")), "--holdout", "1.5"]).status.success());
}

#[test]
fn train_writes_outputs_and_reruns_identically() {
    let (dir, cfg) = setup("");
    let run = |out: &str| {
        let o = mscl(&["train", "--config", p(&cfg), "--out", p(&dir.path().join(out))]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        o
    };
    run("a");
    run("b");
    for f in [EMBEDDINGS_FILE, HISTORY_FILE, MANIFEST_FILE] {
        assert!(dir.path().join("a").join(f).is_file(), "{f}");
    }
    for f in [EMBEDDINGS_FILE, HISTORY_FILE] {
        assert_eq!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap());
    }
    let history = fs::read_to_string(dir.path().join("a").join(HISTORY_FILE)).unwrap();
    assert_eq!(history.lines().count(), 4);

    // the manifest is itself a config that reproduces the run
    let manifest = dir.path().join("a").join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest).unwrap();
    assert!(text.contains("# train_sha256 = "));
    let parsed = RunConfig::parse(&text).unwrap();
    assert_eq!(parsed.train.seed, 2020);
    let o = mscl(&["train", "--config", p(&manifest), "--out", p(&dir.path().join("c"))]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read(dir.path().join("c").join(HISTORY_FILE)).unwrap(), history.as_bytes());
}

#[test]
fn manifest_from_relative_config_reruns_elsewhere() {
    let (dir, _) = setup("");
    let o = Command::new(env!("CARGO_BIN_EXE_mscl"))
        .args(["train", "--config", "run.conf", "--out", "rel"])
        .current_dir(dir.path())
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let first = dir.path().join("rel");
    let manifest = first.join(MANIFEST_FILE);
    let o = mscl(&["train", "--config", p(&manifest), "--out", p(&dir.path().join("again"))]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [EMBEDDINGS_FILE, HISTORY_FILE] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(dir.path().join("again").join(f)).unwrap());
    }
}

#[test]
fn seed_flag_overrides_config() {
    let (dir, cfg) = setup("seed = 3\n");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(mscl(&["train", "--config", p(&cfg), "--out", p(&a)]).status.success());
    assert!(mscl(&["train", "--config", p(&cfg), "--out", p(&b), "--seed", "4"]).status.success());
    assert_ne!(fs::read(a.join(EMBEDDINGS_FILE)).unwrap(), fs::read(b.join(EMBEDDINGS_FILE)).unwrap());
    let manifest = fs::read_to_string(b.join(MANIFEST_FILE)).unwrap();
    assert!(manifest.lines().any(|l| l == "seed = 4"));
}

#[test]
fn invalid_config_exits_two_naming_the_key() {
    let (_dir, cfg) = setup("positive_weight = 1.5\n");
    let o = mscl(&["train", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("positive_weight"));

    let (_dir, cfg) = setup("learnign_rate = 0.1\n");
    let o = mscl(&["train", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("learnign_rate"));
}

#[test]
fn degenerate_training_exits_three() {
    let (_dir, cfg) = setup("init_scale = 0\n");
    let o = mscl(&["train", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

fn parse_eval_stdout(out: &Output) -> (f64, f64) {
    let text = String::from_utf8_lossy(&out.stdout);
    let line = text.lines().find(|l| l.starts_with("recall=")).expect("recall line");
    let mut parts = line.split_whitespace();
    let recall = parts.next().unwrap().trim_start_matches("recall=").parse().unwrap();
    let ndcg = parts.next().unwrap().trim_start_matches("ndcg=").parse().unwrap();
    (recall, ndcg)
}

#[test]
fn eval_matches_final_history_row() {
    let (dir, cfg) = setup("");
    let out = dir.path().join("run");
    assert!(mscl(&["train", "--config", p(&cfg), "--out", p(&out)]).status.success());
    let data = dir.path().join("data");
    let o = mscl(&[
        "eval",
        "--checkpoint",
        p(&out.join(EMBEDDINGS_FILE)),
        "--train",
        p(&data.join("train.txt")),
        "--test",
        p(&data.join("test.txt")),
        "--k",
        "10",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (recall, ndcg) = parse_eval_stdout(&o);
    let history = fs::read_to_string(out.join(HISTORY_FILE)).unwrap();
    let last: Vec<&str> = history.lines().last().unwrap().split(',').collect();
    let (hr, hn): (f64, f64) = (last[2].parse().unwrap(), last[3].parse().unwrap());
    assert!((recall - hr).abs() <= 1e-12 && (ndcg - hn).abs() <= 1e-12);
    let csv = fs::read_to_string(out.join("eval.csv")).unwrap();
    assert!(csv.starts_with("epoch,loss,recall,ndcg,seconds\n"));
}

#[test]
fn eval_one_hot_checkpoint_is_perfect_and_truncation_fails() {
    let dir = tempfile::tempdir().unwrap();
    let (tr, te) = (dir.path().join("train.txt"), dir.path().join("test.txt"));
    fs::write(&tr, "0 1\n1 2\n2 0\n").unwrap();
    fs::write(&te, "0 2\n1 0\n2 1\n").unwrap();
    let users = Table::from_rows(&[vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
    let items = Table::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
    let ckpt = dir.path().join("oracle.bin");
    write_checkpoint(&ckpt, &EmbeddingTable::new(users, items).unwrap()).unwrap();
    let o = mscl(&["eval", "--checkpoint", p(&ckpt), "--train", p(&tr), "--test", p(&te), "--k", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(parse_eval_stdout(&o), (1.0, 1.0));

    let bytes = fs::read(&ckpt).unwrap();
    let cut = dir.path().join("cut.bin");
    fs::write(&cut, &bytes[..bytes.len() - 3]).unwrap();
    let o = mscl(&["eval", "--checkpoint", p(&cut), "--train", p(&tr), "--test", p(&te)]);
    assert_eq!(o.status.code(), Some(2));

    // a checkpoint for a different universe is a shape error
    fs::write(&tr, "0 1\n1 2\n2 0\n3 3\n").unwrap();
    let o = mscl(&["eval", "--checkpoint", p(&ckpt), "--train", p(&tr), "--test", p(&te)]);
    assert_eq!(o.status.code(), Some(2));
}

fn gradcheck(conf: &str, extra: &[&str]) -> Output {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.conf");
    fs::write(&path, conf).unwrap();
    let mut args = vec!["gradcheck", "--config", p(&path)];
    args.extend_from_slice(extra);
    mscl(&args)
}

#[test]
fn gradcheck_exit_codes() {
    let o = gradcheck("loss = cl\n", &["--trials", "100"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let o = gradcheck("loss = mscl\nnum_positives = 5\n", &["--trials", "30"]);
    assert_eq!(o.status.code(), Some(0));
    let o = gradcheck("loss = mscl\nnum_positives = 5\n", &["--trials", "5", "--corrupt-scale", "1.01"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("worst coordinate"));
}
