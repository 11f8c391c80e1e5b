//! Flat `key = value` run configuration. `#` starts a comment; unknown and
//! repeated keys are rejected; missing keys take their defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::encoder::{EncoderConfig, InitScheme};
use crate::error::{Error, Result};
use crate::losses::{LossConfig, LossKind};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub num_users: Option<usize>,
    pub num_items: Option<usize>,
    pub encoder: EncoderConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
    /// Fill the `seconds` column of the history CSV.
    pub record_timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train_path: None,
            test_path: None,
            out_dir: None,
            num_users: None,
            num_items: None,
            encoder: EncoderConfig::default(),
            loss: LossConfig::default(),
            train: TrainConfig::default(),
            record_timing: false,
        }
    }
}

const KEYS: &[&str] = &[
    "train_path",
    "test_path",
    "out_dir",
    "num_users",
    "num_items",
    "k",
    "encoder",
    "layers",
    "layer_weights",
    "output_layer",
    "embedding_dim",
    "init",
    "init_scale",
    "loss",
    "temperature",
    "positive_weight",
    "num_positives",
    "filter_true_positives",
    "positive_replacement",
    "learning_rate",
    "l2_lambda",
    "batch_size",
    "epochs",
    "eval_every",
    "seed",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "early_stop_patience",
    "record_timing",
];

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {raw:?}")))
}

fn parse_optional<T: FromStr>(key: &str, raw: &str) -> Result<Option<T>> {
    if raw == "none" {
        Ok(None)
    } else {
        parse_value(key, raw).map(Some)
    }
}

fn parse_bool(key: &str, raw: &str) -> Result<bool> {
    match raw {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {raw:?}"))),
    }
}

fn show_optional<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), T::to_string)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs: BTreeMap<String, String> = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected `key = value`", n + 1)));
            };
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(Error::Config(format!("line {}: unknown key {key:?}", n + 1)));
            }
            if pairs.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: key {key:?} given twice", n + 1)));
            }
        }

        let mut cfg = RunConfig::default();
        let mut init_kind = "normal".to_string();
        let mut init_scale = None;
        for (key, raw) in &pairs {
            let (k, v) = (key.as_str(), raw.as_str());
            match k {
                "train_path" => cfg.train_path = Some(PathBuf::from(v)),
                "test_path" => cfg.test_path = Some(PathBuf::from(v)),
                "out_dir" => cfg.out_dir = Some(PathBuf::from(v)),
                "num_users" => cfg.num_users = parse_optional(k, v)?,
                "num_items" => cfg.num_items = parse_optional(k, v)?,
                "k" => cfg.train.eval_k = parse_value(k, v)?,
                "encoder" => cfg.encoder.mode = v.parse()?,
                "layers" => cfg.encoder.num_layers = parse_value(k, v)?,
                "layer_weights" => {
                    cfg.encoder.layer_weights = if v == "none" {
                        None
                    } else {
                        Some(v.split(',').map(|w| parse_value(k, w.trim())).collect::<Result<_>>()?)
                    }
                }
                "output_layer" => cfg.encoder.output_layer = parse_optional(k, v)?,
                "embedding_dim" => cfg.train.embedding_dim = parse_value(k, v)?,
                "init" => init_kind = v.to_string(),
                "init_scale" => init_scale = Some(parse_value::<f64>(k, v)?),
                "loss" => cfg.loss.kind = v.parse::<LossKind>()?,
                "temperature" => cfg.loss.temperature = parse_value(k, v)?,
                "positive_weight" => cfg.loss.positive_weight = parse_value(k, v)?,
                "num_positives" => cfg.loss.num_positives = parse_value(k, v)?,
                "filter_true_positives" => cfg.loss.filter_true_positives = parse_bool(k, v)?,
                "positive_replacement" => cfg.train.positive_replacement = parse_bool(k, v)?,
                "learning_rate" => cfg.train.learning_rate = parse_value(k, v)?,
                "l2_lambda" => cfg.train.l2_lambda = parse_value(k, v)?,
                "batch_size" => cfg.train.batch_size = parse_value(k, v)?,
                "epochs" => cfg.train.epochs = parse_value(k, v)?,
                "eval_every" => cfg.train.eval_every = parse_value(k, v)?,
                "seed" => cfg.train.seed = parse_value(k, v)?,
                "adam_beta1" => cfg.train.adam_beta1 = parse_value(k, v)?,
                "adam_beta2" => cfg.train.adam_beta2 = parse_value(k, v)?,
                "adam_eps" => cfg.train.adam_eps = parse_value(k, v)?,
                "early_stop_patience" => cfg.train.early_stop_patience = parse_optional(k, v)?,
                "record_timing" => cfg.record_timing = parse_bool(k, v)?,
                _ => unreachable!("key list checked above"),
            }
        }
        cfg.train.init = match (init_kind.as_str(), init_scale) {
            ("normal", s) => InitScheme::Normal { std: s.unwrap_or(0.1) },
            ("uniform", s) => InitScheme::Uniform { bound: s.unwrap_or(0.1) },
            (other, _) => return Err(Error::Config(format!("init: unknown scheme {other:?}"))),
        };
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::parse(&text)?;
        // relative dataset/output paths are relative to the config file;
        // made absolute so a manifest written elsewhere still resolves
        let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let base = std::path::absolute(dir)?;
        for p in [&mut cfg.train_path, &mut cfg.test_path, &mut cfg.out_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Every key with its resolved value, in a fixed order.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        if let Some(p) = path(&self.train_path) {
            put("train_path", p);
        }
        if let Some(p) = path(&self.test_path) {
            put("test_path", p);
        }
        if let Some(p) = path(&self.out_dir) {
            put("out_dir", p);
        }
        put("num_users", show_optional(&self.num_users));
        put("num_items", show_optional(&self.num_items));
        put("k", self.train.eval_k.to_string());
        put("encoder", self.encoder.mode.as_str().to_string());
        put("layers", self.encoder.num_layers.to_string());
        put(
            "layer_weights",
            self.encoder.layer_weights.as_ref().map_or_else(
                || "none".to_string(),
                |w| w.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
            ),
        );
        put("output_layer", show_optional(&self.encoder.output_layer));
        put("embedding_dim", self.train.embedding_dim.to_string());
        let (init, scale) = match self.train.init {
            InitScheme::Normal { std } => ("normal", std),
            InitScheme::Uniform { bound } => ("uniform", bound),
        };
        put("init", init.to_string());
        put("init_scale", scale.to_string());
        put("loss", self.loss.kind.as_str().to_string());
        put("temperature", self.loss.temperature.to_string());
        put("positive_weight", self.loss.positive_weight.to_string());
        put("num_positives", self.loss.num_positives.to_string());
        put("filter_true_positives", self.loss.filter_true_positives.to_string());
        put("positive_replacement", self.train.positive_replacement.to_string());
        put("learning_rate", self.train.learning_rate.to_string());
        put("l2_lambda", self.train.l2_lambda.to_string());
        put("batch_size", self.train.batch_size.to_string());
        put("epochs", self.train.epochs.to_string());
        put("eval_every", self.train.eval_every.to_string());
        put("seed", self.train.seed.to_string());
        put("adam_beta1", self.train.adam_beta1.to_string());
        put("adam_beta2", self.train.adam_beta2.to_string());
        put("adam_eps", self.train.adam_eps.to_string());
        put("early_stop_patience", show_optional(&self.train.early_stop_patience));
        put("record_timing", self.record_timing.to_string());
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.loss.validate()?;
        self.train.validate()
    }
}
