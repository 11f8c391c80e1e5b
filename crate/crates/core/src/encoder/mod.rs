//! Base embeddings and the linear encoders built on them: plain matrix
//! factorization, LightGCN layer averaging, and the single-layer variant.

mod checkpoint;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};

use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::dataset::InteractionDataset;
use crate::error::{Error, Result};
use crate::graph::NormalizedBipartiteGraph;
use crate::table::Table;

/// One embedding row per user and per item. Used both for the trainable
/// layer-0 parameters and for encoder outputs and gradients of either.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub users: Table,
    pub items: Table,
}

impl EmbeddingTable {
    pub fn zeros(num_users: usize, num_items: usize, dim: usize) -> Self {
        Self {
            users: Table::zeros(num_users, dim),
            items: Table::zeros(num_items, dim),
        }
    }

    pub fn new(users: Table, items: Table) -> Result<Self> {
        if users.dim() != items.dim() {
            return Err(Error::Shape(format!(
                "user dim {} != item dim {}",
                users.dim(),
                items.dim()
            )));
        }
        Ok(Self { users, items })
    }

    pub fn dim(&self) -> usize {
        self.users.dim()
    }

    pub fn num_users(&self) -> usize {
        self.users.rows()
    }

    pub fn num_items(&self) -> usize {
        self.items.rows()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.num_users(), self.num_items(), self.dim())
    }

    pub fn dot(&self, other: &EmbeddingTable) -> f64 {
        self.users.dot(&other.users) + self.items.dot(&other.items)
    }

    pub fn add_scaled(&mut self, scale: f64, other: &EmbeddingTable) -> Result<()> {
        self.users.add_scaled(scale, &other.users)?;
        self.items.add_scaled(scale, &other.items)
    }

    pub fn scale(&mut self, factor: f64) {
        self.users.scale(factor);
        self.items.scale(factor);
    }

    pub fn check_same_shape(&self, other: &EmbeddingTable) -> Result<()> {
        self.users.check_same_shape(&other.users)?;
        self.items.check_same_shape(&other.items)
    }

    pub fn is_finite(&self) -> bool {
        self.users
            .as_slice()
            .iter()
            .chain(self.items.as_slice())
            .all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.users.max_abs().max(self.items.max_abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScheme {
    Normal { std: f64 },
    Uniform { bound: f64 },
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme::Normal { std: 0.1 }
    }
}

/// Draws every entry i.i.d. from `scheme`.
pub fn init_embeddings<R: Rng + ?Sized>(
    dataset: &InteractionDataset,
    dim: usize,
    scheme: InitScheme,
    rng: &mut R,
) -> Result<EmbeddingTable> {
    if dim == 0 {
        return Err(Error::Config("embedding dimension must be at least 1".into()));
    }
    let mut table = EmbeddingTable::zeros(dataset.num_users(), dataset.num_items(), dim);
    let values = table
        .users
        .as_mut_slice()
        .iter_mut()
        .chain(table.items.as_mut_slice().iter_mut());
    match scheme {
        InitScheme::Normal { std } => {
            let dist = Normal::new(0.0, std)
                .map_err(|e| Error::Config(format!("normal init std {std}: {e}")))?;
            values.for_each(|v| *v = dist.sample(rng));
        }
        InitScheme::Uniform { bound } => {
            if !(bound.is_finite() && bound >= 0.0) {
                return Err(Error::Config(format!("uniform init bound {bound} must be finite and >= 0")));
            }
            if bound > 0.0 {
                let dist = Uniform::new_inclusive(-bound, bound)
                    .map_err(|e| Error::Config(format!("uniform init bound {bound}: {e}")))?;
                values.for_each(|v| *v = dist.sample(rng));
            }
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderMode {
    /// Final embeddings are the base embeddings.
    Mf,
    /// Weighted sum of layers `0..=K`.
    LightGcnMean,
    /// Output of a single propagation layer (default the last).
    LightGcnSingle,
}

impl FromStr for EncoderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mf" => Ok(Self::Mf),
            "lightgcn_mean" | "lightgcn" => Ok(Self::LightGcnMean),
            "lightgcn_single" | "slightgcn" => Ok(Self::LightGcnSingle),
            other => Err(Error::Config(format!("unknown encoder mode {other:?}"))),
        }
    }
}

impl EncoderMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Mf => "mf",
            Self::LightGcnMean => "lightgcn_mean",
            Self::LightGcnSingle => "lightgcn_single",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub mode: EncoderMode,
    pub num_layers: usize,
    /// Per-layer weights for `LightGcnMean`; `None` means `1/(K+1)` each.
    pub layer_weights: Option<Vec<f64>>,
    /// Layer emitted by `LightGcnSingle`; `None` means `num_layers`.
    pub output_layer: Option<usize>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            mode: EncoderMode::LightGcnSingle,
            num_layers: 3,
            layer_weights: None,
            output_layer: None,
        }
    }
}

impl EncoderConfig {
    pub fn mf() -> Self {
        Self {
            mode: EncoderMode::Mf,
            num_layers: 0,
            layer_weights: None,
            output_layer: None,
        }
    }

    pub fn lightgcn_mean(num_layers: usize) -> Self {
        Self {
            mode: EncoderMode::LightGcnMean,
            num_layers,
            layer_weights: None,
            output_layer: None,
        }
    }

    pub fn lightgcn_single(num_layers: usize) -> Self {
        Self {
            mode: EncoderMode::LightGcnSingle,
            num_layers,
            layer_weights: None,
            output_layer: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            EncoderMode::Mf => Ok(()),
            EncoderMode::LightGcnMean => {
                if let Some(w) = &self.layer_weights {
                    if w.len() != self.num_layers + 1 {
                        return Err(Error::Config(format!(
                            "layer_weights needs {} entries for {} layers, got {}",
                            self.num_layers + 1,
                            self.num_layers,
                            w.len()
                        )));
                    }
                    let sum: f64 = w.iter().sum();
                    if w.iter().any(|v| !v.is_finite()) || (sum - 1.0).abs() > 1e-9 {
                        return Err(Error::Config(format!("layer_weights must sum to 1, got {sum}")));
                    }
                }
                Ok(())
            }
            EncoderMode::LightGcnSingle => match self.output_layer {
                Some(l) if l > self.num_layers => Err(Error::Config(format!(
                    "output_layer {l} exceeds num_layers {}",
                    self.num_layers
                ))),
                _ => Ok(()),
            },
        }
    }

    /// Coefficients `c_k` of the layer polynomial `Σ_k c_k Ã^k`.
    pub fn layer_coefficients(&self) -> Vec<f64> {
        match self.mode {
            EncoderMode::Mf => vec![1.0],
            EncoderMode::LightGcnMean => self.layer_weights.clone().unwrap_or_else(|| {
                vec![1.0 / (self.num_layers + 1) as f64; self.num_layers + 1]
            }),
            EncoderMode::LightGcnSingle => {
                let layer = self.output_layer.unwrap_or(self.num_layers);
                let mut c = vec![0.0; layer + 1];
                c[layer] = 1.0;
                c
            }
        }
    }
}

/// Applies `Σ_k c_k Ã^k` to a stacked (users, items) table.
fn apply_layer_polynomial(
    input: &EmbeddingTable,
    graph: &NormalizedBipartiteGraph,
    coefficients: &[f64],
) -> Result<EmbeddingTable> {
    if input.num_users() != graph.num_users() || input.num_items() != graph.num_items() {
        return Err(Error::Shape(format!(
            "embeddings {}x{} do not match graph {}x{}",
            input.num_users(),
            input.num_items(),
            graph.num_users(),
            graph.num_items()
        )));
    }
    let mut out = input.zeros_like();
    if coefficients[0] != 0.0 {
        out.add_scaled(coefficients[0], input)?;
    }
    let mut layer = input.clone();
    for &c in &coefficients[1..] {
        let (users, items) = graph.propagate(&layer.users, &layer.items)?;
        layer = EmbeddingTable { users, items };
        if c != 0.0 {
            out.add_scaled(c, &layer)?;
        }
    }
    Ok(out)
}

/// Final user/item embeddings for `config`.
pub fn encode(
    base: &EmbeddingTable,
    graph: &NormalizedBipartiteGraph,
    config: &EncoderConfig,
) -> Result<EmbeddingTable> {
    config.validate()?;
    if config.mode == EncoderMode::Mf {
        return Ok(base.clone());
    }
    apply_layer_polynomial(base, graph, &config.layer_coefficients())
}

/// Pulls a gradient on the final embeddings back to the base embeddings.
/// The encoder is a polynomial in the symmetric operator `Ã`, so its
/// adjoint is the same polynomial.
pub fn backprop_encoder(
    grad_final: &EmbeddingTable,
    graph: &NormalizedBipartiteGraph,
    config: &EncoderConfig,
) -> Result<EmbeddingTable> {
    config.validate()?;
    if config.mode == EncoderMode::Mf {
        return Ok(grad_final.clone());
    }
    apply_layer_polynomial(grad_final, graph, &config.layer_coefficients())
}
