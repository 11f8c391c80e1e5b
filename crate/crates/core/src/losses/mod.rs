//! Ranking and contrastive objectives with analytic gradients on the final
//! embeddings of batch participants.
//!
//! Every loss is averaged over batch rows. Multi-path losses sum their
//! per-path averages, so `M` paths contribute `M` times the signal of one.

mod contrastive;
mod pairwise;

pub use contrastive::{loss_cl, loss_icl, loss_mcl, loss_mscl};
pub use pairwise::{loss_bpr, loss_msbpr};

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::dataset::{InteractionDataset, TrainingBatch};
use crate::encoder::EmbeddingTable;
use crate::error::{Entity, Error, Result};
use crate::table::{axpy, dot, norm};

/// Norms below this are treated as degenerate by the cosine losses.
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Bpr,
    Cl,
    Icl,
    Mcl,
    Mscl,
    Msbpr,
}

impl LossKind {
    pub const ALL: [LossKind; 6] = [
        LossKind::Bpr,
        LossKind::Cl,
        LossKind::Icl,
        LossKind::Mcl,
        LossKind::Mscl,
        LossKind::Msbpr,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Bpr => "bpr",
            Self::Cl => "cl",
            Self::Icl => "icl",
            Self::Mcl => "mcl",
            Self::Mscl => "mscl",
            Self::Msbpr => "msbpr",
        }
    }

    /// BPR-style losses need one sampled negative per row.
    pub fn needs_negative(&self) -> bool {
        matches!(self, Self::Bpr | Self::Msbpr)
    }

    /// Whether the loss reads more than the anchor column.
    pub fn is_multi_path(&self) -> bool {
        matches!(self, Self::Mcl | Self::Mscl | Self::Msbpr)
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown loss kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub kind: LossKind,
    pub temperature: f64,
    /// Weight `α` on the positive term (ICL, MSCL, MSBPR).
    pub positive_weight: f64,
    /// Paths `M` (MCL, MSCL, MSBPR).
    pub num_positives: usize,
    /// Drop in-batch candidates that are train positives of the anchor user.
    pub filter_true_positives: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            kind: LossKind::Mscl,
            temperature: 0.2,
            positive_weight: 0.5,
            num_positives: 5,
            filter_true_positives: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Config(format!("temperature must be > 0, got {}", self.temperature)));
        }
        if !(0.0..=1.0).contains(&self.positive_weight) {
            return Err(Error::Config(format!(
                "positive_weight must lie in [0, 1], got {}",
                self.positive_weight
            )));
        }
        if self.num_positives == 0 {
            return Err(Error::Config("num_positives must be at least 1".into()));
        }
        Ok(())
    }

    /// Positive columns the sampler has to provide.
    pub fn columns_needed(&self) -> usize {
        if self.kind.is_multi_path() {
            self.num_positives
        } else {
            1
        }
    }
}

/// Sparse gradient: one `d`-vector per entity that appeared in the batch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradMap {
    entries: BTreeMap<Entity, Vec<f64>>,
}

impl GradMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// `grads[entity] += scale * v`
    pub fn add(&mut self, entity: Entity, scale: f64, v: &[f64]) {
        let slot = self.entries.entry(entity).or_insert_with(|| vec![0.0; v.len()]);
        axpy(scale, v, slot);
    }

    pub fn get(&self, entity: Entity) -> Option<&[f64]> {
        self.entries.get(&entity).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Entity, &[f64])> {
        self.entries.iter().map(|(e, v)| (*e, v.as_slice()))
    }

    pub fn merge(&mut self, other: &GradMap) {
        for (e, v) in other.iter() {
            self.add(e, 1.0, v);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.entries.values_mut() {
            v.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// Adds every entry into the matching row of a dense table.
    pub fn scatter_into(&self, target: &mut EmbeddingTable) -> Result<()> {
        for (e, v) in self.iter() {
            let row = match e {
                Entity::User(u) if u < target.num_users() => target.users.row_mut(u),
                Entity::Item(i) if i < target.num_items() => target.items.row_mut(i),
                _ => return Err(Error::Shape(format!("{e} is outside the embedding table"))),
            };
            axpy(1.0, v, row);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grads: GradMap,
    /// Rows dropped because they had no in-batch negatives.
    pub skipped_rows: usize,
}

/// `a·b / (‖a‖‖b‖)`, clamped to `[-1, 1]`.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    let (na, nb) = (norm(a), norm(b));
    for n in [na, nb] {
        if !(n >= NORM_FLOOR && n.is_finite()) {
            return Err(Error::DegenerateVector { entity: None, norm: n });
        }
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Evaluates the loss selected by `config` on the final embeddings.
pub fn compute_loss(
    config: &LossConfig,
    batch: &TrainingBatch,
    dataset: &InteractionDataset,
    finals: &EmbeddingTable,
) -> Result<LossOutput> {
    config.validate()?;
    let filter = config.filter_true_positives.then_some(dataset);
    let (tau, alpha, m) = (config.temperature, config.positive_weight, config.num_positives);
    match config.kind {
        LossKind::Bpr => loss_bpr(batch, finals),
        LossKind::Cl => loss_cl(batch, finals, tau, filter),
        LossKind::Icl => loss_icl(batch, finals, tau, alpha, filter),
        LossKind::Mcl => loss_mcl(batch, finals, tau, m, filter),
        LossKind::Mscl => loss_mscl(batch, finals, tau, alpha, m, filter),
        LossKind::Msbpr => loss_msbpr(batch, finals, tau, alpha, m),
    }
}

/// `(λ / 2N) Σ ‖e‖²` over the base embeddings of every user, positive and
/// negative occurrence in the batch. Gradients are on the base table.
pub fn l2_regularization(base: &EmbeddingTable, batch: &TrainingBatch, lambda: f64) -> Result<LossOutput> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Config(format!("l2_lambda must be >= 0, got {lambda}")));
    }
    let mut out = LossOutput::default();
    if lambda == 0.0 || batch.is_empty() {
        return Ok(out);
    }
    let n = batch.len() as f64;
    let mut visit = |entity: Entity, row: &[f64]| {
        out.value += lambda / (2.0 * n) * dot(row, row);
        out.grads.add(entity, lambda / n, row);
    };
    for (r, &u) in batch.users.iter().enumerate() {
        check_row(base.num_users(), Entity::User(u))?;
        visit(Entity::User(u), base.users.row(u));
        for &i in &batch.positives[r] {
            check_row(base.num_items(), Entity::Item(i))?;
            visit(Entity::Item(i), base.items.row(i));
        }
        if let Some(neg) = &batch.negatives {
            check_row(base.num_items(), Entity::Item(neg[r]))?;
            visit(Entity::Item(neg[r]), base.items.row(neg[r]));
        }
    }
    Ok(out)
}

pub(crate) fn check_row(rows: usize, entity: Entity) -> Result<()> {
    let id = match entity {
        Entity::User(u) => u,
        Entity::Item(i) => i,
    };
    if id >= rows {
        return Err(Error::Shape(format!("{entity} is outside a table of {rows} rows")));
    }
    Ok(())
}

/// Row of `entity` in `table`, normalised, plus its norm.
pub(crate) fn unit_row(table: &EmbeddingTable, entity: Entity) -> Result<(Vec<f64>, f64)> {
    let row = match entity {
        Entity::User(u) => {
            check_row(table.num_users(), entity)?;
            table.users.row(u)
        }
        Entity::Item(i) => {
            check_row(table.num_items(), entity)?;
            table.items.row(i)
        }
    };
    let n = norm(row);
    if !(n >= NORM_FLOOR && n.is_finite()) {
        return Err(Error::DegenerateVector {
            entity: Some(entity),
            norm: n,
        });
    }
    Ok((row.iter().map(|v| v / n).collect(), n))
}

/// Converts a gradient with respect to `x̂ = x/‖x‖` into one with respect
/// to `x`: `(g - (g·x̂) x̂) / ‖x‖`.
pub(crate) fn unnormalize_grad(g: &[f64], unit: &[f64], norm: f64) -> Vec<f64> {
    let proj = dot(g, unit);
    g.iter().zip(unit).map(|(gi, ui)| (gi - proj * ui) / norm).collect()
}
