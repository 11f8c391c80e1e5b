//! Central finite-difference checks of the analytic gradients, on small
//! random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{sample_batch, InteractionDataset, SamplerConfig, TrainingBatch};
use crate::encoder::{EmbeddingTable, EncoderConfig};
use crate::error::{Entity, Result};
use crate::graph::NormalizedBipartiteGraph;
use crate::losses::{compute_loss, l2_regularization, LossConfig};
use crate::table::Table;
use crate::trainer::batch_objective;

pub const FD_STEP: f64 = 1e-6;
/// Gradient magnitudes below this are compared in absolute terms.
pub const RELATIVE_FLOOR: f64 = 1e-3;

/// `|a - n| / max(|a|, |n|, RELATIVE_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coordinate {
    pub trial: usize,
    pub entity: Entity,
    pub component: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradcheckReport {
    pub trials: usize,
    pub coordinates: usize,
    pub max_relative_error: f64,
    pub worst: Option<Coordinate>,
}

impl GradcheckReport {
    fn absorb(&mut self, other: GradcheckReport) {
        self.trials += other.trials;
        self.coordinates += other.coordinates;
        if other.max_relative_error > self.max_relative_error || self.worst.is_none() {
            self.max_relative_error = other.max_relative_error;
            self.worst = other.worst.or(self.worst);
        }
    }
}

/// Compares `analytic` against central differences of `f` at `point`,
/// coordinate by coordinate.
pub fn compare_with_fd(
    trial: usize,
    point: &EmbeddingTable,
    analytic: &EmbeddingTable,
    mut f: impl FnMut(&EmbeddingTable) -> Result<f64>,
) -> Result<GradcheckReport> {
    let mut report = GradcheckReport {
        trials: 1,
        ..Default::default()
    };
    let mut probe = point.clone();
    let dim = point.dim();
    let sides: [(usize, fn(usize) -> Entity); 2] = [(point.num_users(), Entity::User), (point.num_items(), Entity::Item)];
    for (side, (rows, entity)) in sides.into_iter().enumerate() {
        for r in 0..rows {
            for k in 0..dim {
                let idx = r * dim + k;
                let original = *slot(&mut probe, side, idx);
                *slot(&mut probe, side, idx) = original + FD_STEP;
                let plus = f(&probe)?;
                *slot(&mut probe, side, idx) = original - FD_STEP;
                let minus = f(&probe)?;
                *slot(&mut probe, side, idx) = original;
                let numeric = (plus - minus) / (2.0 * FD_STEP);
                let a = if side == 0 {
                    analytic.users.as_slice()[idx]
                } else {
                    analytic.items.as_slice()[idx]
                };
                let err = relative_error(a, numeric);
                report.coordinates += 1;
                if err > report.max_relative_error || report.worst.is_none() {
                    report.max_relative_error = err;
                    report.worst = Some(Coordinate {
                        trial,
                        entity: entity(r),
                        component: k,
                        analytic: a,
                        numeric,
                    });
                }
            }
        }
    }
    Ok(report)
}

fn slot(t: &mut EmbeddingTable, side: usize, idx: usize) -> &mut f64 {
    let table = if side == 0 { &mut t.users } else { &mut t.items };
    &mut table.as_mut_slice()[idx]
}

/// A small random dataset and batch shaped for `loss`.
pub fn random_instance<R: Rng + ?Sized>(loss: &LossConfig, rng: &mut R) -> Result<(InteractionDataset, TrainingBatch)> {
    let num_users = rng.random_range(3..=8);
    let num_items = rng.random_range(6..=12);
    let train: Vec<Vec<usize>> = (0..num_users)
        .map(|_| {
            let count = rng.random_range(1..=4);
            (0..count).map(|_| rng.random_range(0..num_items)).collect()
        })
        .collect();
    let ds = InteractionDataset::new(num_users, num_items, train, vec![])?;
    let sampler = SamplerConfig {
        batch_size: rng.random_range(2..=16),
        num_positives: loss.columns_needed(),
        with_negative: loss.kind.needs_negative(),
        positive_replacement: false,
    };
    let batch = sample_batch(&ds, &sampler, rng)?;
    Ok((ds, batch))
}

pub fn random_table<R: Rng + ?Sized>(num_users: usize, num_items: usize, dim: usize, rng: &mut R) -> EmbeddingTable {
    let mut draw = |rows: usize| {
        let data = (0..rows * dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
        Table::from_vec(rows, dim, data).expect("sized to fit")
    };
    let users = draw(num_users);
    let items = draw(num_items);
    EmbeddingTable { users, items }
}

/// Multiplies the analytic gradient of the batch's first user by `factor`.
fn corrupt(grad: &mut EmbeddingTable, batch: &TrainingBatch, factor: Option<f64>) {
    if let (Some(f), Some(&u)) = (factor, batch.users.first()) {
        grad.users.row_mut(u).iter_mut().for_each(|v| *v *= f);
    }
}

/// Loss gradients with respect to the final embeddings.
pub fn check_loss(loss: &LossConfig, trials: usize, seed: u64, corruption: Option<f64>) -> Result<GradcheckReport> {
    loss.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradcheckReport::default();
    for trial in 0..trials {
        let (ds, batch) = random_instance(loss, &mut rng)?;
        let dim = rng.random_range(2..=8);
        let finals = random_table(ds.num_users(), ds.num_items(), dim, &mut rng);
        let out = compute_loss(loss, &batch, &ds, &finals)?;
        let mut grad = finals.zeros_like();
        out.grads.scatter_into(&mut grad)?;
        corrupt(&mut grad, &batch, corruption);
        report.absorb(compare_with_fd(trial, &finals, &grad, |t| {
            compute_loss(loss, &batch, &ds, t).map(|o| o.value)
        })?);
    }
    Ok(report)
}

/// L2 regularizer gradients on the base embeddings.
pub fn check_l2(lambda: f64, trials: usize, seed: u64) -> Result<GradcheckReport> {
    let loss = LossConfig {
        kind: crate::losses::LossKind::Msbpr,
        num_positives: 3,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradcheckReport::default();
    for trial in 0..trials {
        let (ds, batch) = random_instance(&loss, &mut rng)?;
        let dim = rng.random_range(2..=8);
        let base = random_table(ds.num_users(), ds.num_items(), dim, &mut rng);
        let mut grad = base.zeros_like();
        l2_regularization(&base, &batch, lambda)?.grads.scatter_into(&mut grad)?;
        report.absorb(compare_with_fd(trial, &base, &grad, |t| {
            l2_regularization(t, &batch, lambda).map(|o| o.value)
        })?);
    }
    Ok(report)
}

/// Gradient of loss + L2 with respect to the base embeddings, through the
/// encoder.
pub fn check_end_to_end(
    loss: &LossConfig,
    encoder: &EncoderConfig,
    l2_lambda: f64,
    trials: usize,
    seed: u64,
    corruption: Option<f64>,
) -> Result<GradcheckReport> {
    loss.validate()?;
    encoder.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradcheckReport::default();
    for trial in 0..trials {
        let (ds, batch) = random_instance(loss, &mut rng)?;
        let graph = NormalizedBipartiteGraph::build(&ds);
        let dim = rng.random_range(2..=8);
        let base = random_table(ds.num_users(), ds.num_items(), dim, &mut rng);
        let mut grad = batch_objective(&base, &batch, &ds, &graph, encoder, loss, l2_lambda)?.grad;
        corrupt(&mut grad, &batch, corruption);
        report.absorb(compare_with_fd(trial, &base, &grad, |t| {
            batch_objective(t, &batch, &ds, &graph, encoder, loss, l2_lambda).map(|o| o.total())
        })?);
    }
    Ok(report)
}
