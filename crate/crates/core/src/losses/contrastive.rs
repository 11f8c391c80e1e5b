//! Cosine/temperature contrastive losses with in-batch negatives.
//!
//! Per row `n` of path `m`:
//!
//! ```text
//! ℓ = -( a · f(u, i⁺)/τ  -  b · log Σ_{j ∈ I⁻} exp(f(u, j)/τ) )
//! ```
//!
//! with `(a, b) = (1, 1)` for CL and `(α, 1-α)` for the importance-aware
//! form. `I⁻` is the set of other path-`m` items in the batch.

use super::{unit_row, unnormalize_grad, LossOutput};
use crate::dataset::{InteractionDataset, TrainingBatch};
use crate::encoder::EmbeddingTable;
use crate::error::{Entity, Error, Result};
use crate::table::{axpy, dot};

/// Contrastive loss on the anchor column.
pub fn loss_cl(
    batch: &TrainingBatch,
    finals: &EmbeddingTable,
    tau: f64,
    filter: Option<&InteractionDataset>,
) -> Result<LossOutput> {
    weighted_paths(batch, finals, tau, (1.0, 1.0), 1, filter)
}

/// Importance-aware contrastive loss on the anchor column.
pub fn loss_icl(
    batch: &TrainingBatch,
    finals: &EmbeddingTable,
    tau: f64,
    alpha: f64,
    filter: Option<&InteractionDataset>,
) -> Result<LossOutput> {
    check_alpha(alpha)?;
    weighted_paths(batch, finals, tau, (alpha, 1.0 - alpha), 1, filter)
}

/// Sum of `num_paths` CL losses, path `m` using column `m`.
pub fn loss_mcl(
    batch: &TrainingBatch,
    finals: &EmbeddingTable,
    tau: f64,
    num_paths: usize,
    filter: Option<&InteractionDataset>,
) -> Result<LossOutput> {
    weighted_paths(batch, finals, tau, (1.0, 1.0), num_paths, filter)
}

/// Sum of `num_paths` importance-aware losses.
pub fn loss_mscl(
    batch: &TrainingBatch,
    finals: &EmbeddingTable,
    tau: f64,
    alpha: f64,
    num_paths: usize,
    filter: Option<&InteractionDataset>,
) -> Result<LossOutput> {
    check_alpha(alpha)?;
    weighted_paths(batch, finals, tau, (alpha, 1.0 - alpha), num_paths, filter)
}

pub(super) fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("positive_weight must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

pub(super) fn check_tau(tau: f64) -> Result<()> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Config(format!("temperature must be > 0, got {tau}")));
    }
    Ok(())
}

pub(super) fn check_paths(batch: &TrainingBatch, num_paths: usize) -> Result<()> {
    if num_paths == 0 {
        return Err(Error::Config("num_positives must be at least 1".into()));
    }
    if batch.positives.iter().any(|row| row.len() < num_paths) {
        return Err(Error::Config(format!(
            "loss needs {num_paths} positive columns, batch has {}",
            batch.num_positives()
        )));
    }
    Ok(())
}

fn weighted_paths(
    batch: &TrainingBatch,
    finals: &EmbeddingTable,
    tau: f64,
    (pos_w, neg_w): (f64, f64),
    num_paths: usize,
    filter: Option<&InteractionDataset>,
) -> Result<LossOutput> {
    check_tau(tau)?;
    check_paths(batch, num_paths)?;
    let mut out = LossOutput::default();
    if batch.is_empty() {
        return Ok(out);
    }
    let scale = 1.0 / batch.len() as f64;
    let dim = finals.dim();

    // rows of the same user share their cosines, so work per distinct user
    let mut user_ids = batch.users.clone();
    user_ids.sort_unstable();
    user_ids.dedup();
    let row_user: Vec<usize> = batch
        .users
        .iter()
        .map(|u| user_ids.binary_search(u).expect("user id collected above"))
        .collect();
    let users: Vec<(Vec<f64>, f64)> = user_ids
        .iter()
        .map(|&u| unit_row(finals, Entity::User(u)))
        .collect::<Result<_>>()?;
    // gradient w.r.t. each normalised user vector, summed over paths
    let mut user_grads = vec![vec![0.0; dim]; users.len()];

    for m in 0..num_paths {
        let mut candidates: Vec<usize> = batch.column(m).collect();
        candidates.sort_unstable();
        candidates.dedup();
        let c = candidates.len();
        let items: Vec<(Vec<f64>, f64)> = candidates
            .iter()
            .map(|&i| unit_row(finals, Entity::Item(i)))
            .collect::<Result<_>>()?;

        let mut logits = vec![0.0; users.len() * c];
        for (a, (u_hat, _)) in users.iter().enumerate() {
            for (j, (v_hat, _)) in items.iter().enumerate() {
                logits[a * c + j] = dot(u_hat, v_hat) / tau;
            }
        }
        let masks: Vec<Vec<bool>> = user_ids
            .iter()
            .map(|&u| filtered_mask(&candidates, filter.map(|ds| ds.train_positives(u))))
            .collect();
        // d loss / d (cosine / τ · τ) per (user, candidate)
        let mut coefs = vec![0.0; users.len() * c];

        // softmax over the candidates left after filtering, once per user
        let shared: Vec<Option<Softmax>> = (0..users.len())
            .map(|a| Softmax::new(&logits[a * c..(a + 1) * c], |j| !masks[a][j]))
            .collect();
        // Σ 1/Z over the rows of each user that reuse `shared`
        let mut inv_totals = vec![0.0; users.len()];
        let neg_k = scale * neg_w / tau;

        for (n, &a) in row_user.iter().enumerate() {
            let pos = candidates
                .binary_search(&batch.positives[n][m])
                .expect("row item is a candidate");
            let row = &logits[a * c..(a + 1) * c];
            let Some(sm) = &shared[a] else {
                out.skipped_rows += 1;
                continue;
            };
            let w_pos = if masks[a][pos] { 0.0 } else { sm.weights[pos] };
            if w_pos <= 0.5 * sm.total {
                // dropping the row's own item costs one subtraction
                let total = sm.total - w_pos;
                out.value += -scale * (pos_w * row[pos] - neg_w * (sm.max + total.ln()));
                inv_totals[a] += 1.0 / total;
                coefs[a * c + pos] -= neg_k * w_pos / total;
            } else {
                // the own item dominates; redo the softmax without it
                let Some(own) = Softmax::new(row, |j| j != pos && !masks[a][j]) else {
                    out.skipped_rows += 1;
                    continue;
                };
                out.value += -scale * (pos_w * row[pos] - neg_w * own.lse());
                for (slot, &w) in coefs[a * c..(a + 1) * c].iter_mut().zip(&own.weights) {
                    *slot += neg_k * w / own.total;
                }
            }
            coefs[a * c + pos] -= scale * pos_w / tau;
        }
        for (a, sm) in shared.iter().enumerate() {
            if let Some(sm) = sm {
                for (slot, &w) in coefs[a * c..(a + 1) * c].iter_mut().zip(&sm.weights) {
                    *slot += neg_k * w * inv_totals[a];
                }
            }
        }

        let mut item_grads = vec![vec![0.0; dim]; c];
        for (a, (u_hat, _)) in users.iter().enumerate() {
            for (j, (v_hat, _)) in items.iter().enumerate() {
                let coef = coefs[a * c + j];
                if coef != 0.0 {
                    axpy(coef, v_hat, &mut user_grads[a]);
                    axpy(coef, u_hat, &mut item_grads[j]);
                }
            }
        }
        for ((&i, (v_hat, v_norm)), g) in candidates.iter().zip(&items).zip(&item_grads) {
            out.grads.add(Entity::Item(i), 1.0, &unnormalize_grad(g, v_hat, *v_norm));
        }
    }

    for ((&u, (u_hat, u_norm)), g) in user_ids.iter().zip(&users).zip(&user_grads) {
        out.grads.add(Entity::User(u), 1.0, &unnormalize_grad(g, u_hat, *u_norm));
    }
    if out.skipped_rows > 0 {
        log::debug!("{} row(s) had no in-batch negatives and were skipped", out.skipped_rows);
    }
    Ok(out)
}

/// Max-shifted exponentials over the allowed entries of a logit row.
struct Softmax {
    max: f64,
    weights: Vec<f64>,
    total: f64,
}

impl Softmax {
    fn new(logits: &[f64], allowed: impl Fn(usize) -> bool) -> Option<Self> {
        let max = (0..logits.len())
            .filter(|&j| allowed(j))
            .fold(f64::NEG_INFINITY, |acc, j| acc.max(logits[j]));
        if max == f64::NEG_INFINITY {
            return None;
        }
        let weights: Vec<f64> = logits
            .iter()
            .enumerate()
            .map(|(j, &l)| if allowed(j) { (l - max).exp() } else { 0.0 })
            .collect();
        let total = weights.iter().sum();
        Some(Self { max, weights, total })
    }

    fn lse(&self) -> f64 {
        self.max + self.total.ln()
    }
}

/// Marks candidates that are train positives of the user. Both inputs are
/// sorted, so a single merge pass suffices.
fn filtered_mask(candidates: &[usize], user_positives: Option<&[usize]>) -> Vec<bool> {
    let mut mask = vec![false; candidates.len()];
    if let Some(pos) = user_positives {
        let mut p = 0;
        for (j, &item) in candidates.iter().enumerate() {
            while p < pos.len() && pos[p] < item {
                p += 1;
            }
            if p < pos.len() && pos[p] == item {
                mask[j] = true;
            }
        }
    }
    mask
}
