//! Pairwise losses with one sampled negative per row.

use super::contrastive::{check_alpha, check_paths, check_tau};
use super::{check_row, sigmoid, softplus, unit_row, unnormalize_grad, LossOutput};
use crate::dataset::TrainingBatch;
use crate::encoder::EmbeddingTable;
use crate::error::{Entity, Error, Result};
use crate::table::dot;

fn negatives(batch: &TrainingBatch) -> Result<&[usize]> {
    match &batch.negatives {
        Some(neg) if neg.len() == batch.len() => Ok(neg),
        Some(neg) => Err(Error::Shape(format!("{} negatives for {} rows", neg.len(), batch.len()))),
        None => Err(Error::Config("this loss needs one sampled negative per row".into())),
    }
}

/// Mean over rows of `-log σ(ŷ_ui - ŷ_uj)` with inner-product scores.
pub fn loss_bpr(batch: &TrainingBatch, finals: &EmbeddingTable) -> Result<LossOutput> {
    let neg = negatives(batch)?;
    check_paths(batch, 1)?;
    let mut out = LossOutput::default();
    if batch.is_empty() {
        return Ok(out);
    }
    let scale = 1.0 / batch.len() as f64;
    for (r, &u) in batch.users.iter().enumerate() {
        let (i, j) = (batch.positives[r][0], neg[r]);
        check_row(finals.num_users(), Entity::User(u))?;
        check_row(finals.num_items(), Entity::Item(i))?;
        check_row(finals.num_items(), Entity::Item(j))?;
        let (eu, ei, ej) = (finals.users.row(u), finals.items.row(i), finals.items.row(j));
        let margin = dot(eu, ei) - dot(eu, ej);
        out.value += scale * softplus(-margin);
        // d/d margin of softplus(-margin) = -σ(-margin)
        let coef = -scale * sigmoid(-margin);
        let diff: Vec<f64> = ei.iter().zip(ej).map(|(a, b)| a - b).collect();
        out.grads.add(Entity::User(u), coef, &diff);
        out.grads.add(Entity::Item(i), coef, eu);
        out.grads.add(Entity::Item(j), -coef, eu);
    }
    Ok(out)
}

/// Multi-path BPR on cosine scores: for each path `m`, the row mean of
/// `-log σ( α·f(u, i⁺_m)/τ - (1-α)·f(u, i⁻)/τ )`, summed over paths.
pub fn loss_msbpr(
    batch: &TrainingBatch,
    finals: &EmbeddingTable,
    tau: f64,
    alpha: f64,
    num_paths: usize,
) -> Result<LossOutput> {
    check_tau(tau)?;
    check_alpha(alpha)?;
    let neg = negatives(batch)?;
    check_paths(batch, num_paths)?;
    let mut out = LossOutput::default();
    if batch.is_empty() {
        return Ok(out);
    }
    let scale = 1.0 / batch.len() as f64;
    let dim = finals.dim();
    for (r, &u) in batch.users.iter().enumerate() {
        let (u_hat, u_norm) = unit_row(finals, Entity::User(u))?;
        let (n_hat, n_norm) = unit_row(finals, Entity::Item(neg[r]))?;
        let f_neg = dot(&u_hat, &n_hat);
        let mut g_user = vec![0.0; dim];
        let mut g_neg = vec![0.0; dim];
        for m in 0..num_paths {
            let item = batch.positives[r][m];
            let (p_hat, p_norm) = unit_row(finals, Entity::Item(item))?;
            let f_pos = dot(&u_hat, &p_hat);
            let x = (alpha * f_pos - (1.0 - alpha) * f_neg) / tau;
            out.value += scale * softplus(-x);
            let dx = -scale * sigmoid(-x);
            let c_pos = dx * alpha / tau;
            let c_neg = -dx * (1.0 - alpha) / tau;
            for k in 0..dim {
                g_user[k] += c_pos * p_hat[k] + c_neg * n_hat[k];
                g_neg[k] += c_neg * u_hat[k];
            }
            let g_pos: Vec<f64> = u_hat.iter().map(|v| c_pos * v).collect();
            out.grads.add(Entity::Item(item), 1.0, &unnormalize_grad(&g_pos, &p_hat, p_norm));
        }
        out.grads.add(Entity::User(u), 1.0, &unnormalize_grad(&g_user, &u_hat, u_norm));
        out.grads.add(Entity::Item(neg[r]), 1.0, &unnormalize_grad(&g_neg, &n_hat, n_norm));
    }
    Ok(out)
}
