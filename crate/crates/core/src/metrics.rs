//! Full-ranking evaluation: every item is scored by inner product, train
//! positives are excluded, and Recall@K / NDCG@K are averaged over users
//! with a non-empty test set.

use std::cmp::Ordering;
use std::thread;

use crate::dataset::InteractionDataset;
use crate::encoder::EmbeddingTable;
use crate::error::{Error, Result};
use crate::table::dot;

/// Environment variable holding the evaluation thread count.
pub const EVAL_THREADS_ENV: &str = "MSCL_EVAL_THREADS";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub recall: f64,
    pub ndcg: f64,
    pub k: usize,
    pub num_users_evaluated: usize,
}

/// Higher score first, then lower item id.
fn rank_order(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Top-`k` items for `user` by `e_u · e_i`, skipping the sorted `exclude`
/// list. Returns fewer than `k` items when there are not enough candidates.
pub fn rank_items(finals: &EmbeddingTable, user: usize, exclude: &[usize], k: usize) -> Vec<usize> {
    let eu = finals.users.row(user);
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(finals.num_items());
    let mut ex = exclude.iter().peekable();
    for i in 0..finals.num_items() {
        while ex.next_if(|&&e| e < i).is_some() {}
        if ex.next_if_eq(&&i).is_some() {
            continue;
        }
        // + 0.0 folds -0.0 into 0.0 so the two tie under total_cmp
        scored.push((dot(eu, finals.items.row(i)) + 0.0, i));
    }
    if k < scored.len() {
        scored.select_nth_unstable_by(k, rank_order);
        scored.truncate(k);
    } else if k > scored.len() {
        log::warn!(
            "user {user}: only {} candidates for k = {k}; returning a truncated list",
            scored.len()
        );
    }
    scored.sort_unstable_by(rank_order);
    scored.into_iter().map(|(_, i)| i).collect()
}

/// `|ranked ∩ test| / |test|`; `test` must be sorted and non-empty.
pub fn recall_at_k(ranked: &[usize], test: &[usize]) -> f64 {
    let hits = ranked.iter().filter(|i| test.binary_search(i).is_ok()).count();
    hits as f64 / test.len() as f64
}

/// Binary-relevance NDCG with `1/log2(p+1)` discounts; the ideal DCG is
/// truncated at `min(|test|, k)` positions. `test` must be sorted.
pub fn ndcg_at_k(ranked: &[usize], test: &[usize], k: usize) -> f64 {
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| test.binary_search(i).is_ok())
        .map(|(p, _)| 1.0 / ((p + 2) as f64).log2())
        .sum();
    let idcg: f64 = (0..test.len().min(k)).map(|p| 1.0 / ((p + 2) as f64).log2()).sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

/// Thread count from `MSCL_EVAL_THREADS`, default 1.
pub fn eval_threads_from_env() -> usize {
    std::env::var(EVAL_THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n >= 1)
        .unwrap_or(1)
}

pub fn evaluate(dataset: &InteractionDataset, finals: &EmbeddingTable, k: usize) -> Result<EvalResult> {
    evaluate_with_threads(dataset, finals, k, 1)
}

/// Same as [`evaluate`] but splits users across `threads` workers. Per-user
/// scores are reduced in user order, so the result does not depend on the
/// thread count.
pub fn evaluate_with_threads(
    dataset: &InteractionDataset,
    finals: &EmbeddingTable,
    k: usize,
    threads: usize,
) -> Result<EvalResult> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if finals.num_users() != dataset.num_users() || finals.num_items() != dataset.num_items() {
        return Err(Error::Shape(format!(
            "embeddings cover {} users / {} items, dataset has {} / {}",
            finals.num_users(),
            finals.num_items(),
            dataset.num_users(),
            dataset.num_items()
        )));
    }
    let users: Vec<usize> = (0..dataset.num_users())
        .filter(|&u| !dataset.test_positives(u).is_empty())
        .collect();
    if users.is_empty() {
        return Err(Error::Empty("no user has a non-empty test set".into()));
    }
    let score = |u: usize| {
        let test = dataset.test_positives(u);
        let ranked = rank_items(finals, u, dataset.train_positives(u), k);
        (recall_at_k(&ranked, test), ndcg_at_k(&ranked, test, k))
    };
    let threads = threads.clamp(1, users.len());
    let per_user: Vec<(f64, f64)> = if threads == 1 {
        users.iter().map(|&u| score(u)).collect()
    } else {
        let chunk = users.len().div_ceil(threads);
        thread::scope(|s| {
            let handles: Vec<_> = users
                .chunks(chunk)
                .map(|part| s.spawn(move || part.iter().map(|&u| score(u)).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("evaluation worker panicked"))
                .collect()
        })
    };
    let n = per_user.len() as f64;
    let (recall, ndcg) = per_user
        .iter()
        .fold((0.0, 0.0), |(r, g), &(ur, ug)| (r + ur, g + ug));
    Ok(EvalResult {
        recall: recall / n,
        ndcg: ndcg / n,
        k,
        num_users_evaluated: per_user.len(),
    })
}

pub const EVAL_CSV_HEADER: &str = "epoch,loss,recall,ndcg,seconds";

/// Evaluation report in the history CSV layout; epoch, loss and seconds
/// are left empty.
pub fn eval_report_csv(result: &EvalResult) -> String {
    format!("{EVAL_CSV_HEADER}\n,,{},{},\n", result.recall, result.ndcg)
}
