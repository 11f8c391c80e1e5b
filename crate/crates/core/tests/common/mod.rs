//! Independent oracles shared by the integration tests. Nothing here calls
//! the library's numerical kernels; it only reads plain data out of it.
#![allow(dead_code)]

use mscl::dataset::{InteractionDataset, TrainingBatch};
use mscl::encoder::EmbeddingTable;
use mscl::table::Table;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub type Dense = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random train edges with probability `p`; one further non-train item per
/// user goes to test with probability 1/2.
pub fn random_dataset<R: Rng>(rng: &mut R, num_users: usize, num_items: usize, p: f64) -> InteractionDataset {
    let mut train = vec![Vec::new(); num_users];
    let mut test = vec![Vec::new(); num_users];
    for u in 0..num_users {
        for i in 0..num_items {
            if rng.random_bool(p) {
                train[u].push(i);
            }
        }
        let rest: Vec<usize> = (0..num_items).filter(|i| !train[u].contains(i)).collect();
        if let Some(&i) = rest.choose(rng) {
            if rng.random_bool(0.5) {
                test[u].push(i);
            }
        }
    }
    InteractionDataset::new(num_users, num_items, train, test).unwrap()
}

pub fn random_table<R: Rng>(rng: &mut R, rows: usize, dim: usize) -> Table {
    let data = (0..rows * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    Table::from_vec(rows, dim, data).unwrap()
}

pub fn random_embeddings<R: Rng>(rng: &mut R, num_users: usize, num_items: usize, dim: usize) -> EmbeddingTable {
    EmbeddingTable::new(random_table(rng, num_users, dim), random_table(rng, num_items, dim)).unwrap()
}

/// `D^{-1/2} A D^{-1/2}` over users followed by items, assembled entry by
/// entry from the train sets.
pub fn dense_operator(ds: &InteractionDataset) -> Dense {
    let (nu, ni) = (ds.num_users(), ds.num_items());
    let n = nu + ni;
    let mut adj = vec![vec![0.0; n]; n];
    for u in 0..nu {
        for &i in ds.train_positives(u) {
            adj[u][nu + i] = 1.0;
            adj[nu + i][u] = 1.0;
        }
    }
    let deg: Vec<f64> = adj.iter().map(|r| r.iter().sum()).collect();
    let mut out = vec![vec![0.0; n]; n];
    for r in 0..n {
        for c in 0..n {
            if adj[r][c] != 0.0 {
                out[r][c] = 1.0 / (deg[r].sqrt() * deg[c].sqrt());
            }
        }
    }
    out
}

pub fn stack(e: &EmbeddingTable) -> Dense {
    e.users.iter_rows().chain(e.items.iter_rows()).map(<[f64]>::to_vec).collect()
}

pub fn unstack(x: &Dense, num_users: usize) -> EmbeddingTable {
    EmbeddingTable::new(
        Table::from_rows(&x[..num_users]).unwrap(),
        Table::from_rows(&x[num_users..]).unwrap(),
    )
    .unwrap()
}

pub fn matmul(a: &Dense, x: &Dense) -> Dense {
    let d = x.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            let mut out = vec![0.0; d];
            for (k, &w) in row.iter().enumerate() {
                if w != 0.0 {
                    for c in 0..d {
                        out[c] += w * x[k][c];
                    }
                }
            }
            out
        })
        .collect()
}

pub fn lincomb(terms: &[(f64, &Dense)]) -> Dense {
    let (rows, cols) = (terms[0].1.len(), terms[0].1[0].len());
    let mut out = vec![vec![0.0; cols]; rows];
    for (w, m) in terms {
        for r in 0..rows {
            for c in 0..cols {
                out[r][c] += w * m[r][c];
            }
        }
    }
    out
}

/// `Σ_k coefs[k] Ã^k X` by explicit matrix powers.
pub fn dense_polynomial(op: &Dense, x: &Dense, coefs: &[f64]) -> Dense {
    let mut power = x.clone();
    let mut acc = lincomb(&[(0.0, x)]);
    for (k, &c) in coefs.iter().enumerate() {
        if k > 0 {
            power = matmul(op, &power);
        }
        acc = lincomb(&[(1.0, &acc), (c, &power)]);
    }
    acc
}

/// Largest entrywise error relative to the largest magnitude in `expected`.
pub fn max_rel_diff(got: &Dense, expected: &Dense) -> f64 {
    let scale = expected
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-300);
    got.iter()
        .flatten()
        .zip(expected.iter().flatten())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        / scale
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn ip(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row `n`'s negatives on path `m`: other rows' path-m items, minus its own
/// item and (when filtering) its user's train positives, counted once each.
pub fn oracle_negatives(batch: &TrainingBatch, m: usize, n: usize, filter: Option<&InteractionDataset>) -> Vec<usize> {
    let user = batch.users[n];
    let own = batch.positives[n][m];
    let mut out = Vec::new();
    for (r, row) in batch.positives.iter().enumerate() {
        let j = row[m];
        if r == n || j == own || out.contains(&j) {
            continue;
        }
        if filter.is_some_and(|ds| ds.train_positives(user).contains(&j)) {
            continue;
        }
        out.push(j);
    }
    out
}

/// Weighted multi-path contrastive value summed naively (no max shift).
pub fn oracle_contrastive(
    batch: &TrainingBatch,
    e: &EmbeddingTable,
    tau: f64,
    alpha_pos: f64,
    alpha_neg: f64,
    paths: usize,
    filter: Option<&InteractionDataset>,
) -> f64 {
    let n = batch.users.len() as f64;
    let mut total = 0.0;
    for m in 0..paths {
        let mut path = 0.0;
        for (r, &u) in batch.users.iter().enumerate() {
            let negs = oracle_negatives(batch, m, r, filter);
            if negs.is_empty() {
                continue;
            }
            let eu = e.users.row(u);
            let pos = cos(eu, e.items.row(batch.positives[r][m])) / tau;
            let denom: f64 = negs.iter().map(|&j| (cos(eu, e.items.row(j)) / tau).exp()).sum();
            path += -(alpha_pos * pos - alpha_neg * denom.ln());
        }
        total += path / n;
    }
    total
}

pub fn oracle_bpr(batch: &TrainingBatch, e: &EmbeddingTable) -> f64 {
    let neg = batch.negatives.as_ref().unwrap();
    let n = batch.users.len() as f64;
    batch
        .users
        .iter()
        .enumerate()
        .map(|(r, &u)| {
            let x = ip(e.users.row(u), e.items.row(batch.positives[r][0])) - ip(e.users.row(u), e.items.row(neg[r]));
            (1.0 + (-x).exp()).ln()
        })
        .sum::<f64>()
        / n
}

pub fn oracle_msbpr(batch: &TrainingBatch, e: &EmbeddingTable, tau: f64, alpha: f64, paths: usize) -> f64 {
    let neg = batch.negatives.as_ref().unwrap();
    let n = batch.users.len() as f64;
    let mut total = 0.0;
    for m in 0..paths {
        for (r, &u) in batch.users.iter().enumerate() {
            let eu = e.users.row(u);
            let x = (alpha * cos(eu, e.items.row(batch.positives[r][m])) - (1.0 - alpha) * cos(eu, e.items.row(neg[r]))) / tau;
            total += (1.0 + (-x).exp()).ln() / n;
        }
    }
    total
}

/// `(λ/2N) Σ ‖e‖²` over every occurrence of a batch participant.
pub fn oracle_l2(batch: &TrainingBatch, e: &EmbeddingTable, lambda: f64) -> f64 {
    let n = batch.users.len() as f64;
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let mut s = 0.0;
    for (r, &u) in batch.users.iter().enumerate() {
        s += sq(e.users.row(u));
        for &i in &batch.positives[r] {
            s += sq(e.items.row(i));
        }
        if let Some(neg) = &batch.negatives {
            s += sq(e.items.row(neg[r]));
        }
    }
    lambda / (2.0 * n) * s
}

fn entry(t: &mut EmbeddingTable, side: usize, idx: usize) -> &mut f64 {
    if side == 0 {
        &mut t.users.as_mut_slice()[idx]
    } else {
        &mut t.items.as_mut_slice()[idx]
    }
}

/// Central differences of `f` over every entry of `e`.
pub fn fd_gradient(e: &EmbeddingTable, h: f64, f: impl Fn(&EmbeddingTable) -> f64) -> EmbeddingTable {
    let mut grad = e.zeros_like();
    let mut probe = e.clone();
    let sizes = [e.users.as_slice().len(), e.items.as_slice().len()];
    for (side, &len) in sizes.iter().enumerate() {
        for idx in 0..len {
            let orig = *entry(&mut probe, side, idx);
            *entry(&mut probe, side, idx) = orig + h;
            let up = f(&probe);
            *entry(&mut probe, side, idx) = orig - h;
            let down = f(&probe);
            *entry(&mut probe, side, idx) = orig;
            *entry(&mut grad, side, idx) = (up - down) / (2.0 * h);
        }
    }
    grad
}

/// Max over entries of `|a - n| / max(|a|, |n|, floor)`.
pub fn max_relative_error(analytic: &EmbeddingTable, numeric: &EmbeddingTable, floor: f64) -> f64 {
    let pairs = analytic
        .users
        .as_slice()
        .iter()
        .chain(analytic.items.as_slice())
        .zip(numeric.users.as_slice().iter().chain(numeric.items.as_slice()));
    pairs.fold(0.0f64, |m, (a, n)| m.max((a - n).abs() / a.abs().max(n.abs()).max(floor)))
}

/// Scores every item, drops `exclude`, sorts by (score desc, id asc).
pub fn oracle_rank(e: &EmbeddingTable, user: usize, exclude: &[usize], k: usize) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> = (0..e.num_items())
        .filter(|i| !exclude.contains(i))
        .map(|i| (ip(e.users.row(user), e.items.row(i)), i))
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    scored.into_iter().take(k).map(|(_, i)| i).collect()
}

pub fn oracle_ndcg(ranked: &[usize], test: &[usize], k: usize) -> f64 {
    let mut dcg = 0.0;
    for (p, i) in ranked.iter().take(k).enumerate() {
        if test.contains(i) {
            dcg += 1.0 / ((p + 2) as f64).log2();
        }
    }
    let ideal: f64 = (0..test.len().min(k)).map(|j| 1.0 / ((j + 2) as f64).log2()).sum();
    dcg / ideal
}

pub fn oracle_recall(ranked: &[usize], test: &[usize]) -> f64 {
    ranked.iter().filter(|i| test.contains(i)).count() as f64 / test.len() as f64
}
