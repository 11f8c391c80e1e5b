use rand::seq::{index, SliceRandom};
use rand::Rng;

use super::InteractionDataset;
use crate::error::{Error, Result};

/// Rejection attempts allowed per negative draw before giving up on a user.
const MAX_REJECTIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerConfig {
    pub batch_size: usize,
    /// Positive columns per row (`M`); column 0 is the anchor.
    pub num_positives: usize,
    pub with_negative: bool,
    /// Draw extra positives with replacement even when the user has at least
    /// `M` of them. Users with fewer than `M` positives always use replacement.
    pub positive_replacement: bool,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.num_positives == 0 {
            return Err(Error::Config("num_positives must be at least 1".into()));
        }
        Ok(())
    }
}

/// `N` rows of (user, `M` positives, optional negative). Column `m` of
/// `positives` is path `m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingBatch {
    pub users: Vec<usize>,
    pub positives: Vec<Vec<usize>>,
    pub negatives: Option<Vec<usize>>,
}

impl TrainingBatch {
    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn num_positives(&self) -> usize {
        self.positives.first().map_or(0, Vec::len)
    }

    /// Items of path `m`, one per row.
    pub fn column(&self, m: usize) -> impl Iterator<Item = usize> + '_ {
        self.positives.iter().map(move |row| row[m])
    }

    /// Keeps only the first `m` positive columns.
    pub fn truncate_positives(&mut self, m: usize) {
        for row in &mut self.positives {
            row.truncate(m);
        }
    }
}

/// Train interactions in a uniformly shuffled order.
pub fn shuffled_interactions<R: Rng + ?Sized>(dataset: &InteractionDataset, rng: &mut R) -> Vec<(usize, usize)> {
    let mut pairs = dataset.train_interactions();
    pairs.shuffle(rng);
    pairs
}

/// One epoch: every train interaction is the anchor of exactly one row.
/// The last batch may be short.
pub fn epoch_batches<R: Rng + ?Sized>(
    dataset: &InteractionDataset,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<TrainingBatch>> {
    config.validate()?;
    let anchors = shuffled_interactions(dataset, rng);
    anchors
        .chunks(config.batch_size)
        .map(|chunk| build_batch(dataset, chunk, config, rng))
        .collect()
}

/// A single batch with anchors drawn uniformly (with replacement) from the
/// train interactions.
pub fn sample_batch<R: Rng + ?Sized>(
    dataset: &InteractionDataset,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<TrainingBatch> {
    config.validate()?;
    let pairs = dataset.train_interactions();
    if pairs.is_empty() {
        return Err(Error::Validation("dataset has no trainable users".into()));
    }
    let anchors: Vec<_> = (0..config.batch_size)
        .map(|_| pairs[rng.random_range(0..pairs.len())])
        .collect();
    build_batch(dataset, &anchors, config, rng)
}

/// Expands anchor pairs into a batch: extra positives for columns `1..M`
/// and, when requested, one uniformly drawn non-positive item per row.
pub fn build_batch<R: Rng + ?Sized>(
    dataset: &InteractionDataset,
    anchors: &[(usize, usize)],
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<TrainingBatch> {
    config.validate()?;
    let m = config.num_positives;
    let mut users = Vec::with_capacity(anchors.len());
    let mut positives = Vec::with_capacity(anchors.len());
    for &(u, anchor) in anchors {
        let pos = dataset.train_positives(u);
        let Ok(anchor_idx) = pos.binary_search(&anchor) else {
            return Err(Error::Sampling {
                user: u,
                message: format!("anchor item {anchor} is not a train positive"),
            });
        };
        let mut row = Vec::with_capacity(m);
        row.push(anchor);
        if config.positive_replacement || pos.len() < m {
            row.extend((1..m).map(|_| pos[rng.random_range(0..pos.len())]));
        } else {
            // distinct positives other than the anchor
            for j in index::sample(rng, pos.len() - 1, m - 1) {
                row.push(pos[if j >= anchor_idx { j + 1 } else { j }]);
            }
        }
        users.push(u);
        positives.push(row);
    }
    let negatives = if config.with_negative {
        Some(
            users
                .iter()
                .map(|&u| sample_negative(dataset, u, rng))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    Ok(TrainingBatch {
        users,
        positives,
        negatives,
    })
}

fn sample_negative<R: Rng + ?Sized>(dataset: &InteractionDataset, user: usize, rng: &mut R) -> Result<usize> {
    let n = dataset.num_items();
    if dataset.train_positives(user).len() >= n {
        return Err(Error::Sampling {
            user,
            message: "user is positive with every item".into(),
        });
    }
    for _ in 0..MAX_REJECTIONS {
        let j = rng.random_range(0..n);
        if !dataset.is_train_positive(user, j) {
            return Ok(j);
        }
    }
    Err(Error::Sampling {
        user,
        message: format!("no negative found in {MAX_REJECTIONS} draws"),
    })
}

/// Negative candidates of row `n` on path `m`: the path-`m` items of every
/// other row, excluding row `n`'s own positive. With `filter` set, items
/// that are train positives of row `n`'s user are dropped as well.
/// Returned sorted and deduplicated.
pub fn in_batch_negatives(
    batch: &TrainingBatch,
    m: usize,
    n: usize,
    filter: Option<&InteractionDataset>,
) -> Vec<usize> {
    let user = batch.users[n];
    let own = batch.positives[n][m];
    let mut out: Vec<usize> = batch
        .column(m)
        .enumerate()
        .filter(|&(r, item)| r != n && item != own)
        .map(|(_, item)| item)
        .filter(|&item| filter.is_none_or(|ds| !ds.is_train_positive(user, item)))
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}
