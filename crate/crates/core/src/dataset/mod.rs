//! Implicit-feedback interaction data: train/test splits, batch sampling and
//! a block-structured synthetic generator.

mod io;
mod sampler;
mod synthetic;

pub use io::{load_interactions, load_interactions_with, parse_interactions, write_interactions, LoadOptions};
pub use sampler::{
    build_batch, epoch_batches, in_batch_negatives, sample_batch, shuffled_interactions,
    SamplerConfig, TrainingBatch,
};
pub use synthetic::{generate_synthetic, SyntheticConfig};

use crate::error::{Error, Result};

/// Users, items and their train/test positives. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionDataset {
    num_users: usize,
    num_items: usize,
    train: Vec<Vec<usize>>,
    test: Vec<Vec<usize>>,
    num_train_interactions: usize,
}

impl InteractionDataset {
    /// Builds a dataset from per-user item lists. Lists are sorted and
    /// deduplicated; `train` and `test` are padded with empty sets up to
    /// `num_users`.
    pub fn new(
        num_users: usize,
        num_items: usize,
        mut train: Vec<Vec<usize>>,
        mut test: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if train.len() > num_users || test.len() > num_users {
            return Err(Error::Validation(format!(
                "{} train / {} test user rows exceed {num_users} users",
                train.len(),
                test.len()
            )));
        }
        train.resize(num_users, Vec::new());
        test.resize(num_users, Vec::new());
        for sets in [&mut train, &mut test] {
            for items in sets.iter_mut() {
                items.sort_unstable();
                items.dedup();
            }
        }
        for (u, (tr, te)) in train.iter().zip(&test).enumerate() {
            if let Some(&i) = tr.iter().chain(te).find(|&&i| i >= num_items) {
                return Err(Error::Validation(format!(
                    "user {u} has item {i} outside the item universe of {num_items}"
                )));
            }
            if let Some(&i) = tr.iter().find(|i| te.binary_search(i).is_ok()) {
                return Err(Error::Validation(format!(
                    "user {u} has item {i} in both train and test"
                )));
            }
        }
        let num_train_interactions = train.iter().map(Vec::len).sum();
        Ok(Self {
            num_users,
            num_items,
            train,
            test,
            num_train_interactions,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_train_interactions(&self) -> usize {
        self.num_train_interactions
    }

    /// Sorted train positives of `user`.
    pub fn train_positives(&self, user: usize) -> &[usize] {
        &self.train[user]
    }

    /// Sorted held-out positives of `user`.
    pub fn test_positives(&self, user: usize) -> &[usize] {
        &self.test[user]
    }

    pub fn is_train_positive(&self, user: usize, item: usize) -> bool {
        self.train[user].binary_search(&item).is_ok()
    }

    /// Users with at least one train positive; the others are never sampled.
    pub fn is_trainable(&self, user: usize) -> bool {
        !self.train[user].is_empty()
    }

    pub fn untrainable_users(&self) -> Vec<usize> {
        (0..self.num_users).filter(|&u| !self.is_trainable(u)).collect()
    }

    pub fn num_test_interactions(&self) -> usize {
        self.test.iter().map(Vec::len).sum()
    }

    /// All train `(user, item)` pairs in user-major order.
    pub fn train_interactions(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_train_interactions);
        for (u, items) in self.train.iter().enumerate() {
            out.extend(items.iter().map(|&i| (u, i)));
        }
        out
    }
}
