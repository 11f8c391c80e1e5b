use rand::seq::SliceRandom;
use rand::Rng;

use super::InteractionDataset;
use crate::error::{Error, Result};

const MAX_USER_RETRIES: usize = 100;

/// Block-diagonal preference structure: users of block `b` interact with
/// items of block `b` at `in_block_density` and with any other item at
/// `noise_density`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub num_blocks: usize,
    pub users_per_block: usize,
    pub items_per_block: usize,
    pub in_block_density: f64,
    pub noise_density: f64,
    pub holdout_fraction: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_blocks: 4,
            users_per_block: 50,
            items_per_block: 40,
            in_block_density: 0.8,
            noise_density: 0.02,
            holdout_fraction: 0.2,
        }
    }
}

impl SyntheticConfig {
    pub fn num_users(&self) -> usize {
        self.num_blocks * self.users_per_block
    }

    pub fn num_items(&self) -> usize {
        self.num_blocks * self.items_per_block
    }

    pub fn user_block(&self, user: usize) -> usize {
        user / self.users_per_block
    }

    pub fn item_block(&self, item: usize) -> usize {
        item / self.items_per_block
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_blocks == 0 || self.users_per_block == 0 || self.items_per_block == 0 {
            return Err(Error::Config("block counts and sizes must be positive".into()));
        }
        for (name, v) in [
            ("in_block_density", self.in_block_density),
            ("noise_density", self.noise_density),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::Config(format!(
                "holdout_fraction must lie in (0, 1), got {}",
                self.holdout_fraction
            )));
        }
        Ok(())
    }
}

/// Generates a block-structured dataset. Each user holds out
/// `round(holdout_fraction * n)` of their `n` positives, capped at `n - 1`
/// so at least one train positive remains.
pub fn generate_synthetic<R: Rng + ?Sized>(config: &SyntheticConfig, rng: &mut R) -> Result<InteractionDataset> {
    config.validate()?;
    let num_items = config.num_items();
    let mut train = Vec::with_capacity(config.num_users());
    let mut test = Vec::with_capacity(config.num_users());
    for u in 0..config.num_users() {
        let block = config.user_block(u);
        let mut items = Vec::new();
        for _ in 0..MAX_USER_RETRIES {
            items = (0..num_items)
                .filter(|&i| {
                    let p = if config.item_block(i) == block {
                        config.in_block_density
                    } else {
                        config.noise_density
                    };
                    rng.random_bool(p)
                })
                .collect();
            if !items.is_empty() {
                break;
            }
        }
        if items.is_empty() {
            return Err(Error::Sampling {
                user: u,
                message: format!("no positives after {MAX_USER_RETRIES} draws; densities too low"),
            });
        }
        let n = items.len();
        let holdout = ((config.holdout_fraction * n as f64).round() as usize).min(n - 1);
        items.shuffle(rng);
        test.push(items[..holdout].to_vec());
        train.push(items[holdout..].to_vec());
    }
    InteractionDataset::new(config.num_users(), num_items, train, test)
}
