//! Epoch loop: sample batches, encode, differentiate loss + L2, pull the
//! gradient back through the encoder and apply sparse Adam.

mod adam;
mod history;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use history::{epochs_to_fraction, EvalRecord, TrainHistory, HISTORY_CSV_HEADER};

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{epoch_batches, InteractionDataset, SamplerConfig, TrainingBatch};
use crate::encoder::{backprop_encoder, encode, init_embeddings, EmbeddingTable, EncoderConfig, InitScheme};
use crate::error::{Entity, Error, Result};
use crate::graph::NormalizedBipartiteGraph;
use crate::losses::{compute_loss, l2_regularization, LossConfig};
use crate::metrics::{evaluate_with_threads, EvalResult};

/// Stream ids carved out of the run seed.
const INIT_STREAM: u64 = 0;
const SAMPLING_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub eval_every: usize,
    pub eval_k: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Stop after this many evaluations without a new best recall.
    pub early_stop_patience: Option<usize>,
    pub embedding_dim: usize,
    pub init: InitScheme,
    pub positive_replacement: bool,
    /// Worker threads for evaluation only; training is single-threaded.
    pub eval_threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            l2_lambda: 1e-4,
            batch_size: 2048,
            epochs: 100,
            eval_every: 5,
            eval_k: 20,
            seed: 2020,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            early_stop_patience: None,
            embedding_dim: 64,
            init: InitScheme::default(),
            positive_replacement: false,
            eval_threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.adam().validate()?;
        if !(self.l2_lambda.is_finite() && self.l2_lambda >= 0.0) {
            return Err(Error::Config(format!("l2_lambda must be >= 0, got {}", self.l2_lambda)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        if self.eval_k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.embedding_dim == 0 {
            return Err(Error::Config("embedding_dim must be at least 1".into()));
        }
        Ok(())
    }
}

/// Loss and gradient of one batch with respect to the base embeddings.
#[derive(Debug, Clone)]
pub struct BatchObjective {
    pub loss: f64,
    pub regularization: f64,
    pub grad: EmbeddingTable,
    /// Contrastive rows left without in-batch negatives.
    pub skipped_rows: usize,
}

impl BatchObjective {
    pub fn total(&self) -> f64 {
        self.loss + self.regularization
    }
}

/// Loss + L2 on `batch` and its gradient on `base`.
pub fn batch_objective(
    base: &EmbeddingTable,
    batch: &TrainingBatch,
    dataset: &InteractionDataset,
    graph: &NormalizedBipartiteGraph,
    encoder: &EncoderConfig,
    loss: &LossConfig,
    l2_lambda: f64,
) -> Result<BatchObjective> {
    let finals = encode(base, graph, encoder)?;
    let out = compute_loss(loss, batch, dataset, &finals)?;
    let mut grad_final = finals.zeros_like();
    out.grads.scatter_into(&mut grad_final)?;
    let mut grad = backprop_encoder(&grad_final, graph, encoder)?;
    let reg = l2_regularization(base, batch, l2_lambda)?;
    reg.grads.scatter_into(&mut grad)?;
    Ok(BatchObjective {
        loss: out.value,
        regularization: reg.value,
        grad,
        skipped_rows: out.skipped_rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub batches: usize,
    pub seconds: f64,
}

/// Owns the parameters and optimizer state of a run.
pub struct Trainer<'a> {
    dataset: &'a InteractionDataset,
    graph: &'a NormalizedBipartiteGraph,
    encoder: EncoderConfig,
    loss: LossConfig,
    config: TrainConfig,
    params: EmbeddingTable,
    adam: AdamState,
    sampling_rng: ChaCha8Rng,
    epoch: usize,
    step: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(
        dataset: &'a InteractionDataset,
        graph: &'a NormalizedBipartiteGraph,
        encoder: &EncoderConfig,
        loss: &LossConfig,
        config: &TrainConfig,
    ) -> Result<Self> {
        encoder.validate()?;
        loss.validate()?;
        config.validate()?;
        if graph.num_users() != dataset.num_users() || graph.num_items() != dataset.num_items() {
            return Err(Error::Shape("graph was built from a different dataset".into()));
        }
        let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
        init_rng.set_stream(INIT_STREAM);
        let params = init_embeddings(dataset, config.embedding_dim, config.init, &mut init_rng)?;
        let mut sampling_rng = ChaCha8Rng::seed_from_u64(config.seed);
        sampling_rng.set_stream(SAMPLING_STREAM);
        Ok(Self {
            dataset,
            graph,
            encoder: encoder.clone(),
            loss: *loss,
            config: config.clone(),
            adam: AdamState::new(&params),
            params,
            sampling_rng,
            epoch: 0,
            step: 0,
        })
    }

    pub fn params(&self) -> &EmbeddingTable {
        &self.params
    }

    pub fn adam_state(&self) -> &AdamState {
        &self.adam
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn into_params(self) -> EmbeddingTable {
        self.params
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            batch_size: self.config.batch_size,
            num_positives: self.loss.columns_needed(),
            with_negative: self.loss.kind.needs_negative(),
            positive_replacement: self.config.positive_replacement,
        }
    }

    pub fn finals(&self) -> Result<EmbeddingTable> {
        encode(&self.params, self.graph, &self.encoder)
    }

    pub fn objective(&self, batch: &TrainingBatch) -> Result<BatchObjective> {
        batch_objective(
            &self.params,
            batch,
            self.dataset,
            self.graph,
            &self.encoder,
            &self.loss,
            self.config.l2_lambda,
        )
    }

    /// One Adam update on `batch`; returns the pre-update objective.
    pub fn step(&mut self, batch: &TrainingBatch) -> Result<BatchObjective> {
        let obj = self.objective(batch)?;
        if !obj.total().is_finite() {
            return Err(Error::NonFinite {
                entity: Entity::User(batch.users.first().copied().unwrap_or(0)),
                context: format!("batch objective is {}", obj.total()),
            });
        }
        adam_step(&mut self.params, &obj.grad, &mut self.adam, &self.config.adam())?;
        self.step += 1;
        Ok(obj)
    }

    /// Runs one epoch over freshly shuffled interactions.
    pub fn run_epoch(&mut self) -> Result<EpochStats> {
        let start = Instant::now();
        self.epoch += 1;
        let batches = epoch_batches(self.dataset, &self.sampler_config(), &mut self.sampling_rng)?;
        let mut total = 0.0;
        let mut skipped = 0;
        for batch in &batches {
            let obj = self.step(batch).map_err(|e| Error::TrainingAborted {
                epoch: self.epoch,
                step: self.step,
                source: Box::new(e),
            })?;
            total += obj.loss;
            skipped += obj.skipped_rows;
        }
        if skipped > 0 {
            log::warn!("epoch {}: {skipped} row(s) had no in-batch negatives and were skipped", self.epoch);
        }
        Ok(EpochStats {
            mean_loss: if batches.is_empty() { 0.0 } else { total / batches.len() as f64 },
            batches: batches.len(),
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    pub fn evaluate(&self) -> Result<EvalResult> {
        evaluate_with_threads(self.dataset, &self.finals()?, self.config.eval_k, self.config.eval_threads)
    }
}

/// Trains for `epochs` epochs, evaluating every `eval_every` epochs and after
/// the last one. Returns the base embeddings at the point training stopped.
pub fn train(
    dataset: &InteractionDataset,
    graph: &NormalizedBipartiteGraph,
    encoder: &EncoderConfig,
    loss: &LossConfig,
    config: &TrainConfig,
) -> Result<(EmbeddingTable, TrainHistory)> {
    let mut trainer = Trainer::new(dataset, graph, encoder, loss, config)?;
    let mut history = TrainHistory::default();
    let mut best = f64::NEG_INFINITY;
    let mut stale = 0usize;
    for epoch in 1..=config.epochs {
        let stats = trainer.run_epoch()?;
        if epoch % config.eval_every != 0 && epoch != config.epochs {
            continue;
        }
        let eval = trainer.evaluate()?;
        log::info!(
            "epoch {epoch}: loss {:.5} recall@{} {:.4} ndcg@{} {:.4} ({:.2}s)",
            stats.mean_loss,
            eval.k,
            eval.recall,
            eval.k,
            eval.ndcg,
            stats.seconds
        );
        history.records.push(EvalRecord {
            epoch,
            loss: stats.mean_loss,
            recall: eval.recall,
            ndcg: eval.ndcg,
            seconds: stats.seconds,
        });
        if eval.recall > best {
            best = eval.recall;
            stale = 0;
        } else {
            stale += 1;
        }
        if config.early_stop_patience.is_some_and(|p| stale >= p) {
            log::info!("early stop at epoch {epoch}; best recall {best:.4}");
            break;
        }
    }
    Ok((trainer.into_params(), history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, sample_batch, SyntheticConfig};
    use crate::losses::LossKind;

    fn fixture() -> InteractionDataset {
        let cfg = SyntheticConfig {
            num_blocks: 2,
            users_per_block: 10,
            items_per_block: 8,
            ..Default::default()
        };
        generate_synthetic(&cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            batch_size: 16,
            epochs: 3,
            eval_every: 1,
            embedding_dim: 8,
            ..Default::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initial_embeddings() {
        let ds = fixture();
        let g = NormalizedBipartiteGraph::build(&ds);
        let cfg = TrainConfig {
            epochs: 0,
            ..small_config()
        };
        let (params, history) = train(&ds, &g, &EncoderConfig::mf(), &LossConfig::default(), &cfg).unwrap();
        assert!(history.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(INIT_STREAM);
        assert_eq!(params, init_embeddings(&ds, 8, cfg.init, &mut rng).unwrap());
    }

    #[test]
    fn tiny_step_does_not_increase_batch_loss() {
        let ds = fixture();
        let g = NormalizedBipartiteGraph::build(&ds);
        let cfg = TrainConfig {
            learning_rate: 1e-5,
            ..small_config()
        };
        for kind in LossKind::ALL {
            let loss = LossConfig {
                kind,
                num_positives: 3,
                ..Default::default()
            };
            let mut t = Trainer::new(&ds, &g, &EncoderConfig::lightgcn_mean(2), &loss, &cfg).unwrap();
            let sc = t.sampler_config();
            let batch = sample_batch(&ds, &sc, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            let before = t.step(&batch).unwrap().total();
            let after = t.objective(&batch).unwrap().total();
            assert!(after <= before, "{kind:?}: {after} > {before}");
        }
    }

    #[test]
    fn history_is_deterministic_and_increasing() {
        let ds = fixture();
        let g = NormalizedBipartiteGraph::build(&ds);
        let run = || train(&ds, &g, &EncoderConfig::lightgcn_single(2), &LossConfig::default(), &small_config()).unwrap();
        let (p1, h1) = run();
        let (p2, h2) = run();
        assert_eq!(p1, p2);
        assert_eq!(h1.to_csv(false), h2.to_csv(false));
        assert!(h1.records.windows(2).all(|w| w[0].epoch < w[1].epoch));
    }

    #[test]
    fn final_epoch_is_always_evaluated() {
        let ds = fixture();
        let g = NormalizedBipartiteGraph::build(&ds);
        let cfg = TrainConfig {
            epochs: 7,
            eval_every: 5,
            ..small_config()
        };
        let (_, h) = train(&ds, &g, &EncoderConfig::mf(), &LossConfig::default(), &cfg).unwrap();
        assert_eq!(h.records.iter().map(|r| r.epoch).collect::<Vec<_>>(), vec![5, 7]);
    }

    #[test]
    fn degenerate_embedding_aborts_with_context() {
        let ds = fixture();
        let g = NormalizedBipartiteGraph::build(&ds);
        let cfg = TrainConfig {
            init: InitScheme::Normal { std: 0.0 },
            ..small_config()
        };
        let mut t = Trainer::new(&ds, &g, &EncoderConfig::mf(), &LossConfig::default(), &cfg).unwrap();
        match t.run_epoch() {
            Err(Error::TrainingAborted { epoch: 1, step: 0, source }) => {
                assert!(matches!(*source, Error::DegenerateVector { .. }))
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
