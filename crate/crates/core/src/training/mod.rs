//! Mini-batch SGD over the negative-sampling objective.
//!
//! Each epoch rebuilds the example list (fresh word subsampling and negative
//! slot draws), shuffles it, and processes it in batches. A batch's summed
//! gradient is clipped to a global norm and applied with L2 decay on the
//! touched embedding rows.

mod grads;
mod objective;
mod sampling;

use std::time::Instant;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use grads::{apply_step, clip_global, ParamTable, SparseGrads};
pub use objective::{
    example_loss, example_loss_and_grads, loss_and_grads, ns_loss_and_grads, sample_negatives,
    ExampleAnswer, ExampleContext, ExampleKind, QueryCache, TrainingExample,
};
pub use sampling::{build_sampling_table, SamplingTable, SamplingTables};

use crate::corpus::{subsample_keep_probability, Corpus};
use crate::error::{Error, Result};
use crate::ids::{SlotId, WordId};
use crate::model::{LambdaWeights, Model, ModelParams, ModelTables, ParamShape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Initial learning rate, decayed linearly towards zero.
    pub lr0: f64,
    pub clip_norm: f64,
    /// Negatives per positive target.
    pub neg_samples: usize,
    pub l2_gamma: f64,
    pub subsample_t: f64,
    /// Negative-answer examples per training purchase; `None` uses
    /// `min(#annotated pairs, 5)`.
    pub neg_slots_per_interaction: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 200,
            epochs: 20,
            batch_size: 64,
            lr0: 0.5,
            clip_norm: 5.0,
            neg_samples: 5,
            l2_gamma: 0.005,
            subsample_t: 1e-5,
            neg_slots_per_interaction: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.dim == 0 {
            return bad("dim must be >= 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr0 must be positive");
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return bad("clip_norm must be positive");
        }
        if self.neg_samples == 0 {
            return bad("neg_samples must be >= 1");
        }
        if !(self.l2_gamma >= 0.0 && self.l2_gamma.is_finite()) {
            return bad("l2_gamma must be >= 0");
        }
        if !(self.subsample_t > 0.0 && self.subsample_t.is_finite()) {
            return bad("subsample_t must be positive");
        }
        Ok(())
    }
}

/// Linear decay `lr0 (1 - step / total_steps)`.
pub fn lr_at(step: usize, total_steps: usize, lr0: f64) -> f64 {
    debug_assert!(step < total_steps);
    lr0 * (1.0 - step as f64 / total_steps as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-example loss over the epoch.
    pub mean_loss: f64,
    /// Learning rate of the epoch's last batch.
    pub lr: f64,
    pub wall_ms: u64,
}

/// Keep probability of every word under subsampling.
fn keep_probabilities(corpus: &Corpus, t: f64) -> Result<Vec<f64>> {
    (0..corpus.vocab.num_words())
        .map(|w| subsample_keep_probability(corpus.word_frequency(WordId::from_index(w)), t))
        .collect()
}

/// The shuffled examples of one epoch.
pub fn build_epoch_examples<R: Rng + ?Sized>(
    corpus: &Corpus,
    config: &TrainConfig,
    keep: &[f64],
    rng: &mut R,
) -> Vec<TrainingExample> {
    let mut out = Vec::new();
    let num_slots = corpus.vocab.num_slots();

    for it in corpus.train_interactions() {
        if corpus.queries[it.query.index()].tokens.is_empty() {
            continue;
        }
        let (user, query, item) = (it.user, it.query, it.item);
        out.push(TrainingExample::ItemGivenUq { user, query, item });
        let pairs = &corpus.item(item).pairs;
        for &p in pairs {
            let (slot, value) = corpus.vocab.pair(p);
            out.push(TrainingExample::ItemGivenUqc {
                user,
                query,
                item,
                answer: ExampleAnswer::Positive { slot, value },
            });
        }
        let absent: Vec<SlotId> = (0..num_slots)
            .map(SlotId::from_index)
            .filter(|&s| !corpus.item(item).has_slot(s))
            .collect();
        let k = config
            .neg_slots_per_interaction
            .unwrap_or(pairs.len().min(5))
            .min(absent.len());
        for i in sample(rng, absent.len(), k) {
            out.push(TrainingExample::ItemGivenUqc {
                user,
                query,
                item,
                answer: ExampleAnswer::Negative { slot: absent[i] },
            });
        }
    }

    for (i, item) in corpus.items.iter().enumerate() {
        let id = crate::ids::ItemId::from_index(i);
        for &pair in &item.pairs {
            out.push(TrainingExample::PairFromItem { item: id, pair });
        }
        for word in item.tokens() {
            if rng.random::<f64>() < keep[word.index()] {
                out.push(TrainingExample::WordFromItem { item: id, word });
            }
        }
    }
    for (i, user) in corpus.users.iter().enumerate() {
        let id = crate::ids::UserId::from_index(i);
        for &pair in &user.history_pairs {
            out.push(TrainingExample::PairFromUser { user: id, pair });
        }
        for &word in &user.review_tokens {
            if rng.random::<f64>() < keep[word.index()] {
                out.push(TrainingExample::WordFromUser { user: id, word });
            }
        }
    }
    out.shuffle(rng);
    out
}

/// Trains a model on the corpus's training split. `observer` sees each
/// epoch's statistics as it finishes.
pub fn train(
    corpus: &Corpus,
    config: &TrainConfig,
    lambdas: &LambdaWeights,
    mut observer: impl FnMut(&EpochStats),
) -> Result<Model> {
    config.validate()?;
    lambdas.validate()?;
    if corpus.train_interactions().next().is_none() {
        return Err(Error::EmptyTrainingSet);
    }
    let tables = SamplingTables::from_corpus(corpus)?;
    let ctx = ExampleContext::from_corpus(corpus);
    let keep = keep_probabilities(corpus, config.subsample_t)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ModelParams::init(ParamShape::for_corpus(corpus, config.dim), &mut rng);

    let mut grads = SparseGrads::new(config.dim);
    let mut queries = QueryCache::new();
    let mut negatives = Vec::with_capacity(config.neg_samples);
    for epoch in 0..config.epochs {
        let started = Instant::now();
        let examples = build_epoch_examples(corpus, config, &keep, &mut rng);
        if examples.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let batches = examples.len().div_ceil(config.batch_size);
        let mut total_loss = 0.0;
        let mut lr = config.lr0;
        for (b, batch) in examples.chunks(config.batch_size).enumerate() {
            grads.clear();
            for ex in batch {
                negatives.clear();
                negatives.extend(sample_negatives(ex, &tables, config.neg_samples, &mut rng));
                total_loss += example_loss_and_grads(
                    ex,
                    &negatives,
                    &ctx,
                    &params,
                    lambdas,
                    &mut grads,
                    &mut queries,
                    1.0,
                );
            }
            queries.flush(&params, &mut grads);
            clip_global(&mut grads, config.clip_norm);
            // The example count varies slightly per epoch with subsampling,
            // so the schedule is laid out with this epoch's batch count.
            lr = lr_at(epoch * batches + b, config.epochs * batches, config.lr0);
            apply_step(&mut params, &grads, lr, config.l2_gamma);
        }
        let mean_loss = total_loss / examples.len() as f64;
        if !mean_loss.is_finite() || !params.is_finite() {
            return Err(Error::InvalidInput(format!(
                "training diverged in epoch {}",
                epoch + 1
            )));
        }
        observer(&EpochStats {
            epoch: epoch + 1,
            mean_loss,
            lr,
            wall_ms: started.elapsed().as_millis() as u64,
        });
    }
    let mut model = Model::new(params, ModelTables::from_corpus(corpus))?;
    model.round_to_storage();
    Ok(model)
}
