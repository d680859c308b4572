//! Negative-sampling approximation of the six log-likelihood terms.
//!
//! Every term has the same shape: a context vector `h`, a positive target `p`
//! and `α` sampled negatives `n_k`, with loss
//! `-[log σ(p·h) + Σ_k log σ(-n_k·h)]`.

use std::collections::HashMap;

use rand::Rng;

use super::grads::{ParamTable, SparseGrads};
use super::sampling::SamplingTables;
use crate::corpus::Corpus;
use crate::ids::{ItemId, PairId, QueryId, SlotId, UserId, ValueId, WordId};
use crate::model::{affine, dot, mean_word_embedding, LambdaWeights, ModelParams};

/// The answer folded into an `ItemGivenUqc` example.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExampleAnswer {
    /// `c = (q + a) / 2`.
    Positive { slot: SlotId, value: ValueId },
    /// `c = q⁻`.
    Negative { slot: SlotId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainingExample {
    WordFromItem { item: ItemId, word: WordId },
    WordFromUser { user: UserId, word: WordId },
    PairFromItem { item: ItemId, pair: PairId },
    PairFromUser { user: UserId, pair: PairId },
    ItemGivenUq { user: UserId, query: QueryId, item: ItemId },
    ItemGivenUqc { user: UserId, query: QueryId, item: ItemId, answer: ExampleAnswer },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExampleKind {
    WordFromItem,
    WordFromUser,
    PairFromItem,
    PairFromUser,
    ItemGivenUq,
    ItemGivenUqc,
}

impl TrainingExample {
    pub fn kind(&self) -> ExampleKind {
        match self {
            TrainingExample::WordFromItem { .. } => ExampleKind::WordFromItem,
            TrainingExample::WordFromUser { .. } => ExampleKind::WordFromUser,
            TrainingExample::PairFromItem { .. } => ExampleKind::PairFromItem,
            TrainingExample::PairFromUser { .. } => ExampleKind::PairFromUser,
            TrainingExample::ItemGivenUq { .. } => ExampleKind::ItemGivenUq,
            TrainingExample::ItemGivenUqc { .. } => ExampleKind::ItemGivenUqc,
        }
    }
}

/// Lookups an example needs beyond its own ids.
#[derive(Debug, Clone)]
pub struct ExampleContext {
    pub query_words: Vec<Vec<WordId>>,
    pub pairs: Vec<(SlotId, ValueId)>,
}

impl ExampleContext {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        ExampleContext {
            query_words: corpus.queries.iter().map(|q| q.tokens.clone()).collect(),
            pairs: corpus.vocab.pairs().to_vec(),
        }
    }
}

/// Draws `alpha` negatives from the table matching the example kind: items
/// (uniform) for item-generation terms, words for word terms, pairs for pair
/// terms.
pub fn sample_negatives<R: Rng + ?Sized>(
    example: &TrainingExample,
    tables: &SamplingTables,
    alpha: usize,
    rng: &mut R,
) -> Vec<u32> {
    (0..alpha)
        .map(|_| {
            let i = match example.kind() {
                ExampleKind::WordFromItem | ExampleKind::WordFromUser => tables.words.sample(rng),
                ExampleKind::PairFromItem | ExampleKind::PairFromUser => tables.pairs.sample(rng),
                ExampleKind::ItemGivenUq | ExampleKind::ItemGivenUqc => tables.sample_item(rng),
            };
            i as u32
        })
        .collect()
}

const SIGMOID_CLAMP: f64 = 40.0;

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x.clamp(-SIGMOID_CLAMP, SIGMOID_CLAMP)).exp())
}

/// `-log σ(x)`, argument clamped to `[-40, 40]`.
#[inline]
fn neg_log_sigmoid(x: f64) -> f64 {
    (-x.clamp(-SIGMOID_CLAMP, SIGMOID_CLAMP)).exp().ln_1p()
}

/// A vector that may be a single row or the `(q + a) / 2` composite.
#[derive(Clone, Copy)]
enum Target {
    Row(ParamTable, u32),
    Pair(SlotId, ValueId),
}

impl Target {
    fn materialize(self, params: &ModelParams, out: &mut Vec<f64>) {
        out.clear();
        match self {
            Target::Row(t, r) => out.extend_from_slice(table(params, t).row(r as usize)),
            Target::Pair(s, v) => out.extend(
                params
                    .slot_pos_emb
                    .row(s.index())
                    .iter()
                    .zip(params.value_emb.row(v.index()))
                    .map(|(q, a)| (q + a) / 2.0),
            ),
        }
    }

    fn backprop(self, grads: &mut SparseGrads, scale: f64, g: &[f64]) {
        match self {
            Target::Row(t, r) => grads.add_row(t, r, scale, g),
            Target::Pair(s, v) => {
                grads.add_row(ParamTable::SlotPos, s.0, 0.5 * scale, g);
                grads.add_row(ParamTable::Value, v.0, 0.5 * scale, g);
            }
        }
    }
}

fn table(params: &ModelParams, t: ParamTable) -> &crate::model::Embedding {
    match t {
        ParamTable::User => &params.user_emb,
        ParamTable::Item => &params.item_emb,
        ParamTable::Word => &params.word_emb,
        ParamTable::SlotPos => &params.slot_pos_emb,
        ParamTable::SlotNeg => &params.slot_neg_emb,
        ParamTable::Value => &params.value_emb,
    }
}

/// Core of every term: returns the loss, accumulates `scale * ∂loss/∂target`
/// for the positive and the negatives, and writes `∂loss/∂h` into `grad_h`.
fn ns_term(
    params: &ModelParams,
    h: &[f64],
    positive: Target,
    negatives: &[Target],
    grads: &mut SparseGrads,
    scale: f64,
    grad_h: &mut [f64],
) -> f64 {
    let mut buf = Vec::with_capacity(h.len());
    grad_h.iter_mut().for_each(|g| *g = 0.0);

    positive.materialize(params, &mut buf);
    let s = dot(&buf, h);
    let mut loss = neg_log_sigmoid(s);
    let g = sigmoid(s) - 1.0;
    for (gh, p) in grad_h.iter_mut().zip(&buf) {
        *gh += g * p;
    }
    positive.backprop(grads, scale * g, h);

    for &n in negatives {
        n.materialize(params, &mut buf);
        let s = dot(&buf, h);
        loss += neg_log_sigmoid(-s);
        let g = sigmoid(s);
        for (gh, p) in grad_h.iter_mut().zip(&buf) {
            *gh += g * p;
        }
        n.backprop(grads, scale * g, h);
    }
    loss
}

fn pair_target(ctx: &ExampleContext, p: u32) -> Target {
    let (s, v) = ctx.pairs[p as usize];
    Target::Pair(s, v)
}

fn lm_term(
    params: &ModelParams,
    center: (ParamTable, u32),
    positive: Target,
    negatives: &[Target],
    grads: &mut SparseGrads,
    scale: f64,
) -> f64 {
    let mut grad_h = vec![0.0; params.dim()];
    let h = table(params, center.0).row(center.1 as usize);
    let loss = ns_term(params, h, positive, negatives, grads, scale, &mut grad_h);
    grads.add_row(center.0, center.1, scale, &grad_h);
    loss
}

/// Per-query forward values and the gradient reaching `W m + b`, shared by
/// every example of a batch that uses the query. The dense projection and
/// word gradients are produced once per query by [`QueryCache::flush`].
#[derive(Debug, Default, Clone)]
pub struct QueryCache {
    entries: HashMap<QueryId, QueryEntry>,
    order: Vec<QueryId>,
}

#[derive(Debug, Clone)]
struct QueryEntry {
    words: Vec<WordId>,
    mean: Vec<f64>,
    q: Vec<f64>,
    grad_pre: Vec<f64>,
}

impl QueryCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn entry(
        &mut self,
        params: &ModelParams,
        ctx: &ExampleContext,
        query: QueryId,
    ) -> Option<&mut QueryEntry> {
        #[allow(clippy::map_entry)] // the entry is built fallibly
        if !self.entries.contains_key(&query) {
            let words: Vec<WordId> = ctx.query_words[query.index()]
                .iter()
                .copied()
                .filter(|w| w.index() < params.word_emb.rows())
                .collect();
            let (mean, _) = mean_word_embedding(params, &words)?;
            let q = affine(params, &mean).into_iter().map(f64::tanh).collect();
            self.entries.insert(
                query,
                QueryEntry {
                    words,
                    mean,
                    q,
                    grad_pre: vec![0.0; params.dim()],
                },
            );
            self.order.push(query);
        }
        self.entries.get_mut(&query)
    }

    /// Pushes the accumulated query gradients into `W`, `b` and the query
    /// words, then empties the cache.
    pub fn flush(&mut self, params: &ModelParams, grads: &mut SparseGrads) {
        let d = params.dim();
        let mut grad_mean = vec![0.0; d];
        for query in self.order.drain(..) {
            let e = self.entries.remove(&query).expect("ordered entry");
            grad_mean.iter_mut().for_each(|g| *g = 0.0);
            {
                let (gw, gb) = grads.proj_mut();
                for i in 0..d {
                    let gi = e.grad_pre[i];
                    if gi == 0.0 {
                        continue;
                    }
                    let w_row = &params.proj_weight[i * d..(i + 1) * d];
                    let gw_row = &mut gw[i * d..(i + 1) * d];
                    for j in 0..d {
                        gw_row[j] += gi * e.mean[j];
                        grad_mean[j] += w_row[j] * gi;
                    }
                    gb[i] += gi;
                }
            }
            let per_word = 1.0 / e.words.len() as f64;
            for w in &e.words {
                grads.add_row(ParamTable::Word, w.0, per_word, &grad_mean);
            }
        }
        self.entries.clear();
    }
}

#[allow(clippy::too_many_arguments)]
fn item_term(
    params: &ModelParams,
    ctx: &ExampleContext,
    lambdas: &LambdaWeights,
    user: UserId,
    query: QueryId,
    item: ItemId,
    answer: Option<ExampleAnswer>,
    negatives: &[u32],
    grads: &mut SparseGrads,
    queries: &mut QueryCache,
    scale: f64,
) -> f64 {
    let d = params.dim();
    let Some(entry) = queries.entry(params, ctx, query) else {
        return 0.0;
    };

    let mut z: Vec<f64> = entry.q.iter().map(|x| lambdas.query * x).collect();
    for (zi, ui) in z.iter_mut().zip(params.user_emb.row(user.index())) {
        *zi += lambdas.user * ui;
    }
    match answer {
        Some(ExampleAnswer::Positive { slot, value }) => {
            let qs = params.slot_pos_emb.row(slot.index());
            let a = params.value_emb.row(value.index());
            for ((zi, x), y) in z.iter_mut().zip(qs).zip(a) {
                *zi += lambdas.conv * (x + y) / 2.0;
            }
        }
        Some(ExampleAnswer::Negative { slot }) => {
            for (zi, x) in z.iter_mut().zip(params.slot_neg_emb.row(slot.index())) {
                *zi += lambdas.conv * x;
            }
        }
        None => {}
    }

    let negs: Vec<Target> = negatives
        .iter()
        .map(|&v| Target::Row(ParamTable::Item, v))
        .collect();
    let mut grad_z = vec![0.0; d];
    let loss = ns_term(
        params,
        &z,
        Target::Row(ParamTable::Item, item.0),
        &negs,
        grads,
        scale,
        &mut grad_z,
    );

    // Through tanh(W m + b); the rest happens in `QueryCache::flush`.
    for ((gp, g), qi) in entry.grad_pre.iter_mut().zip(&grad_z).zip(&entry.q) {
        *gp += scale * lambdas.query * g * (1.0 - qi * qi);
    }
    grads.add_row(ParamTable::User, user.0, scale * lambdas.user, &grad_z);
    match answer {
        Some(ExampleAnswer::Positive { slot, value }) => {
            grads.add_row(ParamTable::SlotPos, slot.0, 0.5 * lambdas.conv * scale, &grad_z);
            grads.add_row(ParamTable::Value, value.0, 0.5 * lambdas.conv * scale, &grad_z);
        }
        Some(ExampleAnswer::Negative { slot }) => {
            grads.add_row(ParamTable::SlotNeg, slot.0, lambdas.conv * scale, &grad_z);
        }
        None => {}
    }
    loss
}

/// Loss of one example under fixed negatives; accumulates `scale` times its
/// gradient into `grads`, except for the query projection part, which stays
/// in `queries` until flushed.
#[allow(clippy::too_many_arguments)]
pub fn example_loss_and_grads(
    example: &TrainingExample,
    negatives: &[u32],
    ctx: &ExampleContext,
    params: &ModelParams,
    lambdas: &LambdaWeights,
    grads: &mut SparseGrads,
    queries: &mut QueryCache,
    scale: f64,
) -> f64 {
    let words = || -> Vec<Target> {
        negatives
            .iter()
            .map(|&w| Target::Row(ParamTable::Word, w))
            .collect()
    };
    let pairs = || -> Vec<Target> { negatives.iter().map(|&p| pair_target(ctx, p)).collect() };
    match *example {
        TrainingExample::WordFromItem { item, word } => lm_term(
            params,
            (ParamTable::Item, item.0),
            Target::Row(ParamTable::Word, word.0),
            &words(),
            grads,
            scale,
        ),
        TrainingExample::WordFromUser { user, word } => lm_term(
            params,
            (ParamTable::User, user.0),
            Target::Row(ParamTable::Word, word.0),
            &words(),
            grads,
            scale,
        ),
        TrainingExample::PairFromItem { item, pair } => lm_term(
            params,
            (ParamTable::Item, item.0),
            pair_target(ctx, pair.0),
            &pairs(),
            grads,
            scale,
        ),
        TrainingExample::PairFromUser { user, pair } => lm_term(
            params,
            (ParamTable::User, user.0),
            pair_target(ctx, pair.0),
            &pairs(),
            grads,
            scale,
        ),
        TrainingExample::ItemGivenUq { user, query, item } => item_term(
            params, ctx, lambdas, user, query, item, None, negatives, grads, queries, scale,
        ),
        TrainingExample::ItemGivenUqc {
            user,
            query,
            item,
            answer,
        } => item_term(
            params,
            ctx,
            lambdas,
            user,
            query,
            item,
            Some(answer),
            negatives,
            grads,
            queries,
            scale,
        ),
    }
}

/// Loss and complete gradient of one example under fixed negatives.
pub fn loss_and_grads(
    example: &TrainingExample,
    negatives: &[u32],
    ctx: &ExampleContext,
    params: &ModelParams,
    lambdas: &LambdaWeights,
) -> (f64, SparseGrads) {
    let mut grads = SparseGrads::new(params.dim());
    let mut queries = QueryCache::new();
    let loss = example_loss_and_grads(
        example,
        negatives,
        ctx,
        params,
        lambdas,
        &mut grads,
        &mut queries,
        1.0,
    );
    queries.flush(params, &mut grads);
    (loss, grads)
}

/// Loss only, under fixed negatives.
pub fn example_loss(
    example: &TrainingExample,
    negatives: &[u32],
    ctx: &ExampleContext,
    params: &ModelParams,
    lambdas: &LambdaWeights,
) -> f64 {
    loss_and_grads(example, negatives, ctx, params, lambdas).0
}

/// Samples fresh negatives and returns the example's loss and gradient.
pub fn ns_loss_and_grads<R: Rng + ?Sized>(
    example: &TrainingExample,
    ctx: &ExampleContext,
    params: &ModelParams,
    tables: &SamplingTables,
    alpha: usize,
    lambdas: &LambdaWeights,
    rng: &mut R,
) -> (f64, SparseGrads) {
    let negatives = sample_negatives(example, tables, alpha, rng);
    loss_and_grads(example, &negatives, ctx, params, lambdas)
}
