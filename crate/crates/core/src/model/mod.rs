//! Trainable parameters and the scoring side of the generative model.
//!
//! An item `v` is scored for a user `u`, a projected query `Q` and the
//! conversation so far by the exponent of the item softmax,
//! `v · (λ_u u + λ_Q Q + λ_c Σ c)`. The softmax denominator is shared by all
//! items, so ranking sorts on the exponent directly.

mod checkpoint;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::ids::{ItemId, SlotId, UserId, ValueId, WordId};

/// A dense row-major `rows x dim` table of embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Embedding {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Embedding {
            rows,
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn from_vec(rows: usize, dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * dim, "embedding shape mismatch");
        Embedding { rows, dim, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Table sizes of a parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamShape {
    pub dim: usize,
    pub users: usize,
    pub items: usize,
    pub words: usize,
    pub slots: usize,
    pub values: usize,
}

impl ParamShape {
    pub fn for_corpus(corpus: &Corpus, dim: usize) -> Self {
        ParamShape {
            dim,
            users: corpus.num_users(),
            items: corpus.num_items(),
            words: corpus.vocab.num_words(),
            slots: corpus.vocab.num_slots(),
            values: corpus.vocab.num_values(),
        }
    }
}

/// All trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub user_emb: Embedding,
    pub item_emb: Embedding,
    pub word_emb: Embedding,
    /// Slot embeddings used with positive answers.
    pub slot_pos_emb: Embedding,
    /// Separate slot embeddings for "not relevant" answers.
    pub slot_neg_emb: Embedding,
    pub value_emb: Embedding,
    /// `dim x dim`, row-major.
    pub proj_weight: Vec<f64>,
    pub proj_bias: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(shape: ParamShape) -> Self {
        let d = shape.dim;
        ModelParams {
            user_emb: Embedding::zeros(shape.users, d),
            item_emb: Embedding::zeros(shape.items, d),
            word_emb: Embedding::zeros(shape.words, d),
            slot_pos_emb: Embedding::zeros(shape.slots, d),
            slot_neg_emb: Embedding::zeros(shape.slots, d),
            value_emb: Embedding::zeros(shape.values, d),
            proj_weight: vec![0.0; d * d],
            proj_bias: vec![0.0; d],
        }
    }

    /// Embeddings uniform in `[-0.5/d, 0.5/d]`, projection identity plus
    /// uniform `[-0.01, 0.01]` noise, zero bias.
    pub fn init<R: Rng + ?Sized>(shape: ParamShape, rng: &mut R) -> Self {
        assert!(shape.dim >= 1, "embedding dimension must be >= 1");
        let mut p = Self::zeros(shape);
        let d = shape.dim;
        let half = 0.5 / d as f64;
        for table in [
            &mut p.user_emb,
            &mut p.item_emb,
            &mut p.word_emb,
            &mut p.slot_pos_emb,
            &mut p.slot_neg_emb,
            &mut p.value_emb,
        ] {
            for x in table.as_mut_slice() {
                *x = rng.random_range(-half..=half);
            }
        }
        for i in 0..d {
            for j in 0..d {
                let noise = rng.random_range(-0.01..=0.01);
                p.proj_weight[i * d + j] = if i == j { 1.0 + noise } else { noise };
            }
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.proj_bias.len()
    }

    pub fn shape(&self) -> ParamShape {
        ParamShape {
            dim: self.dim(),
            users: self.user_emb.rows(),
            items: self.item_emb.rows(),
            words: self.word_emb.rows(),
            slots: self.slot_pos_emb.rows(),
            values: self.value_emb.rows(),
        }
    }

    pub fn num_items(&self) -> usize {
        self.item_emb.rows()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// Every tensor in checkpoint order.
    pub fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        [
            self.user_emb.as_slice(),
            self.item_emb.as_slice(),
            self.word_emb.as_slice(),
            self.slot_pos_emb.as_slice(),
            self.slot_neg_emb.as_slice(),
            self.value_emb.as_slice(),
            self.proj_weight.as_slice(),
            self.proj_bias.as_slice(),
        ]
        .into_iter()
    }

    /// Squared L2 norm over every tensor.
    pub fn norm_sq(&self) -> f64 {
        self.tensors().flatten().map(|x| x * x).sum()
    }

    fn check_slot(&self, slot: SlotId) -> Result<()> {
        if slot.index() < self.slot_pos_emb.rows() {
            Ok(())
        } else {
            Err(Error::SlotOutOfRange(slot))
        }
    }

    fn check_user(&self, user: UserId) -> Result<()> {
        if user.index() < self.user_emb.rows() {
            Ok(())
        } else {
            Err(Error::UserOutOfRange(user))
        }
    }
}

/// Weights of the user, query and conversation terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaWeights {
    pub user: f64,
    pub query: f64,
    pub conv: f64,
}

impl Default for LambdaWeights {
    fn default() -> Self {
        LambdaWeights {
            user: 1.0,
            query: 1.0,
            conv: 1.0,
        }
    }
}

impl LambdaWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.user, self.query, self.conv];
        if all.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Config("lambda weights must be finite and >= 0".into()));
        }
        if all.iter().all(|&x| x == 0.0) {
            return Err(Error::Config("lambda weights must not all be zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Positive { slot: SlotId, value: ValueId },
    Negative { slot: SlotId },
}

/// The embedding contribution of one answered question.
#[derive(Debug, Clone, PartialEq)]
pub struct ConversationVector {
    pub vec: Vec<f64>,
    pub provenance: Provenance,
}

/// `(q + a) / 2` for a positive answer `a` to slot `q`.
pub fn compose_positive(
    params: &ModelParams,
    slot: SlotId,
    value: ValueId,
) -> Result<ConversationVector> {
    params.check_slot(slot)?;
    if value.index() >= params.value_emb.rows() {
        return Err(Error::UnknownValue(value.to_string()));
    }
    let q = params.slot_pos_emb.row(slot.index());
    let a = params.value_emb.row(value.index());
    Ok(ConversationVector {
        vec: q.iter().zip(a).map(|(x, y)| (x + y) / 2.0).collect(),
        provenance: Provenance::Positive { slot, value },
    })
}

/// The negative-feedback embedding `q⁻` of the slot.
pub fn compose_negative(params: &ModelParams, slot: SlotId) -> Result<ConversationVector> {
    params.check_slot(slot)?;
    Ok(ConversationVector {
        vec: params.slot_neg_emb.row(slot.index()).to_vec(),
        provenance: Provenance::Negative { slot },
    })
}

/// Mean of the known word embeddings; `None` if no word is known.
pub(crate) fn mean_word_embedding(params: &ModelParams, words: &[WordId]) -> Option<(Vec<f64>, usize)> {
    let mut mean = vec![0.0; params.dim()];
    let mut n = 0usize;
    for w in words.iter().filter(|w| w.index() < params.word_emb.rows()) {
        for (m, x) in mean.iter_mut().zip(params.word_emb.row(w.index())) {
            *m += x;
        }
        n += 1;
    }
    if n == 0 {
        return None;
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    Some((mean, n))
}

/// `W x + b`.
pub(crate) fn affine(params: &ModelParams, x: &[f64]) -> Vec<f64> {
    let d = params.dim();
    (0..d)
        .map(|i| dot(&params.proj_weight[i * d..(i + 1) * d], x) + params.proj_bias[i])
        .collect()
}

/// `tanh(W · mean(word embeddings) + b)`. Unknown word ids are dropped; an
/// empty or fully unknown query is an error.
pub fn project_query(params: &ModelParams, words: &[WordId]) -> Result<Vec<f64>> {
    let (mean, _) = mean_word_embedding(params, words).ok_or(Error::EmptyQuery)?;
    Ok(affine(params, &mean).into_iter().map(f64::tanh).collect())
}

/// `λ_u u + λ_Q Q + λ_c Σ c`. An anonymous user contributes nothing.
pub fn context_vector(
    params: &ModelParams,
    user: Option<UserId>,
    query_vec: &[f64],
    conv_sum: &[f64],
    lambdas: &LambdaWeights,
) -> Result<Vec<f64>> {
    let d = params.dim();
    if query_vec.len() != d || conv_sum.len() != d {
        return Err(Error::InvalidInput(format!(
            "vector length mismatch: expected {d}"
        )));
    }
    let mut z: Vec<f64> = query_vec.iter().map(|q| lambdas.query * q).collect();
    if let Some(u) = user {
        params.check_user(u)?;
        for (zi, ui) in z.iter_mut().zip(params.user_emb.row(u.index())) {
            *zi += lambdas.user * ui;
        }
    }
    for (zi, ci) in z.iter_mut().zip(conv_sum) {
        *zi += lambdas.conv * ci;
    }
    Ok(z)
}

/// Componentwise sum of the conversation vectors, accumulated in order.
pub fn sum_conversation(dim: usize, conv: &[ConversationVector]) -> Vec<f64> {
    let mut sum = vec![0.0; dim];
    for c in conv {
        for (s, x) in sum.iter_mut().zip(&c.vec) {
            *s += x;
        }
    }
    sum
}

/// The item-softmax exponent `v · (λ_u u + λ_Q Q + λ_c Σ c)`.
pub fn score_item(
    params: &ModelParams,
    user: Option<UserId>,
    query_vec: &[f64],
    conv: &[ConversationVector],
    item: ItemId,
    lambdas: &LambdaWeights,
) -> Result<f64> {
    if item.index() >= params.num_items() {
        return Err(Error::ItemOutOfRange(item));
    }
    let z = context_vector(
        params,
        user,
        query_vec,
        &sum_conversation(params.dim(), conv),
        lambdas,
    )?;
    Ok(dot(params.item_emb.row(item.index()), &z))
}

/// Scores every item against a context vector and sorts descending, ties by
/// ascending item id. `top_k` of `None` keeps the full ranking.
pub fn rank_by_context(params: &ModelParams, z: &[f64], top_k: Option<usize>) -> Vec<(ItemId, f64)> {
    let mut scored: Vec<(ItemId, f64)> = (0..params.num_items())
        .map(|i| (ItemId::from_index(i), dot(params.item_emb.row(i), z)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    if let Some(k) = top_k {
        scored.truncate(k);
    }
    scored
}

pub fn rank_items(
    params: &ModelParams,
    user: Option<UserId>,
    query_vec: &[f64],
    conv: &[ConversationVector],
    lambdas: &LambdaWeights,
    top_k: Option<usize>,
) -> Result<Vec<(ItemId, f64)>> {
    if top_k == Some(0) {
        return Err(Error::InvalidInput("top_k must be >= 1".into()));
    }
    let z = context_vector(
        params,
        user,
        query_vec,
        &sum_conversation(params.dim(), conv),
        lambdas,
    )?;
    Ok(rank_by_context(params, &z, top_k))
}

/// Names of every table row, kept alongside the parameters so a checkpoint
/// can be matched against a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ModelTables {
    pub users: Vec<String>,
    pub items: Vec<String>,
    pub words: Vec<String>,
    pub slots: Vec<String>,
    pub values: Vec<String>,
}

impl ModelTables {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        ModelTables {
            users: corpus.users.iter().map(|u| u.key.clone()).collect(),
            items: corpus.items.iter().map(|i| i.key.clone()).collect(),
            words: corpus.vocab.words.names().to_vec(),
            slots: corpus.vocab.slots.names().to_vec(),
            values: corpus.vocab.values.names().to_vec(),
        }
    }
}

/// Trained parameters plus the vocabularies they were trained against.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub params: ModelParams,
    pub tables: ModelTables,
}

impl Model {
    pub fn new(params: ModelParams, tables: ModelTables) -> Result<Model> {
        let s = params.shape();
        let t = &tables;
        if (s.users, s.items, s.words, s.slots, s.values)
            != (t.users.len(), t.items.len(), t.words.len(), t.slots.len(), t.values.len())
        {
            return Err(Error::Checkpoint(
                "parameter shapes disagree with vocabulary tables".into(),
            ));
        }
        Ok(Model { params, tables })
    }

    /// Fails unless the corpus indexes users, items, words, slots and values
    /// exactly as the model does.
    pub fn check_compatible(&self, corpus: &Corpus) -> Result<()> {
        let other = ModelTables::from_corpus(corpus);
        let pairs = [
            ("users", &self.tables.users, &other.users),
            ("items", &self.tables.items, &other.items),
            ("words", &self.tables.words, &other.words),
            ("slots", &self.tables.slots, &other.slots),
            ("values", &self.tables.values, &other.values),
        ];
        for (name, mine, theirs) in pairs {
            if mine != theirs {
                return Err(Error::Checkpoint(format!(
                    "{name} table differs from the corpus ({} vs {} entries)",
                    mine.len(),
                    theirs.len()
                )));
            }
        }
        Ok(())
    }
}
