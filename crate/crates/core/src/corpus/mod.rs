//! Corpus ingestion, vocabularies and train/test bookkeeping.
//!
//! A corpus directory holds four JSON-lines files (`users.jsonl`,
//! `items.jsonl`, `queries.jsonl`, `interactions.jsonl`). [`Corpus`] keeps the
//! records verbatim, so writing a corpus back out reproduces the input bytes,
//! and layers the tokenized, id-resolved views the model needs on top.

mod io;
mod records;
mod split;
mod synthetic;
mod vocab;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

pub use io::{INTERACTIONS_FILE, ITEMS_FILE, QUERIES_FILE, USERS_FILE};
pub use records::{InteractionRecord, ItemRecord, QueryRecord, RawCorpus, Split, UserRecord};
pub use split::split_train_test;
pub use synthetic::{generate_raw, generate_synthetic, SyntheticConfig};
pub use vocab::{tokenize, Table, Vocabulary};

use crate::error::{Error, Result};
use crate::ids::{ItemId, PairId, QueryId, SlotId, UserId, ValueId, WordId};
use vocab::OrderedCounter;

/// A slot-value annotation whose slot and value are both in the training
/// vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SlotValuePair {
    pub slot: SlotId,
    pub value: ValueId,
}

/// One `[slot, value]` annotation of an item resolved against the training
/// vocabularies. Either side may fall outside them: a slot never seen on a
/// training item, or a value too rare to embed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Annotation {
    pub slot: Option<SlotId>,
    pub value: Option<ValueId>,
}

impl Annotation {
    pub fn known_pair(&self) -> Option<SlotValuePair> {
        Some(SlotValuePair {
            slot: self.slot?,
            value: self.value?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Item {
    pub key: String,
    pub title: String,
    /// Title and description tokens.
    pub description_tokens: Vec<WordId>,
    /// Concatenated review tokens.
    pub review_tokens: Vec<WordId>,
    pub annotations: Vec<Annotation>,
    /// Training-vocabulary pair ids of the fully known annotations.
    pub pairs: Vec<PairId>,
}

impl Item {
    pub fn has_slot(&self, slot: SlotId) -> bool {
        self.annotations.iter().any(|a| a.slot == Some(slot))
    }

    /// All word tokens of the item (description then reviews).
    pub fn tokens(&self) -> impl Iterator<Item = WordId> + '_ {
        self.description_tokens
            .iter()
            .chain(&self.review_tokens)
            .copied()
    }
}

#[derive(Debug, Clone)]
pub struct User {
    pub key: String,
    pub review_tokens: Vec<WordId>,
    /// Union of the known pairs of the user's training purchases, sorted.
    pub history_pairs: Vec<PairId>,
}

#[derive(Debug, Clone)]
pub struct Query {
    pub key: String,
    pub text: String,
    /// In-vocabulary tokens of the query text.
    pub tokens: Vec<WordId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interaction {
    pub user: UserId,
    pub query: QueryId,
    pub item: ItemId,
    pub split: Split,
}

/// A `(user, query)` evaluation unit and the items judged relevant to it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Judgment {
    pub user: UserId,
    pub query: QueryId,
    pub relevant: Vec<ItemId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorpusOptions {
    /// Words occurring fewer times are dropped from the vocabulary.
    pub min_count: u64,
    /// Values carried by fewer distinct training items get no embedding;
    /// answering with them is an invalid question.
    pub min_value_count: u64,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        CorpusOptions {
            min_count: 5,
            min_value_count: 2,
        }
    }
}

/// Probability of keeping a token of relative frequency `freq` when
/// subsampling frequent words: `min(1, sqrt(threshold / freq))`.
pub fn subsample_keep_probability(freq: f64, threshold: f64) -> Result<f64> {
    if !(freq > 0.0 && freq <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "word frequency must be in (0, 1], got {freq}"
        )));
    }
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "subsampling threshold must be positive, got {threshold}"
        )));
    }
    Ok((threshold / freq).sqrt().min(1.0))
}

/// An immutable, fully indexed corpus.
#[derive(Debug, Clone)]
pub struct Corpus {
    raw: RawCorpus,
    options: CorpusOptions,
    pub users: Vec<User>,
    pub items: Vec<Item>,
    pub queries: Vec<Query>,
    pub interactions: Vec<Interaction>,
    pub vocab: Vocabulary,
    user_index: HashMap<String, UserId>,
    item_index: HashMap<String, ItemId>,
    query_index: HashMap<String, QueryId>,
    total_word_count: u64,
}

fn parse_err(file: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_string(),
        line,
        message: message.into(),
    }
}

fn words_in(vocab: &Vocabulary, text: &str, out: &mut Vec<WordId>) {
    out.extend(tokenize(text).filter_map(|t| vocab.word(&t)));
}

fn index_keys<'a>(
    file: &str,
    keys: impl Iterator<Item = &'a str>,
) -> Result<HashMap<String, u32>> {
    let mut map = HashMap::new();
    for (i, k) in keys.enumerate() {
        if k.is_empty() {
            return Err(parse_err(file, i + 1, "empty id"));
        }
        if map.insert(k.to_string(), i as u32).is_some() {
            return Err(parse_err(file, i + 1, format!("duplicate id {k:?}")));
        }
    }
    Ok(map)
}

impl Corpus {
    /// Reads and indexes a corpus directory with default options.
    pub fn ingest(dir: &Path) -> Result<Corpus> {
        Self::ingest_with(dir, CorpusOptions::default())
    }

    pub fn ingest_with(dir: &Path, options: CorpusOptions) -> Result<Corpus> {
        Corpus::from_raw(io::read_raw(dir)?, options)
    }

    /// Writes the four corpus files into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        io::write_raw(&self.raw, dir)
    }

    /// The bytes [`Corpus::write`] would produce, concatenated in file order.
    pub fn serialize(&self) -> String {
        io::render_raw(&self.raw)
            .into_iter()
            .map(|(_, s)| s)
            .collect()
    }

    pub fn raw(&self) -> &RawCorpus {
        &self.raw
    }

    pub fn options(&self) -> CorpusOptions {
        self.options
    }

    pub fn from_raw(raw: RawCorpus, options: CorpusOptions) -> Result<Corpus> {
        if options.min_count == 0 || options.min_value_count == 0 {
            return Err(Error::Config("min counts must be >= 1".into()));
        }
        let user_index = index_keys(USERS_FILE, raw.users.iter().map(|u| u.user_id.as_str()))?;
        let item_index = index_keys(ITEMS_FILE, raw.items.iter().map(|i| i.item_id.as_str()))?;
        let query_index =
            index_keys(QUERIES_FILE, raw.queries.iter().map(|q| q.query_id.as_str()))?;

        for (i, item) in raw.items.iter().enumerate() {
            for (slot, value) in &item.pairs {
                if slot.trim().is_empty() {
                    return Err(parse_err(ITEMS_FILE, i + 1, "annotation with empty slot"));
                }
                if value.trim().is_empty() {
                    return Err(parse_err(
                        ITEMS_FILE,
                        i + 1,
                        format!("annotation for slot {slot:?} has an empty value"),
                    ));
                }
            }
        }

        let mut interactions = Vec::with_capacity(raw.interactions.len());
        for (i, rec) in raw.interactions.iter().enumerate() {
            let line = i + 1;
            let user = *user_index.get(&rec.user_id).ok_or_else(|| {
                parse_err(INTERACTIONS_FILE, line, format!("unknown user {:?}", rec.user_id))
            })?;
            let query = *query_index.get(&rec.query_id).ok_or_else(|| {
                parse_err(INTERACTIONS_FILE, line, format!("unknown query {:?}", rec.query_id))
            })?;
            let item = *item_index.get(&rec.item_id).ok_or_else(|| {
                parse_err(INTERACTIONS_FILE, line, format!("unknown item {:?}", rec.item_id))
            })?;
            interactions.push(Interaction {
                user: UserId(user),
                query: QueryId(query),
                item: ItemId(item),
                split: rec.split,
            });
        }

        // Words: every text field, in file order.
        let mut words = OrderedCounter::default();
        for u in &raw.users {
            tokenize(&u.review_text).for_each(|t| words.add(&t));
        }
        for it in &raw.items {
            tokenize(&it.title).for_each(|t| words.add(&t));
            tokenize(&it.description).for_each(|t| words.add(&t));
            for r in &it.reviews {
                tokenize(r).for_each(|t| words.add(&t));
            }
        }
        for q in &raw.queries {
            tokenize(&q.query_text).for_each(|t| words.add(&t));
        }
        let words = words.into_table(options.min_count);

        // Slots and values: distinct training items only.
        let mut train_items = vec![false; raw.items.len()];
        for it in interactions.iter().filter(|it| it.split == Split::Train) {
            train_items[it.item.index()] = true;
        }
        let mut slots = OrderedCounter::default();
        let mut values = OrderedCounter::default();
        for (item, _) in raw.items.iter().zip(&train_items).filter(|(_, &t)| t) {
            let mut seen_slots = HashSet::new();
            let mut seen_values = HashSet::new();
            for (slot, value) in &item.pairs {
                if seen_slots.insert(slot.as_str()) {
                    slots.add(slot);
                }
                if seen_values.insert(value.as_str()) {
                    values.add(value);
                }
            }
        }
        let mut vocab = Vocabulary::new(
            words,
            slots.into_table(1),
            values.into_table(options.min_value_count),
        );

        let mut items = Vec::with_capacity(raw.items.len());
        for rec in &raw.items {
            let mut description_tokens = Vec::new();
            words_in(&vocab, &rec.title, &mut description_tokens);
            words_in(&vocab, &rec.description, &mut description_tokens);
            let mut review_tokens = Vec::new();
            for r in &rec.reviews {
                words_in(&vocab, r, &mut review_tokens);
            }
            let annotations = rec
                .pairs
                .iter()
                .map(|(s, v)| Annotation {
                    slot: vocab.slot(s),
                    value: vocab.value(v),
                })
                .collect();
            items.push(Item {
                key: rec.item_id.clone(),
                title: rec.title.clone(),
                description_tokens,
                review_tokens,
                annotations,
                pairs: Vec::new(),
            });
        }

        for (item, _) in items.iter().zip(&train_items).filter(|(_, &t)| t) {
            let distinct: BTreeSet<SlotValuePair> =
                item.annotations.iter().filter_map(Annotation::known_pair).collect();
            for p in distinct {
                vocab.count_pair(p.slot, p.value);
            }
        }
        for item in &mut items {
            let mut ids: Vec<PairId> = item
                .annotations
                .iter()
                .filter_map(Annotation::known_pair)
                .filter_map(|p| vocab.pair_id(p.slot, p.value))
                .collect();
            ids.sort_unstable();
            ids.dedup();
            item.pairs = ids;
        }

        let mut history: Vec<BTreeSet<PairId>> = vec![BTreeSet::new(); raw.users.len()];
        for it in interactions.iter().filter(|it| it.split == Split::Train) {
            history[it.user.index()].extend(items[it.item.index()].pairs.iter().copied());
        }
        let users = raw
            .users
            .iter()
            .zip(history)
            .map(|(rec, hist)| {
                let mut review_tokens = Vec::new();
                words_in(&vocab, &rec.review_text, &mut review_tokens);
                User {
                    key: rec.user_id.clone(),
                    review_tokens,
                    history_pairs: hist.into_iter().collect(),
                }
            })
            .collect();

        let queries = raw
            .queries
            .iter()
            .map(|rec| {
                let mut tokens = Vec::new();
                words_in(&vocab, &rec.query_text, &mut tokens);
                Query {
                    key: rec.query_id.clone(),
                    text: rec.query_text.clone(),
                    tokens,
                }
            })
            .collect();

        let total_word_count = vocab.words.counts().iter().sum();
        Ok(Corpus {
            user_index: user_index.into_iter().map(|(k, v)| (k, UserId(v))).collect(),
            item_index: item_index.into_iter().map(|(k, v)| (k, ItemId(v))).collect(),
            query_index: query_index.into_iter().map(|(k, v)| (k, QueryId(v))).collect(),
            raw,
            options,
            users,
            items,
            queries,
            interactions,
            vocab,
            total_word_count,
        })
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn num_queries(&self) -> usize {
        self.queries.len()
    }

    pub fn user_id(&self, key: &str) -> Option<UserId> {
        self.user_index.get(key).copied()
    }

    pub fn item_id(&self, key: &str) -> Option<ItemId> {
        self.item_index.get(key).copied()
    }

    pub fn query_id(&self, key: &str) -> Option<QueryId> {
        self.query_index.get(key).copied()
    }

    pub fn item(&self, id: ItemId) -> &Item {
        &self.items[id.index()]
    }

    pub fn item_record(&self, id: ItemId) -> &ItemRecord {
        &self.raw.items[id.index()]
    }

    /// In-vocabulary tokens of arbitrary text (out-of-vocabulary words dropped).
    pub fn words_of(&self, text: &str) -> Vec<WordId> {
        tokenize(text).filter_map(|t| self.vocab.word(&t)).collect()
    }

    /// Relative corpus frequency of a word among all in-vocabulary tokens.
    pub fn word_frequency(&self, w: WordId) -> f64 {
        self.vocab.words.count(w.index()) as f64 / self.total_word_count as f64
    }

    pub fn train_interactions(&self) -> impl Iterator<Item = &Interaction> {
        self.interactions.iter().filter(|i| i.split == Split::Train)
    }

    pub fn test_interactions(&self) -> impl Iterator<Item = &Interaction> {
        self.interactions.iter().filter(|i| i.split == Split::Test)
    }

    /// Test `(user, query)` pairs with their relevant items, in order of first
    /// appearance.
    pub fn test_judgments(&self) -> Vec<Judgment> {
        let mut order: Vec<(UserId, QueryId)> = Vec::new();
        let mut relevant: HashMap<(UserId, QueryId), Vec<ItemId>> = HashMap::new();
        for it in self.test_interactions() {
            let key = (it.user, it.query);
            let entry = relevant.entry(key).or_insert_with(|| {
                order.push(key);
                Vec::new()
            });
            if !entry.contains(&it.item) {
                entry.push(it.item);
            }
        }
        order
            .into_iter()
            .map(|(user, query)| Judgment {
                user,
                query,
                relevant: relevant.remove(&(user, query)).unwrap_or_default(),
            })
            .collect()
    }
}
