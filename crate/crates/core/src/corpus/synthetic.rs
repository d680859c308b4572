//! Seeded synthetic corpora with planted query/item/user structure.
//!
//! Every query owns a block of topic words and its own slots, each with a few
//! common values. Items belong to one query topic; with probability
//! `structure_strength` a token is drawn from the topic block and an
//! annotation from the topic's slots and common values, otherwise the token
//! is uniform over the vocabulary and the annotation names a uniformly drawn
//! slot of another topic with a long-tail value. Long-tail values are mostly seen once, so
//! they fall below the value-count threshold and asking about them is an
//! invalid question, as out-of-vocabulary answers are on real data.
//!
//! Users prefer one topic and one common value per topical slot, which drives
//! which items they buy.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::records::{
    InteractionRecord, ItemRecord, QueryRecord, RawCorpus, Split, UserRecord,
};
use super::split::split_train_test;
use super::{Corpus, CorpusOptions};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub num_queries: usize,
    /// Slots owned by each query topic.
    pub slots_per_topic: usize,
    /// Common values per slot.
    pub num_values: usize,
    /// Long-tail values per slot, used by unstructured annotations.
    pub tail_values: usize,
    pub vocab_size: usize,
    pub tokens_per_item: usize,
    pub tokens_per_user: usize,
    pub pairs_per_item: usize,
    pub interactions_per_user: usize,
    pub seed: u64,
    /// In `[0, 1]`: 0 makes text, annotations and purchases independent of
    /// the query topics.
    pub structure_strength: f64,
    /// Per-user fraction of interactions held out for test.
    pub test_fraction: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_users: 2000,
            num_items: 500,
            num_queries: 20,
            slots_per_topic: 8,
            num_values: 4,
            tail_values: 200,
            vocab_size: 2000,
            tokens_per_item: 40,
            tokens_per_user: 30,
            pairs_per_item: 6,
            interactions_per_user: 5,
            seed: 0,
            structure_strength: 0.8,
            test_fraction: 0.2,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_users", self.num_users),
            ("num_items", self.num_items),
            ("num_queries", self.num_queries),
            ("slots_per_topic", self.slots_per_topic),
            ("num_values", self.num_values),
            ("tail_values", self.tail_values),
            ("vocab_size", self.vocab_size),
            ("tokens_per_item", self.tokens_per_item),
            ("tokens_per_user", self.tokens_per_user),
            ("pairs_per_item", self.pairs_per_item),
            ("interactions_per_user", self.interactions_per_user),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be >= 1")));
        }
        if self.pairs_per_item > self.num_queries * self.slots_per_topic {
            return Err(Error::Config(format!(
                "pairs_per_item ({}) exceeds the number of slots ({})",
                self.pairs_per_item,
                self.num_queries * self.slots_per_topic
            )));
        }
        if !(0.0..=1.0).contains(&self.structure_strength) {
            return Err(Error::Config("structure_strength must be in [0, 1]".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config("test_fraction must be in (0, 1)".into()));
        }
        Ok(())
    }
}

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "ze", "pu", "da", "fe", "go", "hi", "ju", "be",
];

/// Deterministic pronounceable token for an index; distinct indices give
/// distinct strings.
fn pseudo_word(mut i: usize) -> String {
    let mut digits = Vec::new();
    loop {
        digits.push(i % SYLLABLES.len());
        i /= SYLLABLES.len();
        if i == 0 {
            break;
        }
    }
    while digits.len() < 2 {
        digits.push(0);
    }
    digits.iter().rev().map(|&d| SYLLABLES[d]).collect()
}

fn slot_name(s: usize) -> String {
    format!("aspect{s}")
}

fn value_name(s: usize, v: usize) -> String {
    format!("{}-{}", slot_name(s), pseudo_word(v))
}

struct Topic {
    words: std::ops::Range<usize>,
    /// Topical slot ids; each has common values `0..num_values`.
    slots: std::ops::Range<usize>,
}

struct Planted {
    topic: usize,
    pairs: Vec<(usize, usize)>,
}

fn draw_tokens(
    rng: &mut ChaCha8Rng,
    n: usize,
    topic: &Topic,
    vocab_size: usize,
    strength: f64,
) -> Vec<String> {
    (0..n)
        .map(|_| {
            let w = if rng.random::<f64>() < strength {
                rng.random_range(topic.words.clone())
            } else {
                rng.random_range(0..vocab_size)
            };
            pseudo_word(w)
        })
        .collect()
}

/// Generates the raw records of a synthetic corpus.
pub fn generate_raw(cfg: &SyntheticConfig) -> Result<RawCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let s = cfg.structure_strength;

    let block = (cfg.vocab_size / (2 * cfg.num_queries)).max(1);
    let topics: Vec<Topic> = (0..cfg.num_queries)
        .map(|q| {
            let start = (q * block) % cfg.vocab_size;
            Topic {
                words: start..(start + block).min(cfg.vocab_size),
                slots: q * cfg.slots_per_topic..(q + 1) * cfg.slots_per_topic,
            }
        })
        .collect();
    let num_slots = cfg.num_queries * cfg.slots_per_topic;

    let queries: Vec<QueryRecord> = topics
        .iter()
        .enumerate()
        .map(|(q, t)| {
            let n = t.words.len().min(3);
            let words: Vec<String> = sample(&mut rng, t.words.len(), n)
                .into_iter()
                .map(|i| pseudo_word(t.words.start + i))
                .collect();
            QueryRecord {
                query_id: format!("q{q}"),
                query_text: words.join(" "),
            }
        })
        .collect();

    let mut planted = Vec::with_capacity(cfg.num_items);
    let mut items = Vec::with_capacity(cfg.num_items);
    let mut item_tokens = Vec::with_capacity(cfg.num_items);
    for _ in 0..cfg.num_items {
        let topic_id = rng.random_range(0..cfg.num_queries);
        let topic = &topics[topic_id];
        let tokens = draw_tokens(&mut rng, cfg.tokens_per_item, topic, cfg.vocab_size, s);

        let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(cfg.pairs_per_item);
        let mut topical_left: Vec<usize> = topic.slots.clone().collect();
        while pairs.len() < cfg.pairs_per_item {
            let (slot, value) = if rng.random::<f64>() < s && !topical_left.is_empty() {
                let slot = topical_left.swap_remove(rng.random_range(0..topical_left.len()));
                (slot, rng.random_range(0..cfg.num_values))
            } else {
                // Another topic's slot, so a topic's own slots only ever
                // carry common values.
                let foreign = num_slots - cfg.slots_per_topic;
                if foreign == 0 {
                    break;
                }
                let mut slot = rng.random_range(0..foreign);
                if slot >= topic.slots.start {
                    slot += cfg.slots_per_topic;
                }
                if pairs.iter().any(|(s, _)| *s == slot) {
                    continue;
                }
                (slot, cfg.num_values + rng.random_range(0..cfg.tail_values))
            };
            pairs.push((slot, value));
        }

        item_tokens.push(tokens);
        planted.push(Planted {
            topic: topic_id,
            pairs,
        });
    }

    // A common value carried by a single item would have no embedding and
    // make its question invalid; fold it into the slot's most frequent
    // common value so invalid answers come from the long tail only.
    let mut counts: std::collections::HashMap<(usize, usize), usize> =
        std::collections::HashMap::new();
    for p in &planted {
        for &(slot, value) in p.pairs.iter().filter(|(_, v)| *v < cfg.num_values) {
            *counts.entry((slot, value)).or_default() += 1;
        }
    }
    for p in &mut planted {
        for pair in p.pairs.iter_mut().filter(|(_, v)| *v < cfg.num_values) {
            if counts[pair] == 1 {
                let best = (0..cfg.num_values)
                    .max_by_key(|&v| (counts.get(&(pair.0, v)).copied().unwrap_or(0), std::cmp::Reverse(v)))
                    .expect("num_values >= 1");
                pair.1 = best;
            }
        }
    }

    for (i, (tokens, p)) in item_tokens.iter().zip(&planted).enumerate() {
        let pairs = &p.pairs;
        let title_len = tokens.len().min(3);
        let rest = &tokens[title_len..];
        let desc_len = rest.len() / 2;
        let (desc, reviews) = rest.split_at(desc_len);
        let half = reviews.len() / 2;
        let reviews: Vec<String> = [&reviews[..half], &reviews[half..]]
            .iter()
            .filter(|r| !r.is_empty())
            .map(|r| r.join(" "))
            .collect();
        items.push(ItemRecord {
            item_id: format!("i{i}"),
            title: tokens[..title_len].join(" "),
            description: desc.join(" "),
            reviews,
            pairs: pairs
                .iter()
                .map(|&(s, v)| (slot_name(s), value_name(s, v)))
                .collect(),
        });
    }

    let mut by_topic: Vec<Vec<usize>> = vec![Vec::new(); cfg.num_queries];
    for (i, p) in planted.iter().enumerate() {
        by_topic[p.topic].push(i);
    }

    let mut users = Vec::with_capacity(cfg.num_users);
    let mut interactions = Vec::new();
    let mut weights = Vec::new();
    for u in 0..cfg.num_users {
        let home = rng.random_range(0..cfg.num_queries);
        let taste: Vec<(usize, usize)> = topics[home]
            .slots
            .clone()
            .map(|slot| (slot, rng.random_range(0..cfg.num_values)))
            .collect();
        let review = draw_tokens(&mut rng, cfg.tokens_per_user, &topics[home], cfg.vocab_size, s);
        users.push(UserRecord {
            user_id: format!("u{u}"),
            review_text: review.join(" "),
        });

        for _ in 0..cfg.interactions_per_user {
            let query = if rng.random::<f64>() < s {
                home
            } else {
                rng.random_range(0..cfg.num_queries)
            };
            let candidates = &by_topic[query];
            let item = if rng.random::<f64>() < s && !candidates.is_empty() {
                weights.clear();
                weights.extend(candidates.iter().map(|&i| {
                    let matches = planted[i]
                        .pairs
                        .iter()
                        .filter(|p| taste.contains(p))
                        .count();
                    1.0 + 4.0 * matches as f64
                }));
                let total: f64 = weights.iter().sum();
                let mut x = rng.random::<f64>() * total;
                let mut pick = candidates.len() - 1;
                for (k, w) in weights.iter().enumerate() {
                    if x < *w {
                        pick = k;
                        break;
                    }
                    x -= w;
                }
                candidates[pick]
            } else {
                rng.random_range(0..cfg.num_items)
            };
            interactions.push(InteractionRecord {
                user_id: format!("u{u}"),
                query_id: format!("q{query}"),
                item_id: format!("i{item}"),
                split: Split::Train,
            });
        }
    }

    let mut raw = RawCorpus {
        users,
        items,
        queries,
        interactions,
    };
    let (train, test) = split_train_test(&raw, cfg.test_fraction)?;
    // Test pairs must be answerable from training: drop held-out purchases of
    // items or queries that never occur in train.
    let train_items: std::collections::HashSet<&str> =
        train.iter().map(|r| r.item_id.as_str()).collect();
    let train_queries: std::collections::HashSet<&str> =
        train.iter().map(|r| r.query_id.as_str()).collect();
    let test: Vec<InteractionRecord> = test
        .iter()
        .filter(|r| {
            train_items.contains(r.item_id.as_str()) && train_queries.contains(r.query_id.as_str())
        })
        .cloned()
        .collect();
    let mut all = train;
    all.extend(test);
    raw.interactions = all;
    Ok(raw)
}

/// Generates and indexes a synthetic corpus with default corpus options.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Corpus> {
    Corpus::from_raw(generate_raw(cfg)?, CorpusOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pseudo_words_are_distinct() {
        let words: std::collections::HashSet<String> = (0..5000).map(pseudo_word).collect();
        assert_eq!(words.len(), 5000);
        assert_eq!(pseudo_word(0), "kaka");
    }

    #[test]
    fn config_validation() {
        let mut cfg = SyntheticConfig {
            num_items: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.num_items = 10;
        cfg.structure_strength = 1.5;
        assert!(cfg.validate().is_err());
        cfg.structure_strength = 0.5;
        cfg.pairs_per_item = cfg.num_queries * cfg.slots_per_topic + 1;
        assert!(cfg.validate().is_err());
    }
}
