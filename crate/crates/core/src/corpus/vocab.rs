use std::collections::HashMap;

use crate::ids::{PairId, SlotId, ValueId, WordId};

/// Lowercases and splits on every run of non-alphanumeric characters.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

/// An id <-> string table with per-entry frequency counts.
#[derive(Debug, Clone, Default)]
pub struct Table {
    names: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, u32>,
}

impl Table {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts[id]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn lookup(&self, name: &str) -> Option<usize> {
        self.index.get(name).map(|&i| i as usize)
    }

    pub(crate) fn from_counted(entries: impl IntoIterator<Item = (String, u64)>) -> Self {
        let mut t = Table::default();
        for (name, count) in entries {
            debug_assert!(!t.index.contains_key(&name));
            t.index.insert(name.clone(), t.names.len() as u32);
            t.names.push(name);
            t.counts.push(count);
        }
        t
    }
}

/// Counts occurrences while remembering first-seen order.
#[derive(Debug, Default)]
pub(crate) struct OrderedCounter {
    order: Vec<String>,
    counts: HashMap<String, u64>,
}

impl OrderedCounter {
    pub fn add(&mut self, key: &str) {
        match self.counts.get_mut(key) {
            Some(c) => *c += 1,
            None => {
                self.order.push(key.to_string());
                self.counts.insert(key.to_string(), 1);
            }
        }
    }

    /// Entries with count >= `min_count`, in first-seen order.
    pub fn into_table(self, min_count: u64) -> Table {
        let OrderedCounter { order, counts } = self;
        Table::from_counted(order.into_iter().filter_map(|k| {
            let c = counts[&k];
            (c >= min_count).then_some((k, c))
        }))
    }
}

/// Word, slot, value and slot-value pair vocabularies.
///
/// Words come from every text field of the corpus. Slots, values and pairs
/// come from the annotations of items purchased in the training split only;
/// a value must be carried by at least `min_value_count` distinct training
/// items to get an embedding.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    pub words: Table,
    pub slots: Table,
    pub values: Table,
    pairs: Vec<(SlotId, ValueId)>,
    pair_counts: Vec<u64>,
    pair_index: HashMap<(SlotId, ValueId), PairId>,
}

impl Vocabulary {
    pub(crate) fn new(words: Table, slots: Table, values: Table) -> Self {
        Vocabulary {
            words,
            slots,
            values,
            ..Default::default()
        }
    }

    pub(crate) fn count_pair(&mut self, slot: SlotId, value: ValueId) {
        match self.pair_index.get(&(slot, value)) {
            Some(p) => self.pair_counts[p.index()] += 1,
            None => {
                let id = PairId::from_index(self.pairs.len());
                self.pair_index.insert((slot, value), id);
                self.pairs.push((slot, value));
                self.pair_counts.push(1);
            }
        }
    }

    pub fn num_words(&self) -> usize {
        self.words.len()
    }

    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn num_values(&self) -> usize {
        self.values.len()
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn word(&self, w: &str) -> Option<WordId> {
        self.words.lookup(w).map(WordId::from_index)
    }

    pub fn slot(&self, s: &str) -> Option<SlotId> {
        self.slots.lookup(s).map(SlotId::from_index)
    }

    pub fn value(&self, v: &str) -> Option<ValueId> {
        self.values.lookup(v).map(ValueId::from_index)
    }

    /// Case-insensitive exact match against the value vocabulary.
    pub fn value_ignore_case(&self, v: &str) -> Vec<ValueId> {
        if let Some(id) = self.value(v) {
            return vec![id];
        }
        let needle = v.to_lowercase();
        self.values
            .names()
            .iter()
            .enumerate()
            .filter(|(_, n)| n.to_lowercase() == needle)
            .map(|(i, _)| ValueId::from_index(i))
            .collect()
    }

    pub fn slot_name(&self, s: SlotId) -> &str {
        self.slots.name(s.index())
    }

    pub fn value_name(&self, v: ValueId) -> &str {
        self.values.name(v.index())
    }

    pub fn pair(&self, p: PairId) -> (SlotId, ValueId) {
        self.pairs[p.index()]
    }

    pub fn pairs(&self) -> &[(SlotId, ValueId)] {
        &self.pairs
    }

    pub fn pair_id(&self, slot: SlotId, value: ValueId) -> Option<PairId> {
        self.pair_index.get(&(slot, value)).copied()
    }

    /// Number of distinct training items annotated with the pair.
    pub fn pair_count(&self, p: PairId) -> u64 {
        self.pair_counts[p.index()]
    }

    pub fn pair_counts(&self) -> &[u64] {
        &self.pair_counts
    }

    /// Values seen with `slot` in training, most frequent first.
    pub fn values_for_slot(&self, slot: SlotId) -> Vec<(ValueId, u64)> {
        let mut out: Vec<(ValueId, u64)> = self
            .pairs
            .iter()
            .zip(&self.pair_counts)
            .filter(|((s, _), _)| *s == slot)
            .map(|((_, v), &c)| (*v, c))
            .collect();
        out.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        out
    }
}
