use rand::Rng;

use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// A discrete distribution `P(i) ∝ c_i^{3/4}` sampled by inverse CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingTable {
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

/// Builds the unigram^{3/4} negative-sampling distribution over `counts`.
pub fn build_sampling_table(counts: &[u64]) -> Result<SamplingTable> {
    if counts.is_empty() {
        return Err(Error::InvalidInput("sampling table needs at least one id".into()));
    }
    if counts.contains(&0) {
        return Err(Error::InvalidInput("sampling counts must be positive".into()));
    }
    let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
    let total: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let mut acc = 0.0;
    let mut cumulative: Vec<f64> = probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    *cumulative.last_mut().expect("non-empty") = 1.0;
    Ok(SamplingTable { probs, cumulative })
}

impl SamplingTable {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.probs.len() - 1)
    }
}

/// Negative-sampling distributions: words and pairs by smoothed frequency,
/// items uniformly.
#[derive(Debug, Clone)]
pub struct SamplingTables {
    pub words: SamplingTable,
    pub pairs: SamplingTable,
    pub num_items: usize,
}

impl SamplingTables {
    pub fn from_corpus(corpus: &Corpus) -> Result<SamplingTables> {
        if corpus.num_items() == 0 {
            return Err(Error::InvalidInput("corpus has no items".into()));
        }
        Ok(SamplingTables {
            words: build_sampling_table(corpus.vocab.words.counts())
                .map_err(|_| Error::InvalidInput("corpus has no in-vocabulary words".into()))?,
            pairs: build_sampling_table(corpus.vocab.pair_counts())
                .map_err(|_| Error::InvalidInput("corpus has no training pairs".into()))?,
            num_items: corpus.num_items(),
        })
    }

    pub fn sample_item<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(0..self.num_items)
    }
}
