use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::ids::ItemId;

fn relevant_set(relevant: &[ItemId]) -> Result<HashSet<ItemId>> {
    if relevant.is_empty() {
        return Err(Error::EmptyRelevant);
    }
    Ok(relevant.iter().copied().collect())
}

fn check_distinct(ranking: &[ItemId]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ranking.len());
    if ranking.iter().all(|v| seen.insert(*v)) {
        Ok(())
    } else {
        Err(Error::InvalidInput("ranking contains duplicate items".into()))
    }
}

/// Precision at each relevant hit within the top `k`, summed and divided by
/// the total number of relevant items.
pub fn average_precision_at(ranking: &[ItemId], relevant: &[ItemId], k: usize) -> Result<f64> {
    let rel = relevant_set(relevant)?;
    check_distinct(ranking)?;
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, v) in ranking.iter().take(k).enumerate() {
        if rel.contains(v) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / rel.len() as f64)
}

/// `1 / rank` of the first relevant item within the top `k`, else 0.
pub fn reciprocal_rank_at(ranking: &[ItemId], relevant: &[ItemId], k: usize) -> Result<f64> {
    let rel = relevant_set(relevant)?;
    check_distinct(ranking)?;
    Ok(ranking
        .iter()
        .take(k)
        .position(|v| rel.contains(v))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64))
}

/// Binary-gain DCG over the top `k`, normalized by the ideal DCG of
/// `min(|relevant|, k)` hits.
pub fn ndcg_at(ranking: &[ItemId], relevant: &[ItemId], k: usize) -> Result<f64> {
    let rel = relevant_set(relevant)?;
    check_distinct(ranking)?;
    let discount = |i: usize| 1.0 / ((i + 2) as f64).log2();
    let dcg: f64 = ranking
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, v)| rel.contains(v))
        .map(|(i, _)| discount(i))
        .sum();
    let ideal: f64 = (0..rel.len().min(k)).map(discount).sum();
    Ok(if ideal > 0.0 { dcg / ideal } else { 0.0 })
}
