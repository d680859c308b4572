//! Ranking metrics and strategy sweeps over simulated conversations.

mod metrics;

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::{average_precision_at, ndcg_at, reciprocal_rank_at};

use crate::ask::{QuestionPool, StrategyConfig, StrategyKind};
use crate::corpus::{Corpus, Judgment};
use crate::dialogue::{FeedbackCounts, Session, SimulatedUser};
use crate::error::{Error, Result};
use crate::ids::ItemId;
use crate::model::{LambdaWeights, Model};

pub const MAP_CUTOFF: usize = 100;
pub const MRR_CUTOFF: usize = 100;
pub const NDCG_CUTOFF: usize = 10;

pub const CSV_HEADER: &str = "strategy,L,seed,map,mrr,ndcg,pos_pct,neg_pct,invalid_pct,n_pairs";

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub map: f64,
    pub mrr: f64,
    pub ndcg: f64,
}

impl Metrics {
    pub fn of(ranking: &[ItemId], relevant: &[ItemId]) -> Result<Metrics> {
        Ok(Metrics {
            map: average_precision_at(ranking, relevant, MAP_CUTOFF)?,
            mrr: reciprocal_rank_at(ranking, relevant, MRR_CUTOFF)?,
            ndcg: ndcg_at(ranking, relevant, NDCG_CUTOFF)?,
        })
    }

    fn add(&mut self, o: &Metrics) {
        self.map += o.map;
        self.mrr += o.mrr;
        self.ndcg += o.ndcg;
    }

    fn scaled(&self, f: f64) -> Metrics {
        Metrics {
            map: self.map * f,
            mrr: self.mrr * f,
            ndcg: self.ndcg * f,
        }
    }
}

/// Shares of positive, negative and invalid answers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub positive_pct: f64,
    pub negative_pct: f64,
    pub invalid_pct: f64,
}

impl RatioReport {
    /// All zero when no question was asked.
    pub fn from_counts(c: &FeedbackCounts) -> RatioReport {
        let t = c.total();
        if t == 0 {
            return RatioReport::default();
        }
        let t = t as f64;
        RatioReport {
            positive_pct: c.positive as f64 / t,
            negative_pct: c.negative as f64 / t,
            invalid_pct: c.invalid as f64 / t,
        }
    }
}

/// Macro-averaged metrics of one strategy after `l` questions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub strategy: StrategyKind,
    pub l: usize,
    pub seed: u64,
    pub metrics: Metrics,
    pub counts: FeedbackCounts,
    pub n_pairs: usize,
}

impl EvalRow {
    pub fn ratios(&self) -> RatioReport {
        RatioReport::from_counts(&self.counts)
    }
}

/// What one `(user, query)` pair contributes at each requested `L`.
struct PairOutcome {
    metrics: Vec<Metrics>,
    counts: Vec<FeedbackCounts>,
}

/// Seed of the random strategy for one simulated conversation.
fn session_seed(base: u64, pair: usize, target: usize) -> u64 {
    let mut x = base ^ (pair as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (target as u64).rotate_left(32);
    // splitmix64 finalizer
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[allow(clippy::too_many_arguments)]
fn evaluate_pair(
    model: &Model,
    corpus: &Corpus,
    pool: &QuestionPool,
    strategy: StrategyKind,
    ls: &[usize],
    lambdas: LambdaWeights,
    config: &StrategyConfig,
    index: usize,
    judgment: &Judgment,
) -> Result<Option<PairOutcome>> {
    let words = &corpus.queries[judgment.query.index()].tokens;
    if words.is_empty() {
        return Ok(None);
    }
    let max_l = ls.iter().copied().max().unwrap_or(0);
    let mut sum = vec![Metrics::default(); ls.len()];
    let mut counts = vec![FeedbackCounts::default(); ls.len()];
    let mut targets = 0usize;
    for (t, &target) in judgment.relevant.iter().enumerate() {
        let Ok(user) = SimulatedUser::new(corpus, target) else {
            continue;
        };
        let cfg = StrategyConfig {
            seed: session_seed(config.seed, index, t),
            ..config.clone()
        };
        let mut session = Session::start(model, Some(judgment.user), words, strategy, &cfg, lambdas)?;
        let mut at_round = Vec::with_capacity(max_l + 1);
        at_round.push((Metrics::of(&session.ranked_items(), &judgment.relevant)?, FeedbackCounts::default()));
        for _ in 0..max_l {
            let slot = match session.next_question(pool, &cfg) {
                Ok(s) => s,
                Err(Error::PoolExhausted) => break,
                Err(e) => return Err(e),
            };
            session.apply_feedback(model, slot, user.answer(slot)?)?;
            at_round.push((
                Metrics::of(&session.ranked_items(), &judgment.relevant)?,
                session.feedback_counts(),
            ));
        }
        for (i, &l) in ls.iter().enumerate() {
            let (m, c) = &at_round[l.min(at_round.len() - 1)];
            sum[i].add(m);
            counts[i].positive += c.positive;
            counts[i].negative += c.negative;
            counts[i].invalid += c.invalid;
        }
        targets += 1;
    }
    if targets == 0 {
        return Ok(None);
    }
    Ok(Some(PairOutcome {
        metrics: sum.iter().map(|m| m.scaled(1.0 / targets as f64)).collect(),
        counts,
    }))
}

/// Runs every test `(user, query)` pair, once per relevant item as the
/// simulated target, and reports metrics after each `L` in `ls`. A pair's
/// targets are averaged before the macro average over pairs.
pub fn evaluate_at(
    model: &Model,
    corpus: &Corpus,
    pool: &QuestionPool,
    strategy: StrategyKind,
    ls: &[usize],
    lambdas: LambdaWeights,
    config: &StrategyConfig,
) -> Result<Vec<EvalRow>> {
    model.check_compatible(corpus)?;
    let judgments = corpus.test_judgments();
    if judgments.is_empty() {
        return Err(Error::NoTestPairs);
    }
    let outcomes: Vec<Option<PairOutcome>> = judgments
        .par_iter()
        .enumerate()
        .map(|(i, j)| evaluate_pair(model, corpus, pool, strategy, ls, lambdas, config, i, j))
        .collect::<Result<_>>()?;
    let outcomes: Vec<PairOutcome> = outcomes.into_iter().flatten().collect();
    if outcomes.is_empty() {
        return Err(Error::NoTestPairs);
    }
    let n = outcomes.len();
    Ok(ls
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let mut m = Metrics::default();
            let mut c = FeedbackCounts::default();
            for o in &outcomes {
                m.add(&o.metrics[i]);
                c.positive += o.counts[i].positive;
                c.negative += o.counts[i].negative;
                c.invalid += o.counts[i].invalid;
            }
            EvalRow {
                strategy,
                l,
                seed: config.seed,
                metrics: m.scaled(1.0 / n as f64),
                counts: c,
                n_pairs: n,
            }
        })
        .collect())
}

/// Metrics after exactly `l` questions.
pub fn evaluate(
    model: &Model,
    corpus: &Corpus,
    pool: &QuestionPool,
    strategy: StrategyKind,
    l: usize,
    lambdas: LambdaWeights,
    config: &StrategyConfig,
) -> Result<EvalRow> {
    Ok(evaluate_at(model, corpus, pool, strategy, &[l], lambdas, config)?.remove(0))
}

/// A CSV line: a seeded run, or the mean over seeds when `seed` is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub strategy: StrategyKind,
    pub l: usize,
    pub seed: Option<u64>,
    pub metrics: Metrics,
    pub ratios: RatioReport,
    pub n_pairs: f64,
}

/// Every `(strategy, L, seed)` combination, followed by one mean row per
/// `(strategy, L)`.
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    model: &Model,
    corpus: &Corpus,
    pool: &QuestionPool,
    strategies: &[StrategyKind],
    ls: &[usize],
    seeds: &[u64],
    lambdas: LambdaWeights,
    config: &StrategyConfig,
) -> Result<Vec<SweepRow>> {
    if strategies.is_empty() || ls.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidInput(
            "sweep needs at least one strategy, L and seed".into(),
        ));
    }
    let mut rows = Vec::new();
    let mut means = Vec::new();
    for &s in strategies {
        let mut by_seed = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let cfg = StrategyConfig {
                seed,
                ..config.clone()
            };
            by_seed.push(evaluate_at(model, corpus, pool, s, ls, lambdas, &cfg)?);
        }
        for (i, &l) in ls.iter().enumerate() {
            let seeded: Vec<SweepRow> = by_seed
                .iter()
                .map(|r| {
                    let r = &r[i];
                    SweepRow {
                        strategy: s,
                        l,
                        seed: Some(r.seed),
                        metrics: r.metrics,
                        ratios: r.ratios(),
                        n_pairs: r.n_pairs as f64,
                    }
                })
                .collect();
            means.push(mean_row(s, l, &seeded));
            rows.extend(seeded);
        }
    }
    rows.extend(means);
    Ok(rows)
}

fn mean_row(strategy: StrategyKind, l: usize, rows: &[SweepRow]) -> SweepRow {
    let k = rows.len() as f64;
    let avg = |f: &dyn Fn(&SweepRow) -> f64| rows.iter().map(f).sum::<f64>() / k;
    SweepRow {
        strategy,
        l,
        seed: None,
        metrics: Metrics {
            map: avg(&|r| r.metrics.map),
            mrr: avg(&|r| r.metrics.mrr),
            ndcg: avg(&|r| r.metrics.ndcg),
        },
        ratios: RatioReport {
            positive_pct: avg(&|r| r.ratios.positive_pct),
            negative_pct: avg(&|r| r.ratios.negative_pct),
            invalid_pct: avg(&|r| r.ratios.invalid_pct),
        },
        n_pairs: avg(&|r| r.n_pairs),
    }
}

pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let seed = r.seed.map_or_else(|| "mean".to_string(), |s| s.to_string());
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.strategy,
            r.l,
            seed,
            r.metrics.map,
            r.metrics.mrr,
            r.metrics.ndcg,
            r.ratios.positive_pct,
            r.ratios.negative_pct,
            r.ratios.invalid_pct,
            r.n_pairs
        )
        .expect("writing to a String cannot fail");
    }
    out
}
