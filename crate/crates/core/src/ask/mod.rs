//! Clarifying-question selection.
//!
//! All strategies pick a slot from the question pool. GBS splits the current
//! preference mass in half; LinRel and the two GP acquisitions treat each
//! slot's item-occurrence row as a feature vector and regress the feedback
//! observed so far (`+1` for a positive answer, `-1` otherwise).

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::ids::{ItemId, SlotId};

/// Scores closer than this are ties, resolved by ascending slot id.
pub const TIE_EPS: f64 = 1e-10;

/// Slots and their binary item-occurrence rows.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionPool {
    num_items: usize,
    /// `rows[q][v]` is 1.0 iff slot `q` annotates item `v`.
    rows: Vec<Vec<f64>>,
    /// `cooc[a * F + b] = |x_a ∩ x_b|`.
    cooc: Vec<f64>,
}

impl QuestionPool {
    /// Builds the pool from binary occurrence rows, one per slot.
    pub fn from_occurrence(rows: Vec<Vec<bool>>) -> Result<QuestionPool> {
        let num_items = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || num_items == 0 {
            return Err(Error::InvalidInput("question pool needs slots and items".into()));
        }
        for (q, r) in rows.iter().enumerate() {
            if r.len() != num_items {
                return Err(Error::InvalidInput(format!(
                    "occurrence row {q} has {} entries, expected {num_items}",
                    r.len()
                )));
            }
            if !r.iter().any(|&b| b) {
                return Err(Error::InvalidInput(format!(
                    "slot {q} annotates no item"
                )));
            }
        }
        let rows: Vec<Vec<f64>> = rows
            .into_iter()
            .map(|r| r.into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect())
            .collect();
        let f = rows.len();
        let mut cooc = vec![0.0; f * f];
        for a in 0..f {
            for b in a..f {
                let n: f64 = rows[a].iter().zip(&rows[b]).map(|(x, y)| x * y).sum();
                cooc[a * f + b] = n;
                cooc[b * f + a] = n;
            }
        }
        Ok(QuestionPool {
            num_items,
            rows,
            cooc,
        })
    }

    /// One row per training slot; an item contains a slot when its
    /// annotation set names it.
    pub fn from_corpus(corpus: &Corpus) -> Result<QuestionPool> {
        let f = corpus.vocab.num_slots();
        let mut rows = vec![vec![false; corpus.num_items()]; f];
        for (v, item) in corpus.items.iter().enumerate() {
            for s in item.annotations.iter().filter_map(|a| a.slot) {
                rows[s.index()][v] = true;
            }
        }
        QuestionPool::from_occurrence(rows)
    }

    pub fn num_slots(&self) -> usize {
        self.rows.len()
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn row(&self, slot: SlotId) -> &[f64] {
        &self.rows[slot.index()]
    }

    pub fn contains(&self, slot: SlotId, item: ItemId) -> bool {
        self.rows[slot.index()][item.index()] != 0.0
    }

    /// `x_a · x_b`.
    pub fn overlap(&self, a: SlotId, b: SlotId) -> f64 {
        self.cooc[a.index() * self.num_slots() + b.index()]
    }

    /// `‖x_a - x_b‖²`.
    pub fn sq_distance(&self, a: SlotId, b: SlotId) -> f64 {
        self.overlap(a, a) + self.overlap(b, b) - 2.0 * self.overlap(a, b)
    }

    fn check(&self, slot: SlotId) -> Result<()> {
        if slot.index() < self.num_slots() {
            Ok(())
        } else {
            Err(Error::SlotOutOfRange(slot))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StrategyKind {
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "gbs")]
    Gbs,
    #[serde(rename = "linrel")]
    LinRel,
    #[serde(rename = "gp-ucb")]
    GpUcb,
    #[serde(rename = "gp-ei")]
    GpEi,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Random,
        StrategyKind::Gbs,
        StrategyKind::LinRel,
        StrategyKind::GpUcb,
        StrategyKind::GpEi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::Gbs => "gbs",
            StrategyKind::LinRel => "linrel",
            StrategyKind::GpUcb => "gp-ucb",
            StrategyKind::GpEi => "gp-ei",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown strategy {s:?} (expected random, gbs, linrel, gp-ucb or gp-ei)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    /// LinRel exploration weight.
    pub c: f64,
    /// UCB exploration weight.
    pub beta: f64,
    /// LinRel ridge term.
    pub lambda_i: f64,
    pub kernel_sigma2: f64,
    pub noise_sigma2: f64,
    /// GBS picks before a GP acquisition takes over.
    pub gp_init_t0: usize,
    pub seed: u64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            c: 4.0,
            beta: 2.0,
            lambda_i: 0.1,
            kernel_sigma2: 1.0,
            noise_sigma2: 1.0,
            gp_init_t0: 2,
            seed: 0,
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite();
        if !(ok(self.c) && self.c >= 0.0) {
            return Err(Error::Config("c must be >= 0".into()));
        }
        if !(ok(self.beta) && self.beta >= 0.0) {
            return Err(Error::Config("beta must be >= 0".into()));
        }
        for (name, v) in [
            ("lambda_i", self.lambda_i),
            ("kernel_sigma2", self.kernel_sigma2),
            ("noise_sigma2", self.noise_sigma2),
        ] {
            if !(ok(v) && v > 0.0) {
                return Err(Error::Config(format!("{name} must be > 0")));
            }
        }
        Ok(())
    }
}

/// Questions asked so far and what they returned.
#[derive(Debug, Clone)]
pub struct AskState {
    kind: StrategyKind,
    asked: Vec<(SlotId, f64)>,
    excluded: Vec<bool>,
    rng: ChaCha8Rng,
}

impl AskState {
    pub fn new(kind: StrategyKind, config: &StrategyConfig, num_slots: usize) -> Self {
        AskState {
            kind,
            asked: Vec::new(),
            excluded: vec![false; num_slots],
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        }
    }

    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    /// `(slot, y)` in asking order.
    pub fn asked(&self) -> &[(SlotId, f64)] {
        &self.asked
    }

    pub fn is_excluded(&self, slot: SlotId) -> bool {
        self.excluded.get(slot.index()).copied().unwrap_or(true)
    }

    pub fn excluded(&self) -> &[bool] {
        &self.excluded
    }

    pub fn remaining(&self) -> usize {
        self.excluded.iter().filter(|&&e| !e).count()
    }

    /// Records the outcome `y ∈ {-1, +1}` of asking `slot`.
    pub fn record(&mut self, slot: SlotId, y: f64) -> Result<()> {
        if slot.index() >= self.excluded.len() {
            return Err(Error::SlotOutOfRange(slot));
        }
        if self.excluded[slot.index()] {
            return Err(Error::InvalidInput(format!("slot {slot} was already asked")));
        }
        if y != 1.0 && y != -1.0 {
            return Err(Error::InvalidInput(format!("feedback must be +1 or -1, got {y}")));
        }
        self.excluded[slot.index()] = true;
        self.asked.push((slot, y));
        Ok(())
    }
}

/// `π(v) = 1 / (rank₀(v) + 1)` from a full ranking.
pub fn preference_vector(ranked: &[ItemId], num_items: usize) -> Result<Vec<f64>> {
    if ranked.len() != num_items {
        return Err(Error::IncompleteRanking {
            expected: num_items,
        });
    }
    let mut pi = vec![f64::NAN; num_items];
    for (rank, v) in ranked.iter().enumerate() {
        match pi.get_mut(v.index()) {
            Some(p) if p.is_nan() => *p = 1.0 / (rank as f64 + 1.0),
            _ => {
                return Err(Error::IncompleteRanking {
                    expected: num_items,
                })
            }
        }
    }
    Ok(pi)
}

fn candidates(pool: &QuestionPool, excluded: &[bool]) -> Result<Vec<SlotId>> {
    if excluded.len() != pool.num_slots() {
        return Err(Error::InvalidInput(format!(
            "excluded mask has {} entries, pool has {} slots",
            excluded.len(),
            pool.num_slots()
        )));
    }
    let c: Vec<SlotId> = (0..pool.num_slots())
        .filter(|&q| !excluded[q])
        .map(SlotId::from_index)
        .collect();
    if c.is_empty() {
        Err(Error::PoolExhausted)
    } else {
        Ok(c)
    }
}

/// Highest score; scores within [`TIE_EPS`] of it go to the lowest slot id.
pub fn argmax(scores: &[(SlotId, f64)]) -> Result<SlotId> {
    let best = scores
        .iter()
        .map(|s| s.1)
        .fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return Err(Error::Solve("no finite candidate score".into()));
    }
    scores
        .iter()
        .filter(|s| s.1 >= best - TIE_EPS)
        .map(|s| s.0)
        .min()
        .ok_or(Error::PoolExhausted)
}

/// `|Σ_v (2·1{q∈v} − 1) π(v)|` for every candidate slot.
pub fn gbs_objectives(
    pi: &[f64],
    pool: &QuestionPool,
    excluded: &[bool],
) -> Result<Vec<(SlotId, f64)>> {
    if pi.len() != pool.num_items() {
        return Err(Error::InvalidInput(format!(
            "preference vector has {} entries, pool has {} items",
            pi.len(),
            pool.num_items()
        )));
    }
    Ok(candidates(pool, excluded)?
        .into_iter()
        .map(|q| {
            let s: f64 = pool
                .row(q)
                .iter()
                .zip(pi)
                .map(|(x, p)| (2.0 * x - 1.0) * p)
                .sum();
            (q, s.abs())
        })
        .collect())
}

pub fn gbs_select(pi: &[f64], pool: &QuestionPool, excluded: &[bool]) -> Result<SlotId> {
    let neg: Vec<(SlotId, f64)> = gbs_objectives(pi, pool, excluded)?
        .into_iter()
        .map(|(q, o)| (q, -o))
        .collect();
    argmax(&neg)
}

fn cholesky(m: DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    m.cholesky()
        .ok_or_else(|| Error::Solve("matrix is not positive definite".into()))
}

/// LinRel scores `h_q·r + (c/2)‖h_q‖` with
/// `h_q = x_q (XᵀX + λ_I I)⁻¹ Xᵀ`, where `X` stacks the asked slots' rows.
///
/// Computed in the equivalent `|asked| x |asked|` form
/// `h_q = x_q Xᵀ (X Xᵀ + λ_I I)⁻¹`, so the cost does not grow with the number
/// of items.
pub fn linrel_scores(
    pool: &QuestionPool,
    asked: &[SlotId],
    r: &[f64],
    config: &StrategyConfig,
    excluded: &[bool],
) -> Result<Vec<(SlotId, f64)>> {
    if asked.is_empty() {
        return Err(Error::InvalidInput("LinRel needs at least one asked slot".into()));
    }
    if asked.len() != r.len() {
        return Err(Error::InvalidInput("asked rows and rewards differ in length".into()));
    }
    for &a in asked {
        pool.check(a)?;
    }
    let t = asked.len();
    let gram = DMatrix::from_fn(t, t, |i, j| {
        pool.overlap(asked[i], asked[j]) + if i == j { config.lambda_i } else { 0.0 }
    });
    let chol = cholesky(gram)?;
    let r = DVector::from_column_slice(r);
    Ok(candidates(pool, excluded)?
        .into_iter()
        .map(|q| {
            let xq = DVector::from_fn(t, |i, _| pool.overlap(q, asked[i]));
            let h = chol.solve(&xq);
            (q, h.dot(&r) + config.c / 2.0 * h.norm())
        })
        .collect())
}

pub fn linrel_select(
    pool: &QuestionPool,
    asked: &[SlotId],
    r: &[f64],
    config: &StrategyConfig,
    excluded: &[bool],
) -> Result<SlotId> {
    argmax(&linrel_scores(pool, asked, r, config, excluded)?)
}

/// `σ² exp(-‖x_i - x_j‖² / 2)`.
pub fn rbf_kernel(x_i: &[f64], x_j: &[f64], sigma2: f64) -> Result<f64> {
    if x_i.len() != x_j.len() {
        return Err(Error::InvalidInput(format!(
            "kernel inputs differ in length ({} vs {})",
            x_i.len(),
            x_j.len()
        )));
    }
    let d: f64 = x_i.iter().zip(x_j).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sigma2 * (-d / 2.0).exp())
}

/// Posterior of the relevance function given observations `(slot, y)`,
/// factored once and queried per candidate.
pub struct GpPosterior<'a> {
    pool: &'a QuestionPool,
    observed: Vec<SlotId>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    alpha: DVector<f64>,
    sigma2: f64,
}

impl<'a> GpPosterior<'a> {
    pub fn new(
        pool: &'a QuestionPool,
        observations: &[(SlotId, f64)],
        config: &StrategyConfig,
    ) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::InvalidInput("GP posterior needs an observation".into()));
        }
        for &(s, _) in observations {
            pool.check(s)?;
        }
        let observed: Vec<SlotId> = observations.iter().map(|o| o.0).collect();
        let sigma2 = config.kernel_sigma2;
        let t = observed.len();
        let k = DMatrix::from_fn(t, t, |i, j| {
            sigma2 * (-pool.sq_distance(observed[i], observed[j]) / 2.0).exp()
                + if i == j { config.noise_sigma2 } else { 0.0 }
        });
        let chol = cholesky(k)?;
        let y = DVector::from_iterator(t, observations.iter().map(|o| o.1));
        let alpha = chol.solve(&y);
        Ok(GpPosterior {
            pool,
            observed,
            chol,
            alpha,
            sigma2,
        })
    }

    /// `(μ, σ²_post)` at a slot.
    pub fn at(&self, q: SlotId) -> Result<(f64, f64)> {
        self.pool.check(q)?;
        let k = DVector::from_iterator(
            self.observed.len(),
            self.observed
                .iter()
                .map(|&o| self.sigma2 * (-self.pool.sq_distance(q, o) / 2.0).exp()),
        );
        let mu = k.dot(&self.alpha);
        let var = self.sigma2 - k.dot(&self.chol.solve(&k));
        if var < -1e-9 {
            return Err(Error::Solve(format!("negative posterior variance {var}")));
        }
        Ok((mu, var.max(0.0)))
    }
}

/// `(μ, σ²_post)` of slot `q` given the observations.
pub fn gp_posterior(
    pool: &QuestionPool,
    observations: &[(SlotId, f64)],
    q: SlotId,
    config: &StrategyConfig,
) -> Result<(f64, f64)> {
    GpPosterior::new(pool, observations, config)?.at(q)
}

fn posteriors(
    pool: &QuestionPool,
    observations: &[(SlotId, f64)],
    config: &StrategyConfig,
    excluded: &[bool],
) -> Result<Vec<(SlotId, f64, f64)>> {
    let gp = GpPosterior::new(pool, observations, config)?;
    candidates(pool, excluded)?
        .into_iter()
        .map(|q| gp.at(q).map(|(m, v)| (q, m, v)))
        .collect()
}

/// `μ + β σ_post` for every candidate.
pub fn ucb_scores(
    pool: &QuestionPool,
    observations: &[(SlotId, f64)],
    config: &StrategyConfig,
    excluded: &[bool],
) -> Result<Vec<(SlotId, f64)>> {
    Ok(posteriors(pool, observations, config, excluded)?
        .into_iter()
        .map(|(q, m, v)| (q, m + config.beta * v.sqrt()))
        .collect())
}

pub fn ucb_select(
    pool: &QuestionPool,
    observations: &[(SlotId, f64)],
    config: &StrategyConfig,
    excluded: &[bool],
) -> Result<SlotId> {
    argmax(&ucb_scores(pool, observations, config, excluded)?)
}

/// Expected improvement over the best candidate mean `μ*`, for a candidate
/// with mean `mu` and posterior standard deviation `sigma`.
pub fn expected_improvement(mu: f64, mu_star: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    let n = Normal::standard();
    let z = (mu - mu_star) / sigma;
    ((mu - mu_star) * n.cdf(z) + sigma * n.pdf(z)).max(0.0)
}

pub fn ei_scores(
    pool: &QuestionPool,
    observations: &[(SlotId, f64)],
    config: &StrategyConfig,
    excluded: &[bool],
) -> Result<Vec<(SlotId, f64)>> {
    let post = posteriors(pool, observations, config, excluded)?;
    let mu_star = post.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(post
        .into_iter()
        .map(|(q, m, v)| (q, expected_improvement(m, mu_star, v.sqrt())))
        .collect())
}

pub fn ei_select(
    pool: &QuestionPool,
    observations: &[(SlotId, f64)],
    config: &StrategyConfig,
    excluded: &[bool],
) -> Result<SlotId> {
    argmax(&ei_scores(pool, observations, config, excluded)?)
}

/// Picks the next slot for `state`. `preferences` yields the current π and
/// is only called by strategies that need it.
pub fn next_question(
    state: &mut AskState,
    pool: &QuestionPool,
    preferences: impl FnOnce() -> Result<Vec<f64>>,
    config: &StrategyConfig,
) -> Result<SlotId> {
    if state.excluded.len() != pool.num_slots() {
        return Err(Error::InvalidInput("ask state does not match the pool".into()));
    }
    if state.remaining() == 0 {
        return Err(Error::PoolExhausted);
    }
    let asked = state.asked.len();
    let by_gbs = match state.kind {
        StrategyKind::Random => {
            let open = candidates(pool, &state.excluded)?;
            return Ok(open[state.rng.random_range(0..open.len())]);
        }
        StrategyKind::Gbs => true,
        StrategyKind::LinRel => asked == 0,
        StrategyKind::GpUcb | StrategyKind::GpEi => asked < config.gp_init_t0.max(1),
    };
    if by_gbs {
        return gbs_select(&preferences()?, pool, &state.excluded);
    }
    match state.kind {
        StrategyKind::LinRel => {
            let slots: Vec<SlotId> = state.asked.iter().map(|a| a.0).collect();
            let r: Vec<f64> = state.asked.iter().map(|a| a.1).collect();
            linrel_select(pool, &slots, &r, config, &state.excluded)
        }
        StrategyKind::GpUcb => ucb_select(pool, &state.asked, config, &state.excluded),
        StrategyKind::GpEi => ei_select(pool, &state.asked, config, &state.excluded),
        StrategyKind::Random | StrategyKind::Gbs => unreachable!("handled above"),
    }
}
