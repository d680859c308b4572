//! Shared fixtures for the benchmarks.

use convps::ask::QuestionPool;
use convps::training::{ExampleAnswer, ExampleContext, TrainingExample};
use convps::{
    Corpus, ItemId, LambdaWeights, Model, QueryId, SlotId, SyntheticConfig, TrainConfig, UserId,
    WordId,
};

/// A small trained model with everything the hot paths need.
pub struct Fixture {
    pub corpus: Corpus,
    pub model: Model,
    pub pool: QuestionPool,
    pub ctx: ExampleContext,
    pub user: UserId,
    pub query: Vec<WordId>,
    /// Five observed slots with alternating rewards, for the bandit strategies.
    pub observations: Vec<(SlotId, f64)>,
}

impl Fixture {
    pub fn new(dim: usize) -> Fixture {
        let corpus = convps::corpus::generate_synthetic(&SyntheticConfig {
            num_users: 400,
            num_items: 200,
            seed: 1,
            ..Default::default()
        })
        .expect("synthetic corpus");
        let config = TrainConfig {
            dim,
            epochs: 1,
            seed: 1,
            ..Default::default()
        };
        let model = convps::training::train(&corpus, &config, &LambdaWeights::default(), |_| {})
            .expect("training");
        let pool = QuestionPool::from_corpus(&corpus).expect("question pool");
        let ctx = ExampleContext::from_corpus(&corpus);
        let query = corpus.queries[0].tokens.clone();
        let observations = (0..5)
            .map(|i| (SlotId(i * 3), if i % 2 == 0 { 1.0 } else { 0.0 }))
            .collect();
        Fixture {
            corpus,
            model,
            pool,
            ctx,
            user: UserId(0),
            query,
            observations,
        }
    }

    /// A conversational training example and its negatives.
    pub fn example(&self) -> (TrainingExample, Vec<u32>) {
        let (slot, value) = self.ctx.pairs[0];
        let ex = TrainingExample::ItemGivenUqc {
            user: self.user,
            query: QueryId(0),
            item: ItemId(0),
            answer: ExampleAnswer::Positive { slot, value },
        };
        (ex, vec![3, 17, 42, 88, 150])
    }

    pub fn excluded(&self) -> Vec<bool> {
        let mut ex = vec![false; self.pool.num_slots()];
        for (s, _) in &self.observations {
            ex[s.index()] = true;
        }
        ex
    }
}
