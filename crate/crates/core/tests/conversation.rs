use convps::dialogue::run_conversation;
use convps::training::train;
use convps::{
    Corpus, LambdaWeights, QuestionPool, Session, SimulatedUser, StrategyConfig, StrategyKind,
    SyntheticConfig, TrainConfig,
};

fn corpus() -> Corpus {
    convps::corpus::generate_synthetic(&SyntheticConfig {
        num_users: 400,
        num_items: 120,
        num_queries: 6,
        slots_per_topic: 6,
        tail_values: 40,
        vocab_size: 300,
        seed: 21,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn five_gbs_questions_lift_the_target() {
    let corpus = corpus();
    let config = TrainConfig {
        dim: 32,
        epochs: 15,
        seed: 4,
        ..Default::default()
    };
    let model = train(&corpus, &config, &LambdaWeights::default(), |_| {}).unwrap();
    let pool = QuestionPool::from_corpus(&corpus).unwrap();
    let cfg = StrategyConfig::default();

    let mut before = 0.0;
    let mut after = 0.0;
    let mut n = 0;
    'pairs: for j in corpus.test_judgments() {
        for &target in &j.relevant {
            let Ok(user) = SimulatedUser::new(&corpus, target) else { continue };
            let words = &corpus.queries[j.query.index()].tokens;
            let mut s = Session::start(&model, Some(j.user), words, StrategyKind::Gbs, &cfg, LambdaWeights::default())
                .unwrap();
            let t = run_conversation(&user, &mut s, 5, &model, &pool, &cfg).unwrap();
            before += t[0].target_rank as f64;
            after += t.last().unwrap().target_rank as f64;
            n += 1;
            if n == 200 {
                break 'pairs;
            }
        }
    }
    assert_eq!(n, 200);
    assert!(after < before, "mean rank {} -> {}", before / 200.0, after / 200.0);
}
