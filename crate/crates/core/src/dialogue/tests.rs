use super::*;
use crate::corpus::{
    CorpusOptions, InteractionRecord, ItemRecord, QueryRecord, RawCorpus, Split, SyntheticConfig,
    UserRecord,
};
use crate::model::{dot, ModelParams, ModelTables, ParamShape};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_model(corpus: &Corpus, dim: usize, seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ModelParams::init(ParamShape::for_corpus(corpus, dim), &mut rng);
    for t in [
        &mut p.user_emb,
        &mut p.item_emb,
        &mut p.word_emb,
        &mut p.slot_pos_emb,
        &mut p.slot_neg_emb,
        &mut p.value_emb,
    ] {
        t.as_mut_slice()
            .iter_mut()
            .for_each(|x| *x = rng.random_range(-1.0..1.0));
    }
    Model::new(p, ModelTables::from_corpus(corpus)).unwrap()
}

/// Three items; "silk" is carried by one training item only, so it has no
/// embedding.
fn shop() -> Corpus {
    let item = |id: &str, pairs: &[(&str, &str)]| ItemRecord {
        item_id: id.into(),
        title: "phone case".into(),
        description: String::new(),
        reviews: vec![],
        pairs: pairs.iter().map(|(s, v)| (s.to_string(), v.to_string())).collect(),
    };
    let inter = |u: &str, i: &str| InteractionRecord {
        user_id: u.into(),
        query_id: "q".into(),
        item_id: i.into(),
        split: Split::Train,
    };
    let raw = RawCorpus {
        users: vec![
            UserRecord { user_id: "ann".into(), review_text: "case".into() },
            UserRecord { user_id: "ben".into(), review_text: "phone".into() },
        ],
        items: vec![
            item("a", &[("price", "outstanding"), ("material", "silk")]),
            item("b", &[("price", "outstanding"), ("brand", "acme")]),
            item("c", &[("brand", "acme")]),
        ],
        queries: vec![QueryRecord { query_id: "q".into(), query_text: "phone case".into() }],
        interactions: vec![inter("ann", "a"), inter("ben", "b"), inter("ann", "c")],
    };
    Corpus::from_raw(raw, CorpusOptions { min_count: 1, min_value_count: 2 }).unwrap()
}

fn synthetic() -> Corpus {
    crate::corpus::generate_synthetic(&SyntheticConfig {
        num_users: 40,
        num_items: 50,
        num_queries: 3,
        slots_per_topic: 5,
        tail_values: 10,
        vocab_size: 90,
        pairs_per_item: 4,
        seed: 5,
        ..Default::default()
    })
    .unwrap()
}

fn start(model: &Model, corpus: &Corpus, strategy: StrategyKind) -> Session {
    Session::start(
        model,
        Some(UserId(0)),
        &corpus.queries[0].tokens,
        strategy,
        &StrategyConfig::default(),
        LambdaWeights::default(),
    )
    .unwrap()
}

#[test]
fn simulated_user_follows_the_answer_protocol() {
    let c = shop();
    let slot = |n: &str| c.vocab.slot(n).unwrap();
    let a = SimulatedUser::new(&c, c.item_id("a").unwrap()).unwrap();
    let outstanding = c.vocab.value("outstanding").unwrap();
    assert_eq!(a.answer(slot("price")).unwrap(), Feedback::Positive(outstanding));
    assert_eq!(a.answer(slot("brand")).unwrap(), Feedback::Negative);
    assert_eq!(a.answer(slot("material")).unwrap(), Feedback::Invalid);
    assert!(a.answer(SlotId(99)).is_err());
}

#[test]
fn simulated_user_needs_annotations() {
    let mut raw = shop().raw().clone();
    raw.items[2].pairs.clear();
    let c = Corpus::from_raw(raw, CorpusOptions { min_count: 1, min_value_count: 2 }).unwrap();
    assert!(SimulatedUser::new(&c, ItemId(2)).is_err());
    assert!(SimulatedUser::new(&c, ItemId(9)).is_err());
}

#[test]
fn new_session_covers_every_item() {
    let c = synthetic();
    let m = random_model(&c, 8, 1);
    let s = start(&m, &c, StrategyKind::Gbs);
    assert_eq!(s.rounds(), 0);
    assert!(s.transcript().is_empty() && s.accepted().is_empty());
    let mut items = s.ranked_items();
    items.sort();
    assert_eq!(items, (0..c.num_items()).map(ItemId::from_index).collect::<Vec<_>>());
}

#[test]
fn session_start_errors() {
    let c = synthetic();
    let m = random_model(&c, 8, 2);
    let cfg = StrategyConfig::default();
    let words = &c.queries[0].tokens;
    let l = LambdaWeights::default();
    assert!(matches!(
        Session::start(&m, Some(UserId(10_000)), words, StrategyKind::Gbs, &cfg, l),
        Err(Error::UserOutOfRange(_))
    ));
    assert!(matches!(
        Session::start(&m, None, &[], StrategyKind::Gbs, &cfg, l),
        Err(Error::EmptyQuery)
    ));
    assert!(Session::start(&m, None, words, StrategyKind::Gbs, &cfg, l).is_ok());
}

#[test]
fn same_inputs_give_the_same_first_question() {
    let c = synthetic();
    let m = random_model(&c, 8, 3);
    let pool = QuestionPool::from_corpus(&c).unwrap();
    for kind in StrategyKind::ALL {
        let mut a = start(&m, &c, kind);
        let mut b = start(&m, &c, kind);
        let cfg = StrategyConfig::default();
        assert_eq!(a.next_question(&pool, &cfg).unwrap(), b.next_question(&pool, &cfg).unwrap());
    }
}

#[test]
fn without_user_weight_users_share_the_initial_ranking() {
    let c = synthetic();
    let m = random_model(&c, 8, 4);
    let l = LambdaWeights { user: 0.0, ..Default::default() };
    let words = &c.queries[1].tokens;
    let cfg = StrategyConfig::default();
    let a = Session::start(&m, Some(UserId(0)), words, StrategyKind::Gbs, &cfg, l).unwrap();
    let b = Session::start(&m, Some(UserId(7)), words, StrategyKind::Gbs, &cfg, l).unwrap();
    assert_eq!(a.ranking(), b.ranking());
}

#[test]
fn pending_question_is_stable_and_ordered() {
    let c = synthetic();
    let m = random_model(&c, 8, 5);
    let pool = QuestionPool::from_corpus(&c).unwrap();
    let cfg = StrategyConfig::default();
    let mut s = start(&m, &c, StrategyKind::Random);
    assert!(matches!(
        s.apply_feedback(&m, SlotId(0), Feedback::Negative),
        Err(Error::OutOfOrderFeedback { expected: None, .. })
    ));
    let q = s.next_question(&pool, &cfg).unwrap();
    assert_eq!(s.next_question(&pool, &cfg).unwrap(), q);
    assert_eq!(s.pending(), Some(q));
    let other = SlotId::from_index((q.index() + 1) % pool.num_slots());
    assert!(matches!(
        s.apply_feedback(&m, other, Feedback::Negative),
        Err(Error::OutOfOrderFeedback { expected: Some(e), .. }) if e == q
    ));
    s.apply_feedback(&m, q, Feedback::Negative).unwrap();
    assert!(s.apply_feedback(&m, q, Feedback::Negative).is_err());
    assert_eq!(s.rounds(), 1);
}

#[test]
fn positive_answer_shifts_scores_by_the_composed_vector() {
    let c = synthetic();
    let m = random_model(&c, 8, 6);
    let pool = QuestionPool::from_corpus(&c).unwrap();
    let cfg = StrategyConfig::default();
    let mut s = start(&m, &c, StrategyKind::Gbs);
    let before: HashMap<ItemId, f64> = s.ranking().iter().copied().collect();
    let q = s.next_question(&pool, &cfg).unwrap();
    let (_, value) = *c.vocab.pairs().iter().find(|p| p.0 == q).expect("slot has a value");
    s.apply_feedback(&m, q, Feedback::Positive(value)).unwrap();
    let cv = compose_positive(&m.params, q, value).unwrap();
    for &(item, score) in s.ranking() {
        let delta = dot(m.params.item_emb.row(item.index()), &cv.vec);
        assert!((score - before[&item] - delta).abs() < 1e-12);
    }
}

#[test]
fn invalid_answers_leave_the_ranking_alone() {
    let c = synthetic();
    let m = random_model(&c, 8, 7);
    let pool = QuestionPool::from_corpus(&c).unwrap();
    let cfg = StrategyConfig::default();
    let mut s = start(&m, &c, StrategyKind::LinRel);
    let initial = s.ranking().to_vec();
    for _ in 0..5 {
        let q = s.next_question(&pool, &cfg).unwrap();
        s.apply_feedback(&m, q, Feedback::Invalid).unwrap();
        assert_eq!(s.ranking(), initial.as_slice());
    }
    assert!(s.accepted().is_empty());
    assert_eq!(s.rounds(), 5);
    assert_eq!(s.feedback_counts().invalid, 5);
    assert!(s.ask_state().asked().iter().all(|a| a.1 == -1.0));
}

#[test]
fn conversation_of_zero_rounds_reports_the_initial_rank() {
    let c = synthetic();
    let m = random_model(&c, 8, 8);
    let pool = QuestionPool::from_corpus(&c).unwrap();
    let mut s = start(&m, &c, StrategyKind::Gbs);
    let user = SimulatedUser::new(&c, ItemId(3)).unwrap();
    let t = run_conversation(&user, &mut s, 0, &m, &pool, &StrategyConfig::default()).unwrap();
    assert_eq!(t.len(), 1);
    assert_eq!(t[0].target_rank, s.rank_of(ItemId(3)).unwrap());
    assert_eq!(t[0].slot, None);
    assert_eq!(t[0].mrr_so_far, reciprocal_rank(t[0].target_rank));
}

#[test]
fn conversation_stops_when_the_pool_runs_out() {
    let c = synthetic();
    let m = random_model(&c, 8, 9);
    let pool = QuestionPool::from_corpus(&c).unwrap();
    let mut s = start(&m, &c, StrategyKind::Random);
    let user = SimulatedUser::new(&c, ItemId(0)).unwrap();
    let f = pool.num_slots();
    let t = run_conversation(&user, &mut s, f + 10, &m, &pool, &StrategyConfig::default()).unwrap();
    assert_eq!(t.len(), f + 1);
    assert_eq!(s.rounds(), f);
}

#[test]
fn reciprocal_rank_cutoff() {
    assert_eq!(reciprocal_rank(0), 1.0);
    assert_eq!(reciprocal_rank(2), 1.0 / 3.0);
    assert_eq!(reciprocal_rank(99), 0.01);
    assert_eq!(reciprocal_rank(100), 0.0);
}

#[test]
fn feedback_serialization_shape() {
    assert_eq!(
        serde_json::to_value(Feedback::Positive(ValueId(3))).unwrap(),
        serde_json::json!({"kind": "positive", "value": 3})
    );
    assert_eq!(
        serde_json::to_value(Feedback::Invalid).unwrap(),
        serde_json::json!({"kind": "invalid"})
    );
    assert_eq!(question_prompt("color"), "What color would you like?");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn trajectory_invariants(seed in any::<u64>(), kind in 0usize..5, rounds in 0usize..8, target in 0usize..50) {
        let c = synthetic();
        let m = random_model(&c, 6, seed);
        let pool = QuestionPool::from_corpus(&c).unwrap();
        let cfg = StrategyConfig { seed, ..Default::default() };
        let kind = StrategyKind::ALL[kind];
        let mut s = Session::start(&m, Some(UserId(1)), &c.queries[2].tokens, kind, &cfg, LambdaWeights::default()).unwrap();
        let user = SimulatedUser::new(&c, ItemId::from_index(target)).unwrap();
        let t = run_conversation(&user, &mut s, rounds, &m, &pool, &cfg).unwrap();

        prop_assert_eq!(t.len(), rounds + 1);
        let counts = s.feedback_counts();
        prop_assert_eq!(counts.total(), s.rounds());
        prop_assert_eq!(s.accepted().len(), counts.positive + counts.negative);
        prop_assert_eq!(s.recompute_ranking(&m).unwrap(), s.ranking().to_vec());
        let mut rr = 0.0;
        for (i, r) in t.iter().enumerate() {
            prop_assert_eq!(r.round, i);
            rr += reciprocal_rank(r.target_rank);
            prop_assert!((r.mrr_so_far - rr / (i + 1) as f64).abs() < 1e-15);
        }

        // Replaying the transcript reproduces the final ranking.
        let mut replay = Session::start(&m, Some(UserId(1)), &c.queries[2].tokens, kind, &cfg, LambdaWeights::default()).unwrap();
        for &(slot, fb) in s.transcript() {
            let q = replay.next_question(&pool, &cfg).unwrap();
            prop_assert_eq!(q, slot);
            replay.apply_feedback(&m, slot, fb).unwrap();
        }
        prop_assert_eq!(replay.ranking(), s.ranking());
    }
}
