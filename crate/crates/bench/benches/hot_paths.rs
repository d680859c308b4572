use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use convps::ask::{self, StrategyConfig};
use convps::model::{project_query, rank_items};
use convps::training::loss_and_grads;
use convps::{LambdaWeights, SlotId};
use convps_bench::Fixture;

fn ranking(c: &mut Criterion) {
    let f = Fixture::new(200);
    let p = &f.model.params;
    let l = LambdaWeights::default();
    c.bench_function("project_query", |b| b.iter(|| project_query(p, black_box(&f.query)).unwrap()));
    let q = project_query(p, &f.query).unwrap();
    c.bench_function("rank_items/200", |b| {
        b.iter(|| rank_items(p, Some(f.user), black_box(&q), &[], &l, None).unwrap())
    });
}

fn training(c: &mut Criterion) {
    let f = Fixture::new(200);
    let (ex, negs) = f.example();
    let l = LambdaWeights::default();
    c.bench_function("loss_and_grads/item_uqc", |b| {
        b.iter(|| loss_and_grads(black_box(&ex), &negs, &f.ctx, &f.model.params, &l))
    });
}

fn selection(c: &mut Criterion) {
    let f = Fixture::new(32);
    let cfg = StrategyConfig::default();
    let ex = f.excluded();
    let q = project_query(&f.model.params, &f.query).unwrap();
    let ranked: Vec<_> = rank_items(&f.model.params, Some(f.user), &q, &[], &LambdaWeights::default(), None)
        .unwrap()
        .into_iter()
        .map(|r| r.0)
        .collect();
    let pi = ask::preference_vector(&ranked, f.pool.num_items()).unwrap();
    let asked: Vec<SlotId> = f.observations.iter().map(|o| o.0).collect();
    let r: Vec<f64> = f.observations.iter().map(|o| o.1).collect();

    let mut g = c.benchmark_group("select");
    g.bench_function("gbs", |b| b.iter(|| ask::gbs_select(black_box(&pi), &f.pool, &ex).unwrap()));
    g.bench_function("linrel", |b| {
        b.iter(|| ask::linrel_select(&f.pool, black_box(&asked), &r, &cfg, &ex).unwrap())
    });
    g.bench_function("gp_ucb", |b| {
        b.iter(|| ask::ucb_select(&f.pool, black_box(&f.observations), &cfg, &ex).unwrap())
    });
    g.bench_function("gp_ei", |b| {
        b.iter(|| ask::ei_select(&f.pool, black_box(&f.observations), &cfg, &ex).unwrap())
    });
    g.finish();
}

criterion_group!(benches, ranking, training, selection);
criterion_main!(benches);
