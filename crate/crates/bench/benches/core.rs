use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};

use lexevo_bench::{clean_backend, pool};
use lexevo_core::context::trial_rng;
use lexevo_core::ga::{pool_scores, prune_order, select_strategies, selection_probabilities, GaConfig};
use lexevo_core::metrics::{distinct_n, entropy, tokenize};
use lexevo_core::provider::PromptSet;
use lexevo_core::runner::{run_trial, ExperimentConfig, Resources};
use lexevo_core::scenario::Scenario;
use lexevo_core::supervisor::{keyword_screen, RegulationSource};

fn ga(c: &mut Criterion) {
    let cfg = GaConfig::default();
    let p = pool(20);
    c.bench_function("ucb_scores_20", |b| b.iter(|| pool_scores(black_box(&p), 1.0)));
    let scores: Vec<f64> = (0..20).map(|i| f64::from(i) / 10.0).collect();
    c.bench_function("softmax_20", |b| {
        b.iter(|| selection_probabilities(black_box(&scores), 4.0))
    });
    c.bench_function("select_4_of_20", |b| {
        let mut rng = trial_rng(1, 1);
        b.iter(|| select_strategies(black_box(&p), &cfg, &mut rng))
    });
    let big = pool(64);
    c.bench_function("prune_order_64", |b| b.iter(|| prune_order(black_box(&big), 1.0)));
}

fn text(c: &mut Criterion) {
    let passage = "Lanterns glow over the quiet harbor tonight, and the gulls circle twice \
                   before settling on the old pier. 你好世界, the tide is turning. "
        .repeat(20);
    c.bench_function("tokenize_passage", |b| b.iter(|| tokenize(black_box(&passage))));
    let tokens = tokenize(&passage);
    c.bench_function("entropy_passage", |b| b.iter(|| entropy(black_box(&tokens))));
    c.bench_function("distinct2_passage", |b| b.iter(|| distinct_n(black_box(&tokens), 2)));

    let password = Scenario::builtin("password").expect("bundled scenario");
    c.bench_function("keyword_screen_clean", |b| {
        b.iter(|| keyword_screen(black_box("the moon waxes over the quiet harbor"), &password.regulation))
    });
}

fn trial(c: &mut Criterion) {
    let scenario = Scenario::builtin("pet_trade").expect("bundled scenario");
    let res = Resources {
        regulation: RegulationSource::fixed(scenario.regulation.clone()),
        scenario: Arc::new(scenario),
        prompts: Arc::new(PromptSet::builtin()),
        backend: clean_backend(),
        script_hash: None,
    };
    let cfg = ExperimentConfig {
        trials: 1,
        rounds: 10,
        provider: "scripted:bench".to_owned(),
        ..ExperimentConfig::default()
    };
    c.bench_function("scripted_trial_10_rounds", |b| {
        b.iter(|| run_trial(black_box(&cfg), &res, 1))
    });
}

criterion_group!(benches, ga, text, trial);
criterion_main!(benches);
