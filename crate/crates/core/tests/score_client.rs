//! Score client against a local mock chat-completion server: request
//! accounting, retry behavior, trial averaging, and warm-cache replay.

mod common;

use std::collections::BTreeMap;
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::Duration;

use common::{base_value, names_in_prompt, scores_json, spawn_mock};
use statsformer::data::FeaturePrior;
use statsformer::scores::{
    fetch_scores, plan_batches, HttpTransport, PromptBundle, ScoreCache, ScoreRequestPlan,
};

fn test_plan(names: &[String], trials: usize, concurrency: usize) -> ScoreRequestPlan {
    let mut plan = plan_batches(names, 3).unwrap();
    plan.trials = trials;
    plan.concurrency = concurrency;
    plan
}

fn feature_names(p: usize) -> Vec<String> {
    (0..p).map(|i| format!("feat_{i:02}")).collect()
}

#[test]
fn happy_path_counts_requests_and_averages_trials() {
    let names = feature_names(7); // batches of 3 -> 3 batches
    let all = names.clone();
    // response value depends on the per-batch call counter, so the five
    // trial responses per batch form a fixed multiset
    let server = spawn_mock(Arc::new(move |call_no, user| {
        let in_batch = names_in_prompt(user, &all);
        scores_json(&in_batch, |n| base_value(n) + 0.01 * call_no as f64)
    }));
    let transport = HttpTransport::new(
        &server.url,
        "test-key",
        "mock-model",
        0.0,
        Duration::from_secs(10),
    )
    .unwrap();
    let prompts = PromptBundle::with_defaults("ctx", "task");
    let plan = test_plan(&feature_names(7), 5, 5);
    let dir = tempfile::tempdir().unwrap();
    let cache = ScoreCache::open(dir.path(), "fp", "mock-model").unwrap();
    let outcome = fetch_scores::<f64>(
        &plan,
        &prompts,
        &transport,
        Some(&cache),
        &feature_names(7),
        "fp",
        "mock-model",
        false,
    )
    .unwrap();
    // request count = trials x batches, no retries injected
    assert_eq!(server.requests.load(Ordering::SeqCst), 5 * 3);
    assert_eq!(outcome.requests_sent, 15);
    assert_eq!(outcome.cache_hits, 0);
    // per-feature mean over the 5 per-batch calls: base + 0.01 * mean(0..5)
    for (j, name) in feature_names(7).iter().enumerate() {
        let expect = base_value(name) + 0.01 * 2.0;
        let got = outcome.prior.values()[j];
        assert!((got - expect).abs() < 1e-12, "{name}: {got} vs {expect}");
    }

    // verify the mean against the recorded transcripts exactly
    let mut sums: BTreeMap<String, f64> = BTreeMap::new();
    for trial in 0..5 {
        for batch in 0..3 {
            let entry = cache.load(trial, batch).unwrap().unwrap();
            for (k, v) in entry.scores {
                *sums.entry(k).or_insert(0.0) += v;
            }
        }
    }
    for (j, name) in feature_names(7).iter().enumerate() {
        let expect = sums[&name.to_lowercase()] / 5.0;
        assert_eq!(outcome.prior.values()[j], expect, "{name}");
    }

    // warm-cache rerun issues zero network requests and reproduces V
    let before = server.requests.load(Ordering::SeqCst);
    let replay = fetch_scores::<f64>(
        &plan,
        &prompts,
        &transport,
        Some(&cache),
        &feature_names(7),
        "fp",
        "mock-model",
        true,
    )
    .unwrap();
    assert_eq!(server.requests.load(Ordering::SeqCst), before);
    assert_eq!(replay.requests_sent, 0);
    assert_eq!(replay.cache_hits, 15);
    assert_eq!(replay.prior, outcome.prior);
}

#[test]
fn transient_failures_retry_and_record_attempts() {
    let names = feature_names(5); // batches of 3 -> 2 batches
    let all = names.clone();
    // second batch (the one containing feat_03) fails its first two calls
    let server = spawn_mock(Arc::new(move |call_no, user| {
        let in_batch = names_in_prompt(user, &all);
        let is_second = in_batch.iter().any(|n| n == "feat_03");
        if is_second && call_no < 2 {
            "sorry, no JSON today".to_string()
        } else {
            scores_json(&in_batch, base_value)
        }
    }));
    let transport = HttpTransport::new(
        &server.url,
        "k",
        "mock-model",
        0.0,
        Duration::from_secs(10),
    )
    .unwrap();
    let prompts = PromptBundle::with_defaults("ctx", "task");
    let mut plan = test_plan(&feature_names(5), 1, 1);
    plan.retries_per_batch = 5;
    let dir = tempfile::tempdir().unwrap();
    let cache = ScoreCache::open(dir.path(), "fp", "mock-model").unwrap();
    let outcome = fetch_scores::<f64>(
        &plan,
        &prompts,
        &transport,
        Some(&cache),
        &feature_names(5),
        "fp",
        "mock-model",
        false,
    )
    .unwrap();
    // 1 trial x 2 batches + 2 injected retries
    assert_eq!(outcome.requests_sent, 4);
    let entry = cache.load(0, 1).unwrap().unwrap();
    assert_eq!(entry.attempts, 3, "transcript should show three attempts");
    for (j, name) in feature_names(5).iter().enumerate() {
        assert!((outcome.prior.values()[j] - base_value(name)).abs() < 1e-12);
    }
}

#[test]
fn retry_exhaustion_aborts_naming_the_batch() {
    let names = feature_names(5);
    let all = names.clone();
    let server = spawn_mock(Arc::new(move |_, user| {
        let in_batch = names_in_prompt(user, &all);
        if in_batch.iter().any(|n| n == "feat_03") {
            "{\"not\": \"scores\"}".to_string()
        } else {
            scores_json(&in_batch, base_value)
        }
    }));
    let transport = HttpTransport::new(
        &server.url,
        "k",
        "mock-model",
        0.0,
        Duration::from_secs(10),
    )
    .unwrap();
    let prompts = PromptBundle::with_defaults("ctx", "task");
    let mut plan = test_plan(&feature_names(5), 1, 1);
    plan.retries_per_batch = 5;
    let err = fetch_scores::<f64>(
        &plan,
        &prompts,
        &transport,
        None,
        &feature_names(5),
        "fp",
        "mock-model",
        false,
    )
    .unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("batch 1"), "error should name the batch: {msg}");
    assert!(msg.contains("5"), "error should mention the attempt budget: {msg}");
}

#[test]
fn cold_cache_replay_refuses_to_run() {
    let names = feature_names(4);
    let all = names.clone();
    let server = spawn_mock(Arc::new(move |_, user| {
        scores_json(&names_in_prompt(user, &all), base_value)
    }));
    let transport = HttpTransport::new(
        &server.url,
        "k",
        "mock-model",
        0.0,
        Duration::from_secs(10),
    )
    .unwrap();
    let prompts = PromptBundle::with_defaults("ctx", "task");
    let plan = test_plan(&feature_names(4), 2, 2);
    let dir = tempfile::tempdir().unwrap();
    let cache = ScoreCache::open(dir.path(), "fp", "mock-model").unwrap();
    let err = fetch_scores::<f64>(
        &plan,
        &prompts,
        &transport,
        Some(&cache),
        &feature_names(4),
        "fp",
        "mock-model",
        true,
    )
    .unwrap_err();
    assert!(err.to_string().contains("missing"), "{err}");
    assert_eq!(server.requests.load(Ordering::SeqCst), 0);
}

#[test]
fn deterministic_given_deterministic_transport() {
    // stateless responder: identical prompts get identical responses, so
    // two cold runs produce identical priors
    let names = feature_names(6);
    let all = names.clone();
    let responder = Arc::new(move |_: usize, user: &str| {
        scores_json(&names_in_prompt(user, &all), base_value)
    });
    let prompts = PromptBundle::with_defaults("ctx", "task");
    let plan = test_plan(&feature_names(6), 3, 4);
    let mut priors: Vec<FeaturePrior<f64>> = Vec::new();
    for _ in 0..2 {
        let server = spawn_mock(responder.clone());
        let transport = HttpTransport::new(
            &server.url,
            "k",
            "mock-model",
            0.0,
            Duration::from_secs(10),
        )
        .unwrap();
        let outcome = fetch_scores::<f64>(
            &plan,
            &prompts,
            &transport,
            None,
            &feature_names(6),
            "fp",
            "mock-model",
            false,
        )
        .unwrap();
        priors.push(outcome.prior);
    }
    assert_eq!(priors[0], priors[1]);
}
