//! Chat-completion transport and the batched, retried, trial-averaged
//! score-fetching loop.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::Deserialize;

use crate::data::FeaturePrior;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scores::cache::{CacheEntry, ScoreCache};
use crate::scores::parse::parse_and_validate;
use crate::scores::{PromptBundle, ScoreRequestPlan};

/// A blocking chat-completion backend. Implementations return the
/// assistant's text for a (system, user) message pair.
pub trait Transport: Send + Sync {
    fn complete(&self, system_prompt: &str, user_prompt: &str) -> Result<String>;
}

/// OpenAI-compatible HTTP chat-completion endpoint.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: String,
    model_id: String,
    temperature: f64,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Debug, Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

impl HttpTransport {
    pub fn new(
        endpoint: &str,
        api_key: &str,
        model_id: &str,
        temperature: f64,
        timeout: Duration,
    ) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .no_proxy()
            .build()
            .map_err(|e| Error::network(format!("cannot build http client: {e}")))?;
        Ok(HttpTransport {
            client,
            endpoint: endpoint.to_string(),
            api_key: api_key.to_string(),
            model_id: model_id.to_string(),
            temperature,
        })
    }
}

impl Transport for HttpTransport {
    fn complete(&self, system_prompt: &str, user_prompt: &str) -> Result<String> {
        let body = serde_json::json!({
            "model": self.model_id,
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": user_prompt},
            ],
            "temperature": self.temperature,
        });
        let response = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| Error::network(format!("request failed: {e}")))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| Error::network(format!("cannot read response body: {e}")))?;
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN
        {
            return Err(Error::network(format!("authentication failure: {status}")));
        }
        if !status.is_success() {
            return Err(Error::network(format!("endpoint returned {status}: {text}")));
        }
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| Error::network(format!("malformed completion response: {e}")))?;
        parsed
            .choices
            .first()
            .and_then(|c| c.message.content.clone())
            .ok_or_else(|| Error::network("completion response held no content"))
    }
}

/// Result of a fetch run.
#[derive(Debug)]
pub struct FetchOutcome<F: Scalar> {
    pub prior: FeaturePrior<F>,
    /// network requests actually issued (cache hits excluded)
    pub requests_sent: usize,
    pub cache_hits: usize,
}

struct JobResult {
    trial: usize,
    scores: BTreeMap<String, f64>,
}

/// Run the (trial, batch) request grid with bounded concurrency, retries
/// with the attempt index prefixed to the prompt, transcript caching, and
/// deterministic (trial, batch)-ordered aggregation into per-feature means.
#[allow(clippy::too_many_arguments)]
pub fn fetch_scores<F: Scalar>(
    plan: &ScoreRequestPlan,
    prompts: &PromptBundle,
    transport: &dyn Transport,
    cache: Option<&ScoreCache>,
    feature_names: &[String],
    dataset_fingerprint: &str,
    model_id: &str,
    from_cache_only: bool,
) -> Result<FetchOutcome<F>> {
    prompts.validate()?;
    let n_batches = plan.batches.len();
    let jobs: Vec<(usize, usize)> = (0..plan.trials)
        .flat_map(|t| (0..n_batches).map(move |b| (t, b)))
        .collect();

    let requests_sent = AtomicUsize::new(0);
    let cache_hits = AtomicUsize::new(0);
    let next_job = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let results: Mutex<Vec<Option<Result<JobResult>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());

    let worker = |_wid: usize| {
        loop {
            if abort.load(Ordering::SeqCst) {
                return;
            }
            let idx = next_job.fetch_add(1, Ordering::SeqCst);
            if idx >= jobs.len() {
                return;
            }
            let (trial, batch) = jobs[idx];
            let outcome = run_job(
                plan,
                prompts,
                transport,
                cache,
                dataset_fingerprint,
                model_id,
                from_cache_only,
                trial,
                batch,
                &requests_sent,
                &cache_hits,
            );
            if outcome.is_err() {
                abort.store(true, Ordering::SeqCst);
            }
            results.lock().unwrap()[idx] = Some(outcome);
        }
    };

    std::thread::scope(|scope| {
        let workers = plan.concurrency.max(1).min(jobs.len().max(1));
        let mut handles = Vec::new();
        for w in 0..workers {
            handles.push(scope.spawn(move || worker(w)));
        }
        for h in handles {
            let _ = h.join();
        }
    });

    // deterministic (trial, batch) aggregation order
    let collected = results.into_inner().unwrap();
    let mut per_trial: Vec<BTreeMap<String, f64>> =
        (0..plan.trials).map(|_| BTreeMap::new()).collect();
    for (idx, outcome) in collected.into_iter().enumerate() {
        let (trial, batch) = jobs[idx];
        match outcome {
            Some(Ok(result)) => {
                per_trial[result.trial].extend(result.scores);
            }
            Some(Err(e)) => {
                return Err(Error::network(format!(
                    "batch {batch} of trial {trial} failed: {e}"
                )));
            }
            None => {
                return Err(Error::network(format!(
                    "batch {batch} of trial {trial} was not processed (aborted run)"
                )));
            }
        }
    }

    let mut values = Vec::with_capacity(feature_names.len());
    for name in feature_names {
        let key = name.to_lowercase();
        let mut acc = 0.0;
        for (t, trial_scores) in per_trial.iter().enumerate() {
            let v = trial_scores.get(&key).ok_or_else(|| {
                Error::network(format!("trial {t} produced no score for '{name}'"))
            })?;
            acc += v;
        }
        let mut mean = acc / plan.trials as f64;
        if mean < 0.0 {
            log::warn!("negative mean score for '{name}' clamped to 0");
            mean = 0.0;
        }
        values.push(F::from_f(mean));
    }
    Ok(FetchOutcome {
        prior: FeaturePrior::new(values)?,
        requests_sent: requests_sent.load(Ordering::SeqCst),
        cache_hits: cache_hits.load(Ordering::SeqCst),
    })
}

#[allow(clippy::too_many_arguments)]
fn run_job(
    plan: &ScoreRequestPlan,
    prompts: &PromptBundle,
    transport: &dyn Transport,
    cache: Option<&ScoreCache>,
    dataset_fingerprint: &str,
    model_id: &str,
    from_cache_only: bool,
    trial: usize,
    batch: usize,
    requests_sent: &AtomicUsize,
    cache_hits: &AtomicUsize,
) -> Result<JobResult> {
    if let Some(cache) = cache {
        if let Some(entry) = cache.load(trial, batch)? {
            cache_hits.fetch_add(1, Ordering::SeqCst);
            return Ok(JobResult {
                trial,
                scores: entry.scores,
            });
        }
    }
    if from_cache_only {
        return Err(Error::network(format!(
            "cache replay requested but (trial {trial}, batch {batch}) is missing"
        )));
    }
    let batch_names = &plan.batches[batch];
    let mut last_error: Option<Error> = None;
    for attempt in 0..plan.retries_per_batch {
        let user_prompt = prompts.render_user(batch_names, attempt);
        requests_sent.fetch_add(1, Ordering::SeqCst);
        let raw = match transport.complete(&prompts.system_prompt, &user_prompt) {
            Ok(raw) => raw,
            Err(e) => {
                last_error = Some(e);
                continue;
            }
        };
        match parse_and_validate(&raw, batch_names) {
            Ok(scores) => {
                if let Some(cache) = cache {
                    cache.store(&CacheEntry {
                        dataset_fingerprint: dataset_fingerprint.to_string(),
                        model_id: model_id.to_string(),
                        trial,
                        batch,
                        system_prompt: prompts.system_prompt.clone(),
                        user_prompt,
                        raw_response: raw,
                        parse_outcome: "ok".to_string(),
                        scores: scores.clone(),
                        attempts: attempt + 1,
                    })?;
                }
                return Ok(JobResult {
                    trial,
                    scores,
                });
            }
            Err(e) => {
                log::warn!("trial {trial} batch {batch} attempt {attempt}: {e}");
                last_error = Some(e);
            }
        }
    }
    Err(Error::network(format!(
        "batch {batch} exhausted {} attempts: {}",
        plan.retries_per_batch,
        last_error.map(|e| e.to_string()).unwrap_or_default()
    )))
}
