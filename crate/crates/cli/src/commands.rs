use std::path::PathBuf;
use std::time::Duration;

use anyhow::Context;
use clap::Args;
use ndarray::Array2;
use statsformer::config::RunConfig;
use statsformer::data::{load_dataset, Dataset, FeaturePrior, TaskRequest};
use statsformer::evalsim::{
    run_adversarial_experiment, run_adversarial_oracle, run_oracle_experiment, run_sweep,
    summarize, write_records_csv, write_summary_csv, ExperimentRecord, Method, SplitSpec,
    SyntheticSpec,
};
use statsformer::priors::invert_prior;
use statsformer::scores::{
    fetch_scores, load_scores_file, plan_batches, sqrt_batch_size, write_scores_file,
    HttpTransport, PromptBundle, ScoreCache,
};
use statsformer::stacking::{fit_statsformer, predict_model, Prediction};
use statsformer::Error;

use crate::archive::{load_model, save_model};

fn parse_task(s: &str) -> Result<Option<TaskRequest>, String> {
    match s {
        "auto" => Ok(None),
        "binary" => Ok(Some(TaskRequest::Binary)),
        "multiclass" => Ok(Some(TaskRequest::Multiclass)),
        "regression" => Ok(Some(TaskRequest::Regression)),
        other => Err(format!(
            "unknown task '{other}' (expected auto|binary|multiclass|regression)"
        )),
    }
}

/// Sniff the target column: any non-numeric value means classification;
/// all-numeric targets with exactly two distinct values are treated as
/// binary, anything else as regression.
fn infer_task(path: &PathBuf, target: &str) -> anyhow::Result<TaskRequest> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| Error::data(e.to_string()))?;
    let idx = headers
        .iter()
        .position(|h| h.trim() == target)
        .ok_or_else(|| Error::data(format!("missing target column '{target}'")))?;
    let mut distinct = std::collections::BTreeSet::new();
    let mut numeric = true;
    for record in reader.records() {
        let record = record.map_err(|e| Error::data(e.to_string()))?;
        let cell = record.get(idx).unwrap_or("").trim().to_string();
        if cell.parse::<f64>().is_err() {
            numeric = false;
        }
        distinct.insert(cell);
    }
    Ok(if !numeric {
        if distinct.len() == 2 {
            TaskRequest::Binary
        } else {
            TaskRequest::Multiclass
        }
    } else if distinct.len() == 2 {
        TaskRequest::Binary
    } else {
        TaskRequest::Regression
    })
}

fn load_dataset_auto(
    path: &PathBuf,
    target: &str,
    task_flag: &str,
) -> anyhow::Result<Dataset<f64>> {
    let request = match parse_task(task_flag).map_err(Error::usage)? {
        Some(request) => request,
        None => infer_task(path, target)?,
    };
    Ok(load_dataset(path, target, request)?)
}

fn load_run_config(config: &Option<PathBuf>, seed: Option<u64>) -> anyhow::Result<RunConfig> {
    let mut rc = match config {
        Some(path) => RunConfig::from_toml_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = seed {
        rc.seed = seed;
    }
    Ok(rc)
}

// ---------------------------------------------------------------------------
// scores
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct ScoresArgs {
    /// Dataset CSV (used for feature names and the cache fingerprint)
    #[arg(long)]
    dataset: PathBuf,
    /// Target column name
    #[arg(long)]
    target: String,
    /// Task kind: auto|binary|multiclass|regression
    #[arg(long, default_value = "auto")]
    task_kind: String,
    /// File holding the dataset context paragraph
    #[arg(long)]
    context: PathBuf,
    /// File holding the prediction-task description
    #[arg(long)]
    task: PathBuf,
    /// Output scores JSON path
    #[arg(long)]
    out: PathBuf,
    /// Chat-completion endpoint URL
    #[arg(long, default_value = "https://api.openai.com/v1/chat/completions")]
    endpoint: String,
    /// Model identifier sent to the endpoint
    #[arg(long, default_value = "o3")]
    model: String,
    /// Environment variable holding the API key
    #[arg(long, default_value = "STATSFORMER_API_KEY")]
    api_key_env: String,
    /// Features per request batch
    #[arg(long, default_value_t = statsformer::scores::DEFAULT_BATCH_SIZE)]
    batch_size: usize,
    /// Use ceil(p / ceil(sqrt(p))) as the batch size instead
    #[arg(long)]
    sqrt_batches: bool,
    /// Independent trials to average
    #[arg(long, default_value_t = statsformer::scores::DEFAULT_TRIALS)]
    trials: usize,
    /// Attempts per batch before aborting
    #[arg(long, default_value_t = statsformer::scores::DEFAULT_RETRIES)]
    retries: usize,
    /// Concurrent in-flight requests
    #[arg(long, default_value_t = statsformer::scores::DEFAULT_CONCURRENCY)]
    concurrency: usize,
    /// Sampling temperature
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    /// Per-request timeout in seconds
    #[arg(long, default_value_t = 120)]
    timeout_secs: u64,
    /// Transcript cache directory (defaults to `<out>.cache`)
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Replay from the transcript cache without any network traffic
    #[arg(long)]
    from_cache: bool,
    /// Override the built-in system prompt with a file
    #[arg(long)]
    system_prompt: Option<PathBuf>,
    /// Override the built-in user template with a file
    #[arg(long)]
    user_template: Option<PathBuf>,
}

pub fn cmd_scores(args: ScoresArgs, workers: Option<usize>) -> anyhow::Result<()> {
    let d = load_dataset_auto(&args.dataset, &args.target, &args.task_kind)?;
    let context = std::fs::read_to_string(&args.context)
        .with_context(|| format!("cannot read {}", args.context.display()))?;
    let task = std::fs::read_to_string(&args.task)
        .with_context(|| format!("cannot read {}", args.task.display()))?;
    let mut prompts = PromptBundle::with_defaults(context.trim(), task.trim());
    if let Some(path) = &args.system_prompt {
        prompts.system_prompt = std::fs::read_to_string(path)?;
    }
    if let Some(path) = &args.user_template {
        prompts.user_template = std::fs::read_to_string(path)?;
    }
    prompts.validate()?;

    let batch_size = if args.sqrt_batches {
        sqrt_batch_size(d.n_features())
    } else {
        args.batch_size
    };
    let mut plan = plan_batches(d.feature_names(), batch_size)?;
    plan.trials = args.trials;
    plan.retries_per_batch = args.retries;
    plan.concurrency = workers.unwrap_or(args.concurrency).min(args.concurrency);

    let api_key = if args.from_cache {
        std::env::var(&args.api_key_env).unwrap_or_default()
    } else {
        std::env::var(&args.api_key_env).map_err(|_| {
            Error::usage(format!(
                "API key environment variable {} is not set; export it or rerun with --from-cache",
                args.api_key_env
            ))
        })?
    };
    let transport = HttpTransport::new(
        &args.endpoint,
        &api_key,
        &args.model,
        args.temperature,
        Duration::from_secs(args.timeout_secs),
    )?;
    let cache_dir = args
        .cache_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.cache", args.out.display())));
    let cache = ScoreCache::open(&cache_dir, &d.fingerprint(), &args.model)?;

    let outcome = fetch_scores::<f64>(
        &plan,
        &prompts,
        &transport,
        Some(&cache),
        d.feature_names(),
        &d.fingerprint(),
        &args.model,
        args.from_cache,
    )?;
    write_scores_file(&args.out, d.feature_names(), &outcome.prior)?;
    println!(
        "scores written to {} ({} batches x {} trials, {} requests sent, {} cache hits)",
        args.out.display(),
        plan.batches.len(),
        plan.trials,
        outcome.requests_sent,
        outcome.cache_hits
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct FitArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    target: String,
    /// Task kind: auto|binary|multiclass|regression
    #[arg(long, default_value = "auto")]
    task: String,
    /// Scores JSON file with the feature prior
    #[arg(long, conflicts_with = "no_prior")]
    scores: Option<PathBuf>,
    /// Run with a uniform prior instead of a scores file
    #[arg(long)]
    no_prior: bool,
    /// Apply the order-reversing prior inversion before fitting
    #[arg(long)]
    invert_prior: bool,
    /// Run-config TOML file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Output model archive path
    #[arg(long)]
    out: PathBuf,
}

pub fn cmd_fit(args: FitArgs) -> anyhow::Result<()> {
    let d = load_dataset_auto(&args.dataset, &args.target, &args.task)?;
    let rc = load_run_config(&args.config, args.seed)?;
    let mut prior: FeaturePrior<f64> = match (&args.scores, args.no_prior) {
        (Some(path), false) => load_scores_file(path, d.feature_names())?,
        (None, true) => FeaturePrior::uniform(d.n_features()),
        (None, false) => {
            return Err(Error::usage("provide --scores FILE or --no-prior").into());
        }
        (Some(_), true) => unreachable!("clap conflict"),
    };
    if args.invert_prior {
        prior = invert_prior(&prior);
    }
    log::info!("prior fingerprint: {}", prior.fingerprint());

    let (model, report) = fit_statsformer(&d, &prior, &rc)?;
    save_model(&args.out, &model)?;
    println!("model written to {}", args.out.display());
    println!("dictionary size: {}", report.dictionary_size);
    println!("surviving columns: {}", report.surviving_columns);
    println!("nonzero weights: {}", report.nonzero_weights);
    println!(
        "selected reg: [{}]",
        report
            .selected_regs
            .iter()
            .map(|r| format!("{r}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    println!("prior fingerprint: {}", model.provenance.prior_fingerprint);
    for line in &report.dropped {
        println!("dropped: {line}");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct PredictArgs {
    /// Model archive path
    #[arg(long)]
    model: PathBuf,
    /// Input CSV; feature columns are realigned by header name
    #[arg(long)]
    input: PathBuf,
    /// Output predictions CSV
    #[arg(long)]
    out: PathBuf,
}

pub fn cmd_predict(args: PredictArgs) -> anyhow::Result<()> {
    let (_meta, model) = load_model(&args.model)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(&args.input)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", args.input.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::data(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut column_of = Vec::with_capacity(model.feature_names.len());
    let mut missing = Vec::new();
    for name in &model.feature_names {
        match headers.iter().position(|h| h == name) {
            Some(idx) => column_of.push(idx),
            None => missing.push(name.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::data(format!(
            "input is missing feature columns: {}",
            missing.join(", ")
        ))
        .into());
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::data(format!("row {r}: {e}")))?;
        let mut row = Vec::with_capacity(column_of.len());
        for (&c, name) in column_of.iter().zip(&model.feature_names) {
            let cell = record.get(c).unwrap_or("");
            let value: f64 = cell.trim().parse().map_err(|_| {
                Error::data(format!("non-numeric feature cell at row {r}, column {name}"))
            })?;
            row.push(value);
        }
        rows.push(row);
    }
    let n = rows.len();
    let p = model.feature_names.len();
    let mut x = Array2::zeros((n, p));
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            x[[i, j]] = *v;
        }
    }

    let mut w = csv::Writer::from_path(&args.out)
        .map_err(|e| Error::data(format!("cannot write {}: {e}", args.out.display())))?;
    match predict_model(&model, x.view())? {
        Prediction::Regression(values) => {
            w.write_record(["prediction"])
                .map_err(|e| Error::data(e.to_string()))?;
            for v in values {
                w.write_record([format!("{v}")])
                    .map_err(|e| Error::data(e.to_string()))?;
            }
        }
        Prediction::Binary {
            probabilities,
            labels,
        } => {
            w.write_record(["probability", "label"])
                .map_err(|e| Error::data(e.to_string()))?;
            for (p1, label) in probabilities.iter().zip(labels) {
                let name = model
                    .class_labels
                    .get(label)
                    .cloned()
                    .unwrap_or_else(|| label.to_string());
                w.write_record([format!("{p1}"), name])
                    .map_err(|e| Error::data(e.to_string()))?;
            }
        }
        Prediction::Multiclass { scores, labels } => {
            let mut header: Vec<String> = model
                .class_labels
                .iter()
                .map(|c| format!("score_{c}"))
                .collect();
            header.push("label".to_string());
            w.write_record(&header)
                .map_err(|e| Error::data(e.to_string()))?;
            for (i, label) in labels.iter().enumerate() {
                let mut row: Vec<String> = (0..scores.ncols())
                    .map(|c| format!("{}", scores[[i, c]]))
                    .collect();
                row.push(
                    model
                        .class_labels
                        .get(*label)
                        .cloned()
                        .unwrap_or_else(|| label.to_string()),
                );
                w.write_record(&row).map_err(|e| Error::data(e.to_string()))?;
            }
        }
    }
    w.flush().map_err(|e| Error::data(e.to_string()))?;
    println!("predictions written to {} ({n} rows)", args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    target: String,
    #[arg(long, default_value = "auto")]
    task: String,
    #[arg(long, conflicts_with = "no_prior")]
    scores: Option<PathBuf>,
    /// Evaluate without a scores file (methods that need a prior still get
    /// the uniform one)
    #[arg(long)]
    no_prior: bool,
    /// Training ratios: "0.3:0.7" (step 0.1) or a comma list "0.1,0.2"
    #[arg(long, default_value = "0.1:0.8")]
    ratios: String,
    #[arg(long, default_value_t = statsformer::evalsim::split::DEFAULT_TEST_RATIO)]
    test_ratio: f64,
    /// Number of split seeds (0..N-1)
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// Comma-separated arms: statsformer,noprior,adversarial
    #[arg(long, default_value = "statsformer,noprior")]
    methods: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Records CSV output path
    #[arg(long)]
    out_records: PathBuf,
    /// Summary CSV output path
    #[arg(long)]
    out_summary: PathBuf,
}

fn parse_ratios(text: &str) -> anyhow::Result<Vec<f64>> {
    if let Some((lo, hi)) = text.split_once(':') {
        let lo: f64 = lo.parse().map_err(|_| Error::usage("bad ratio range"))?;
        let hi: f64 = hi.parse().map_err(|_| Error::usage("bad ratio range"))?;
        if !(lo > 0.0 && hi < 1.0 && lo <= hi) {
            return Err(Error::usage("ratio range must satisfy 0 < lo <= hi < 1").into());
        }
        let mut out = Vec::new();
        let mut r = lo;
        while r <= hi + 1e-9 {
            out.push((r * 10.0).round() / 10.0);
            r += 0.1;
        }
        Ok(out)
    } else {
        let mut out = Vec::new();
        for part in text.split(',') {
            out.push(
                part.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::usage(format!("bad ratio '{part}'")))?,
            );
        }
        Ok(out)
    }
}

fn parse_methods(text: &str) -> anyhow::Result<Vec<Method>> {
    let mut out = Vec::new();
    for part in text.split(',') {
        out.push(Method::parse(part.trim())?);
    }
    Ok(out)
}

fn summarize_and_write(
    records: &[ExperimentRecord],
    methods: &[Method],
    out_records: &PathBuf,
    out_summary: &PathBuf,
) -> anyhow::Result<()> {
    write_records_csv(records, out_records)?;
    let baseline = if methods.contains(&Method::NoPrior) {
        Method::NoPrior
    } else {
        methods[0]
    };
    let mut rows = Vec::new();
    for &m in methods {
        if m == baseline {
            continue;
        }
        rows.extend(summarize(records, baseline.label(), m.label())?);
    }
    write_summary_csv(&rows, out_summary)?;
    println!(
        "records written to {} ({} rows); summary written to {}",
        out_records.display(),
        records.len(),
        out_summary.display()
    );
    for row in &rows {
        println!(
            "{} vs {} [{}]: improvement {:.4}% ({:.4}..{:.4}), win rate {:.3} ({:.3}..{:.3}), diff {:.5}",
            row.method,
            row.baseline,
            row.metric,
            row.improvement_pct,
            row.improvement_ci_lo,
            row.improvement_ci_hi,
            row.win_rate,
            row.win_ci_lo,
            row.win_ci_hi,
            row.mean_diff,
        );
    }
    Ok(())
}

pub fn cmd_evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    let d = load_dataset_auto(&args.dataset, &args.target, &args.task)?;
    let rc = load_run_config(&args.config, args.seed)?;
    let prior: FeaturePrior<f64> = match (&args.scores, args.no_prior) {
        (Some(path), false) => load_scores_file(path, d.feature_names())?,
        (None, true) => FeaturePrior::uniform(d.n_features()),
        _ => return Err(Error::usage("provide --scores FILE or --no-prior").into()),
    };
    let methods = parse_methods(&args.methods)?;
    let spec = SplitSpec {
        train_ratios: parse_ratios(&args.ratios)?,
        test_ratio: args.test_ratio,
        seeds: (0..args.seeds).collect(),
        stratified: d.task().is_classification(),
    };
    let label = args
        .dataset
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "dataset".to_string());
    let records = run_sweep(&d, &prior, &spec, &methods, &label, &rc)?;
    summarize_and_write(&records, &methods, &args.out_records, &args.out_summary)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct SimulateArgs {
    /// Experiment kind: oracle | adversarial
    #[arg(value_name = "KIND")]
    kind: String,
    /// Synthetic setting "n,p,p_hat,c"
    #[arg(long)]
    setting: Option<String>,
    /// Adversarial runs on a real dataset instead of a synthetic setting
    #[arg(long, requires = "target")]
    dataset: Option<PathBuf>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long, default_value = "auto")]
    task: String,
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    replicates: usize,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_records: PathBuf,
    #[arg(long)]
    out_summary: PathBuf,
}

fn parse_setting(text: &str, seed: u64) -> anyhow::Result<SyntheticSpec> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(Error::usage("--setting expects n,p,p_hat,c").into());
    }
    Ok(SyntheticSpec {
        n: parts[0].parse().map_err(|_| Error::usage("bad n"))?,
        p: parts[1].parse().map_err(|_| Error::usage("bad p"))?,
        p_hat: parts[2].parse().map_err(|_| Error::usage("bad p_hat"))?,
        c: parts[3].parse().map_err(|_| Error::usage("bad c"))?,
        seed,
    })
}

pub fn cmd_simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let rc = load_run_config(&args.config, Some(args.seed))?;
    let (records, methods): (Vec<ExperimentRecord>, Vec<Method>) = match args.kind.as_str() {
        "oracle" => {
            let setting = args
                .setting
                .as_deref()
                .ok_or_else(|| Error::usage("simulate oracle requires --setting"))?;
            let spec = parse_setting(setting, args.seed)?;
            (
                run_oracle_experiment::<f64>(&spec, args.replicates, &rc)?,
                vec![Method::NoPrior, Method::Statsformer],
            )
        }
        "adversarial" => match (&args.setting, &args.dataset) {
            (Some(setting), None) => {
                let spec = parse_setting(setting, args.seed)?;
                (
                    run_adversarial_oracle::<f64>(&spec, args.replicates, &rc)?,
                    vec![Method::NoPrior, Method::Adversarial],
                )
            }
            (None, Some(path)) => {
                let target = args
                    .target
                    .as_deref()
                    .ok_or_else(|| Error::usage("--dataset requires --target"))?;
                let d = load_dataset_auto(path, target, &args.task)?;
                let prior: FeaturePrior<f64> = match &args.scores {
                    Some(scores) => load_scores_file(scores, d.feature_names())?,
                    None => FeaturePrior::uniform(d.n_features()),
                };
                let label = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().to_string())
                    .unwrap_or_else(|| "dataset".to_string());
                (
                    run_adversarial_experiment(&d, &prior, args.replicates, &label, &rc)?,
                    vec![Method::NoPrior, Method::Adversarial],
                )
            }
            _ => {
                return Err(
                    Error::usage("simulate adversarial needs --setting or --dataset").into(),
                )
            }
        },
        other => {
            return Err(Error::usage(format!(
                "unknown simulation '{other}' (expected oracle|adversarial)"
            ))
            .into())
        }
    };
    summarize_and_write(&records, &methods, &args.out_records, &args.out_summary)
}
