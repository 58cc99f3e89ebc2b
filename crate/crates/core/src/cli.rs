//! Command-line stages: `factors`, `ingest`, `predict` and `evaluate`.
//!
//! Each stage reads its inputs from the run directory (`--out`), writes its
//! outputs there together with a manifest, and reports the number of
//! per-location failures. Network access goes through [`Env`], so stages can
//! run against stub transports.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{BackendMode, RunConfig};
use crate::domain::{load_samples, write_json_lines, write_samples, LocationSample, PredictionOutput, Variant};
use crate::error::{Error, Result};
use crate::evaluation::{metrics, render_csv, render_table, GroundTruth};
use crate::geo::GeoIngestor;
use crate::guidance::{guide, FactorBook, FactorMap};
use crate::http::{Clock, HttpClient, ReqwestClient, SystemClock};
use crate::llm::{Cassette, ChatBackend, LiveBackend, RecordingBackend, ReplayBackend};
use crate::pipeline::{similarity_lines, write_audit, Pipeline, RunStats};
use crate::synthetic;

#[derive(Debug, Parser)]
#[command(name = "urbanmas", version, about = "Multi-agent prediction for human-centered urban tasks")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendMode>,
    /// Variant to run; repeat for several.
    #[arg(long = "variant", global = true)]
    pub variants: Vec<Variant>,
    /// Comma-separated task ids.
    #[arg(long, global = true, value_delimiter = ',')]
    pub tasks: Vec<String>,
    /// Serve geo data from the cache only and refuse network backends.
    #[arg(long, global = true)]
    pub offline: bool,
    #[arg(long, global = true)]
    pub cassette: Option<PathBuf>,
    /// Run directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    #[arg(long, global = true)]
    pub truth: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Research and summarize predictive factors for each task.
    Factors {
        /// Recompute even when a factor book exists.
        #[arg(long)]
        force: bool,
    },
    /// Resolve addresses, nearby POIs and street-view references.
    Ingest,
    /// Run the agent pipeline and write predictions.
    Predict,
    /// Score predictions against ground truth.
    Evaluate,
}

/// Transport and clock used by every network-facing component.
pub struct Env {
    pub http: Arc<dyn HttpClient>,
    pub clock: Arc<dyn Clock>,
}

impl Env {
    pub fn system(timeout: Duration) -> Result<Env> {
        let http = ReqwestClient::new(timeout).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Env {
            http: Arc::new(http),
            clock: Arc::new(SystemClock::default()),
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Outcome {
    pub failures: usize,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        i32::from(self.failures > 0)
    }
}

/// Loads the config file, if any, and overlays the flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(b) = cli.backend {
        cfg.backend = b;
    }
    if !cli.variants.is_empty() {
        cfg.variants = cli.variants.clone();
    }
    if !cli.tasks.is_empty() {
        cfg.tasks = cli.tasks.clone();
    }
    cfg.offline |= cli.offline;
    if let Some(c) = &cli.cassette {
        cfg.cassette = Some(c.clone());
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(d) = &cli.dataset {
        cfg.dataset = Some(d.clone());
    }
    if let Some(t) = &cli.truth {
        cfg.truth = Some(t.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli, env: &Env, out: &mut dyn Write) -> Result<Outcome> {
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::Factors { force } => cmd_factors(&cfg, env, *force, out),
        Command::Ingest => cmd_ingest(&cfg, env, out),
        Command::Predict => cmd_predict(&cfg, env, out),
        Command::Evaluate => cmd_evaluate(&cfg, out),
    }
}

pub fn build_backend(cfg: &RunConfig, env: &Env) -> Result<Box<dyn ChatBackend>> {
    let cassette = || {
        cfg.cassette
            .clone()
            .ok_or_else(|| Error::Usage(format!("backend `{}` needs --cassette", cfg.backend.label())))
    };
    let live = || LiveBackend::new(cfg.live_config(), env.http.clone(), env.clock.clone());
    Ok(match cfg.backend {
        BackendMode::Mock => Box::new(synthetic::backend()),
        BackendMode::Replay => Box::new(ReplayBackend::open(cassette()?)?),
        BackendMode::Live => Box::new(live()?),
        BackendMode::Record => Box::new(RecordingBackend::new(live()?, Arc::new(Cassette::open(cassette()?)?))),
    })
}

fn sha256_file(path: &Path) -> Result<Option<String>> {
    match fs::read(path) {
        Ok(bytes) => Ok(Some(hex::encode(Sha256::digest(&bytes)))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(path, e)),
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub stage: &'a str,
    pub version: &'a str,
    pub backend: &'a str,
    pub seed: Option<u64>,
    pub dataset: Option<String>,
    pub dataset_sha256: Option<String>,
    pub cassette_sha256: Option<String>,
    pub config: &'a RunConfig,
}

/// Writes `<out>/manifest.<stage>.json`. Contains no timestamps, so replay
/// runs reproduce it byte for byte.
pub fn write_manifest(cfg: &RunConfig, stage: &str, dataset: Option<&Path>) -> Result<PathBuf> {
    let manifest = Manifest {
        stage,
        version: env!("CARGO_PKG_VERSION"),
        backend: cfg.backend.label(),
        seed: cfg.seed,
        dataset: dataset.map(|p| p.display().to_string()),
        dataset_sha256: dataset.map(sha256_file).transpose()?.flatten(),
        cassette_sha256: cfg.cassette.as_deref().map(sha256_file).transpose()?.flatten(),
        config: cfg,
    };
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let path = cfg.out.join(format!("manifest.{stage}.json"));
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json("manifest", e))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<output>", e)
}

pub fn print_factor_table(book: &FactorBook, out: &mut dyn Write) -> Result<()> {
    writeln!(out, "{}", book.task_id).map_err(io_err)?;
    for g in &book.pairs {
        let names: Vec<&str> = g.factor_set.names().collect();
        writeln!(out, "  {:<22} {}", g.factor_set.pair().slug(), names.join(" | ")).map_err(io_err)?;
    }
    Ok(())
}

pub fn cmd_factors(cfg: &RunConfig, env: &Env, force: bool, out: &mut dyn Write) -> Result<Outcome> {
    let tasks = cfg.task_specs()?;
    let dir = cfg.factor_dir();
    let mut backend: Option<Box<dyn ChatBackend>> = None;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    for task in &tasks {
        if !force {
            match FactorBook::load(&dir, &task.id) {
                Ok(book) => {
                    writeln!(out, "factor book for `{}` already present, reusing it", task.id).map_err(io_err)?;
                    print_factor_table(&book, out)?;
                    continue;
                }
                Err(Error::MissingFactorCache { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        if backend.is_none() {
            backend = Some(build_backend(cfg, env)?);
        }
        let b = backend.as_deref().expect("built above");
        let book = pool.install(|| guide(task, b, &cfg.guidance))?;
        let path = book.save(&dir)?;
        writeln!(out, "wrote {}", path.display()).map_err(io_err)?;
        print_factor_table(&book, out)?;
    }
    write_manifest(cfg, "factors", None)?;
    Ok(Outcome::default())
}

pub fn enriched_path(cfg: &RunConfig) -> PathBuf {
    cfg.out.join("enriched.jsonl")
}

fn dataset_path(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.dataset
        .clone()
        .ok_or_else(|| Error::Usage("no dataset given (--dataset or `dataset` in the config)".into()))
}

pub fn cmd_ingest(cfg: &RunConfig, env: &Env, out: &mut dyn Write) -> Result<Outcome> {
    let input = dataset_path(cfg)?;
    let samples = load_samples(&input)?;
    if samples.is_empty() {
        return Err(Error::EmptyInput("dataset"));
    }
    let geo = GeoIngestor::new(cfg.ingest_config(), env.http.clone(), env.clock.clone())?;
    let mut enriched = Vec::with_capacity(samples.len());
    let mut warnings = 0;
    let mut failed = Vec::new();
    let mut last_error = None;
    for s in &samples {
        match geo.enrich(s) {
            Ok(e) => {
                warnings += e.warnings.len();
                enriched.push(e.sample);
            }
            Err(e) => {
                log::error!("{}: no geo source reachable: {e}", s.id);
                failed.push(s.id.clone());
                enriched.push(s.clone());
                last_error = Some(e);
            }
        }
    }
    if failed.len() == samples.len() {
        return Err(last_error.expect("at least one sample").into());
    }
    let path = enriched_path(cfg);
    write_samples(&path, &enriched)?;
    let stats = geo.stats();
    writeln!(
        out,
        "enriched {} samples ({} failed, {} warnings) -> {}",
        samples.len() - failed.len(),
        failed.len(),
        warnings,
        path.display()
    )
    .map_err(io_err)?;
    writeln!(
        out,
        "geo cache: {} hits, {} misses ({:.0}% hits)",
        stats.hits,
        stats.misses,
        stats.hit_rate() * 100.0
    )
    .map_err(io_err)?;
    write_manifest(cfg, "ingest", Some(&input))?;
    Ok(Outcome { failures: failed.len() })
}

/// The enriched dataset when `ingest` has run, the configured one otherwise.
pub fn prediction_inputs(cfg: &RunConfig) -> Result<(PathBuf, Vec<LocationSample>)> {
    let enriched = enriched_path(cfg);
    let path = if enriched.is_file() { enriched } else { dataset_path(cfg)? };
    let samples = load_samples(&path)?;
    if samples.is_empty() {
        return Err(Error::EmptyInput("dataset"));
    }
    Ok((path, samples))
}

pub fn predictions_path(cfg: &RunConfig) -> PathBuf {
    cfg.out.join("predictions.jsonl")
}

#[derive(Debug, Serialize)]
struct StatsEntry<'a> {
    task_id: &'a str,
    variant: Variant,
    stats: &'a RunStats,
    failures: &'a [crate::pipeline::Failure],
}

pub fn cmd_predict(cfg: &RunConfig, env: &Env, out: &mut dyn Write) -> Result<Outcome> {
    let tasks = cfg.task_specs()?;
    let (input, samples) = prediction_inputs(cfg)?;
    let mut factors: BTreeMap<String, FactorMap> = BTreeMap::new();
    if cfg.variants.iter().any(|v| v.uses_guided_factors()) {
        for t in &tasks {
            factors.insert(t.id.clone(), FactorBook::load(&cfg.factor_dir(), &t.id)?.factor_map());
        }
    }
    let backend = build_backend(cfg, env)?;
    let pipeline = Pipeline::new(backend.as_ref(), cfg.pipeline())?;

    let audit = cfg.out.join("audit");
    let mut predictions: Vec<PredictionOutput> = Vec::new();
    let mut similarity = Vec::new();
    let mut stats = Vec::new();
    let mut results = Vec::new();
    for task in &tasks {
        for &variant in &cfg.variants {
            let result = pipeline.run(task, &samples, variant, factors.get(&task.id));
            write_audit(&audit, &result)?;
            predictions.extend(result.predictions());
            similarity.extend(similarity_lines(&result));
            writeln!(
                out,
                "{}/{}: {} predicted, {} failed, {} backend calls, {} refiner calls, {} clamped",
                task.id,
                variant,
                result.stats.succeeded,
                result.stats.failed,
                result.stats.backend_calls,
                result.stats.refiner_calls,
                result.stats.clamped
            )
            .map_err(io_err)?;
            results.push(result);
        }
    }
    for r in &results {
        stats.push(StatsEntry {
            task_id: &r.task_id,
            variant: r.variant,
            stats: &r.stats,
            failures: &r.failures,
        });
    }
    let failures: usize = results.iter().map(|r| r.failures.len()).sum();

    write_json_lines(&predictions_path(cfg), &predictions)?;
    write_json_lines(&cfg.out.join("similarity.jsonl"), &similarity)?;
    let stats_path = cfg.out.join("run-stats.json");
    let mut text = serde_json::to_string_pretty(&stats).map_err(|e| Error::json("run stats", e))?;
    text.push('\n');
    fs::write(&stats_path, text).map_err(|e| Error::io(&stats_path, e))?;
    write_manifest(cfg, "predict", Some(&input))?;
    writeln!(out, "wrote {} predictions -> {}", predictions.len(), predictions_path(cfg).display()).map_err(io_err)?;
    Ok(Outcome { failures })
}

fn load_predictions(path: &Path) -> Result<Vec<PredictionOutput>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::json(format!("{}:{}", path.display(), i + 1), e)))
        .collect()
}

pub fn ground_truth(cfg: &RunConfig) -> Result<GroundTruth> {
    match &cfg.truth {
        Some(p) => GroundTruth::load_csv(p),
        None => {
            let (_, samples) = prediction_inputs(cfg)?;
            GroundTruth::from_samples(&samples)
        }
    }
}

pub fn cmd_evaluate(cfg: &RunConfig, out: &mut dyn Write) -> Result<Outcome> {
    let predictions = load_predictions(&predictions_path(cfg))?;
    if predictions.is_empty() {
        return Err(Error::EmptyInput("predictions"));
    }
    let truth = ground_truth(cfg)?;
    let mut groups: Vec<((String, Variant), Vec<PredictionOutput>)> = Vec::new();
    for p in predictions {
        let key = (p.task_id.clone(), p.variant);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, g)) => g.push(p),
            None => groups.push((key, vec![p])),
        }
    }
    let mut reports = Vec::new();
    for ((task_id, _), preds) in &groups {
        let task_truth = truth.for_task(task_id, cfg.rescale_truth)?;
        let no_truth: Vec<String> = preds
            .iter()
            .filter(|p| !task_truth.contains_key(&p.location_id))
            .map(|p| p.location_id.clone())
            .collect();
        if !no_truth.is_empty() {
            return Err(Error::Alignment {
                no_truth,
                no_prediction: Vec::new(),
            });
        }
        let scored: BTreeMap<String, f64> = preds
            .iter()
            .map(|p| (p.location_id.clone(), task_truth[&p.location_id]))
            .collect();
        let mut report = metrics(preds, &scored)?;
        report.excluded = task_truth.len() - scored.len();
        reports.push(report);
    }
    let csv_path = cfg.out.join("report.csv");
    let txt_path = cfg.out.join("report.txt");
    let table = render_table(&reports);
    fs::write(&csv_path, render_csv(&reports)).map_err(|e| Error::io(&csv_path, e))?;
    fs::write(&txt_path, &table).map_err(|e| Error::io(&txt_path, e))?;
    write!(out, "{table}").map_err(io_err)?;
    write_manifest(cfg, "evaluate", cfg.truth.as_deref())?;
    Ok(Outcome::default())
}

