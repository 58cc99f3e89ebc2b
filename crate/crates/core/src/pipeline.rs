//! Runs one task over a set of locations for one variant, on a bounded
//! worker pool, and writes a per-location audit trail.
//!
//! Results are gathered in input order regardless of scheduling, so the
//! output of a run depends only on its inputs and the backend.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{
    Dimension, FactorSet, Level, LocationSample, Pair, PredictionOutput, PredictiveFactor, RecordStatus, TaskSpec,
    UrbanInfoRecord, Variant,
};
use crate::error::{Error, Result};
use crate::extraction::{extract_reliable, extract_single_variant, ExtractionConfig, PairExtraction};
use crate::guidance::FactorMap;
use crate::inference::{infer, infer_single_llm, Inference, InferenceConfig};
use crate::llm::ChatBackend;
use crate::reliability::ReliabilityConfig;

/// Version tag of [`generic_factor_map`]; bump on any change to the set.
pub const GENERIC_FACTORS_VERSION: &str = "generic-v1";

const GENERIC_FACTORS: [(&str, &str); 6] = [
    ("General character", "Overall character of the place at this scale."),
    ("Activity level", "How much activity is visible or expected here."),
    ("Accessibility", "How easily people can reach and move through the place."),
    ("Amenities", "Facilities and services available nearby."),
    ("Physical condition", "State of the buildings, surfaces and open spaces."),
    ("Overall impression", "The general impression the place gives a visitor."),
];

/// The fixed, task-agnostic factors that replace guided ones when predictive
/// factors are ablated. Every pair gets the same six.
pub fn generic_factor_map(task_id: &str) -> FactorMap {
    Pair::ALL
        .iter()
        .map(|&pair| {
            let fs = FactorSet {
                task_id: task_id.to_string(),
                dimension: pair.dimension,
                level: pair.level,
                factors: GENERIC_FACTORS
                    .iter()
                    .map(|(n, d)| PredictiveFactor::new(*n, *d))
                    .collect(),
            };
            (pair, fs)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub workers: usize,
    pub extraction: ExtractionConfig,
    pub reliability: ReliabilityConfig,
    pub inference: InferenceConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            workers: 4,
            extraction: ExtractionConfig::default(),
            reliability: ReliabilityConfig::default(),
            inference: InferenceConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.extraction.value_cap == 0 {
            return Err(Error::Config("extraction.value_cap must be positive".into()));
        }
        self.reliability.validate()
    }
}

/// Everything that happened for one (location, task, variant).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationRun {
    pub location_id: String,
    pub task_id: String,
    pub variant: Variant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor_source: Option<String>,
    pub extraction: Vec<PairExtraction>,
    pub inference: Inference,
}

impl LocationRun {
    pub fn prediction(&self) -> &PredictionOutput {
        &self.inference.prediction
    }

    pub fn records(&self) -> Vec<&UrbanInfoRecord> {
        self.extraction.iter().map(|p| &p.record).collect()
    }

    pub fn backend_calls(&self) -> usize {
        self.extraction.iter().map(PairExtraction::backend_calls).sum::<usize>() + self.inference.exchanges.len()
    }

    pub fn refiner_calls(&self) -> usize {
        self.extraction.iter().map(|p| p.repairs.len()).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub locations: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub backend_calls: usize,
    pub refiner_calls: usize,
    pub reasks: usize,
    pub inference_retries: usize,
    pub clamped: usize,
    pub low_confidence_fields: usize,
    pub records_by_status: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub location_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub task_id: String,
    pub variant: Variant,
    pub runs: Vec<LocationRun>,
    pub failures: Vec<Failure>,
    pub stats: RunStats,
}

impl RunResult {
    pub fn predictions(&self) -> Vec<PredictionOutput> {
        self.runs.iter().map(|r| r.prediction().clone()).collect()
    }
}

fn status_label(s: RecordStatus) -> &'static str {
    match s {
        RecordStatus::Raw => "raw",
        RecordStatus::Stable => "stable",
        RecordStatus::Refined => "refined",
        RecordStatus::LowConfidence => "low_confidence",
    }
}

pub struct Pipeline<'a> {
    backend: &'a dyn ChatBackend,
    cfg: PipelineConfig,
    pool: rayon::ThreadPool,
}

impl<'a> Pipeline<'a> {
    pub fn new(backend: &'a dyn ChatBackend, cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .thread_name(|i| format!("urbanmas-worker-{i}"))
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        Ok(Pipeline { backend, cfg, pool })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn backend(&self) -> &dyn ChatBackend {
        self.backend
    }

    /// Runs `f` on the pipeline's worker pool.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }

    /// `factors` must hold the guided map for variants that use one; it is
    /// ignored otherwise.
    pub fn predict_location(
        &self,
        task: &TaskSpec,
        sample: &LocationSample,
        variant: Variant,
        factors: Option<&FactorMap>,
    ) -> Result<LocationRun> {
        let cfg = &self.cfg;
        let (extraction, factor_source) = match variant {
            Variant::SingleLlm => (Vec::new(), None),
            Variant::NoFactors => {
                let generic = generic_factor_map(&task.id);
                let out = extract_reliable(sample, &generic, self.backend, &cfg.extraction, &cfg.reliability)?;
                (out, Some(GENERIC_FACTORS_VERSION.to_string()))
            }
            Variant::Full | Variant::NoReliability => {
                let map = factors.ok_or_else(|| {
                    Error::Config(format!("variant {variant} needs guided factors for task `{}`", task.id))
                })?;
                let out = if variant == Variant::Full {
                    extract_reliable(sample, map, self.backend, &cfg.extraction, &cfg.reliability)?
                } else {
                    extract_single_variant(sample, map, self.backend, &cfg.extraction)?
                };
                (out, Some("guided".to_string()))
            }
        };
        let inference = if variant == Variant::SingleLlm {
            infer_single_llm(task, sample, self.backend, &cfg.inference)?
        } else {
            let records: Vec<UrbanInfoRecord> = extraction.iter().map(|p| p.record.clone()).collect();
            infer(task, &records, variant, self.backend, &cfg.inference)?
        };
        Ok(LocationRun {
            location_id: sample.id.clone(),
            task_id: task.id.clone(),
            variant,
            factor_source,
            extraction,
            inference,
        })
    }

    /// Predicts every sample; failed locations are logged, counted and left
    /// out of `runs`.
    pub fn run(&self, task: &TaskSpec, samples: &[LocationSample], variant: Variant, factors: Option<&FactorMap>) -> RunResult {
        let outcomes: Vec<Result<LocationRun>> = self.pool.install(|| {
            samples
                .par_iter()
                .map(|s| self.predict_location(task, s, variant, factors))
                .collect()
        });
        let mut runs = Vec::new();
        let mut failures = Vec::new();
        let mut stats = RunStats {
            locations: samples.len(),
            ..RunStats::default()
        };
        for (sample, outcome) in samples.iter().zip(outcomes) {
            match outcome {
                Ok(run) => {
                    stats.backend_calls += run.backend_calls();
                    stats.refiner_calls += run.refiner_calls();
                    stats.inference_retries += run.inference.retries as usize;
                    stats.clamped += usize::from(run.prediction().clamped);
                    for p in &run.extraction {
                        stats.reasks += p.reasks as usize;
                        *stats.records_by_status.entry(status_label(p.record.status).into()).or_default() += 1;
                        stats.low_confidence_fields += p.record.fields.iter().filter(|f| f.value.low_confidence).count();
                    }
                    runs.push(run);
                }
                Err(e) => {
                    log::error!("{}/{}/{variant}: {e}", sample.id, task.id);
                    failures.push(Failure {
                        location_id: sample.id.clone(),
                        error: e.to_string(),
                    });
                }
            }
        }
        stats.succeeded = runs.len();
        stats.failed = failures.len();
        if stats.failed > 0 {
            log::warn!("{}/{variant}: {} of {} locations failed", task.id, stats.failed, stats.locations);
        }
        RunResult {
            task_id: task.id.clone(),
            variant,
            runs,
            failures,
            stats,
        }
    }
}

/// Writes `<root>/<task>/<variant>/<location>.json` for every run.
pub fn write_audit(root: &Path, result: &RunResult) -> Result<Vec<PathBuf>> {
    let dir = root.join(&result.task_id).join(result.variant.label());
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut written = Vec::new();
    for run in &result.runs {
        let path = dir.join(format!("{}.json", run.location_id));
        let mut text = serde_json::to_string_pretty(run).map_err(|e| Error::json("audit", e))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// One line per extracted pair with its similarity scores, for inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityLine {
    pub location_id: String,
    pub task_id: String,
    pub variant: Variant,
    pub dimension: Dimension,
    pub level: Level,
    pub status: RecordStatus,
    pub aggregate: Option<f64>,
    pub per_field: Vec<(String, f64)>,
    pub conflicting: Vec<String>,
    pub repairs: usize,
}

pub fn similarity_lines(result: &RunResult) -> Vec<SimilarityLine> {
    result
        .runs
        .iter()
        .flat_map(|run| {
            run.extraction.iter().map(move |p| SimilarityLine {
                location_id: run.location_id.clone(),
                task_id: run.task_id.clone(),
                variant: run.variant,
                dimension: p.pair.dimension,
                level: p.pair.level,
                status: p.record.status,
                aggregate: p.similarity.as_ref().map(|s| s.aggregate),
                per_field: p.similarity.as_ref().map(|s| s.per_field.clone()).unwrap_or_default(),
                conflicting: p.similarity.as_ref().map(|s| s.conflicting.clone()).unwrap_or_default(),
                repairs: p.repairs.len(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::validate_factor_set;
    use crate::guidance::{guide, GuidanceConfig};
    use crate::llm::{CountingBackend, MockBackend};
    use crate::synthetic;

    fn samples() -> Vec<LocationSample> {
        let mut a = LocationSample::new("a", 35.6586, 139.7454, "Tokyo").unwrap();
        a.address = Some("Shibakoen, Minato, Tokyo".into());
        let b = LocationSample::new("b", 45.4642, 9.19, "Milan").unwrap();
        vec![a, b]
    }

    #[test]
    fn generic_set_is_valid_everywhere() {
        let map = generic_factor_map("t");
        assert_eq!(map.len(), 4);
        assert!(map.values().all(|fs| validate_factor_set(fs).is_ok()));
    }

    #[test]
    fn call_accounting_per_variant() {
        let task = TaskSpec::preset("liveliness").unwrap();
        let backend = CountingBackend::new(synthetic::backend());
        let factors = guide(&task, &backend, &GuidanceConfig::default()).unwrap().factor_map();
        let pipeline = Pipeline::new(&backend, PipelineConfig { workers: 2, ..Default::default() }).unwrap();
        for variant in Variant::ALL {
            backend.reset();
            let res = pipeline.run(&task, &samples(), variant, Some(&factors));
            assert!(res.failures.is_empty(), "{:?}", res.failures);
            let expected: usize = res
                .runs
                .iter()
                .map(|r| match variant {
                    Variant::Full | Variant::NoFactors => 4 * 2 + r.refiner_calls() + 1,
                    Variant::NoReliability => 4 + 1,
                    Variant::SingleLlm => 1,
                })
                .sum();
            assert_eq!(backend.calls(), expected, "{variant}");
            assert_eq!(res.stats.backend_calls, expected);
        }
    }

    #[test]
    fn failures_are_excluded_not_fatal() {
        let task = TaskSpec::preset("liveliness").unwrap();
        let backend = MockBackend::new(|_, user, _| {
            if user.contains("Location: b") {
                "nonsense".into()
            } else {
                r#"{"liveliness_score": 5}"#.into()
            }
        });
        let pipeline = Pipeline::new(&backend, PipelineConfig::default()).unwrap();
        let res = pipeline.run(&task, &samples(), Variant::SingleLlm, None);
        assert_eq!(res.runs.len(), 1);
        assert_eq!(res.failures[0].location_id, "b");
        assert_eq!(res.stats.failed, 1);
    }

    #[test]
    fn guided_variant_without_factors_fails() {
        let task = TaskSpec::preset("liveliness").unwrap();
        let backend = synthetic::backend();
        let pipeline = Pipeline::new(&backend, PipelineConfig::default()).unwrap();
        assert!(pipeline.predict_location(&task, &samples()[0], Variant::Full, None).is_err());
    }

    #[test]
    fn zero_workers_rejected() {
        let backend = synthetic::backend();
        assert!(Pipeline::new(&backend, PipelineConfig { workers: 0, ..Default::default() }).is_err());
    }
}
