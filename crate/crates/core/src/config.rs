//! Run configuration, read from a TOML file and overlaid with CLI flags.
//!
//! Relative paths in the file are taken relative to the file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{TaskSpec, Variant};
use crate::error::{Error, Result};
use crate::extraction::ExtractionConfig;
use crate::geo::IngestConfig;
use crate::guidance::GuidanceConfig;
use crate::inference::InferenceConfig;
use crate::llm::LiveConfig;
use crate::pipeline::PipelineConfig;
use crate::reliability::ReliabilityConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendMode {
    /// OpenAI-compatible HTTP endpoint.
    Live,
    /// Built-in deterministic synthetic model.
    Mock,
    /// Responses served from a cassette; no network.
    Replay,
    /// Live calls appended to a cassette.
    Record,
}

impl BackendMode {
    pub fn label(self) -> &'static str {
        match self {
            BackendMode::Live => "live",
            BackendMode::Mock => "mock",
            BackendMode::Replay => "replay",
            BackendMode::Record => "record",
        }
    }

    pub fn uses_network(self) -> bool {
        matches!(self, BackendMode::Live | BackendMode::Record)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub backend: BackendMode,
    /// Raw or enriched samples, one JSON object per line.
    pub dataset: Option<PathBuf>,
    /// Ground-truth table; when absent, truth is read from the samples.
    pub truth: Option<PathBuf>,
    /// Min-max rescale ground truth onto [0, 10] per task.
    pub rescale_truth: bool,
    pub tasks: Vec<String>,
    /// Tasks beyond the built-in presets.
    pub custom_tasks: Vec<TaskSpec>,
    pub variants: Vec<Variant>,
    pub workers: usize,
    pub out: PathBuf,
    pub cassette: Option<PathBuf>,
    /// Where factor books live; defaults to `<out>/factors`.
    pub factor_dir: Option<PathBuf>,
    /// Single source of sampling randomness, forwarded to the live backend.
    pub seed: Option<u64>,
    pub offline: bool,
    pub guidance: GuidanceConfig,
    pub extraction: ExtractionConfig,
    pub reliability: ReliabilityConfig,
    pub inference: InferenceConfig,
    pub ingest: IngestConfig,
    pub live: LiveConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            backend: BackendMode::Mock,
            dataset: None,
            truth: None,
            rescale_truth: true,
            tasks: vec!["running_amount".into()],
            custom_tasks: Vec::new(),
            variants: vec![Variant::Full],
            workers: 4,
            out: PathBuf::from("runs/latest"),
            cassette: None,
            factor_dir: None,
            seed: None,
            offline: false,
            guidance: GuidanceConfig::default(),
            extraction: ExtractionConfig::default(),
            reliability: ReliabilityConfig::default(),
            inference: InferenceConfig::default(),
            ingest: IngestConfig::default(),
            live: LiveConfig::default(),
        }
    }
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses `path` and resolves its relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase_paths(base);
        Ok(cfg)
    }

    pub fn rebase_paths(&mut self, base: &Path) {
        for p in [&mut self.dataset, &mut self.truth, &mut self.cassette, &mut self.factor_dir]
            .into_iter()
            .flatten()
        {
            rebase(base, p);
        }
        rebase(base, &mut self.out);
        rebase(base, &mut self.ingest.cache_dir);
    }

    pub fn factor_dir(&self) -> PathBuf {
        self.factor_dir.clone().unwrap_or_else(|| self.out.join("factors"))
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            workers: self.workers,
            extraction: self.extraction.clone(),
            reliability: self.reliability,
            inference: self.inference.clone(),
        }
    }

    pub fn ingest_config(&self) -> IngestConfig {
        IngestConfig {
            offline: self.offline || self.ingest.offline,
            ..self.ingest.clone()
        }
        .with_env()
    }

    pub fn live_config(&self) -> LiveConfig {
        let mut live = self.live.clone().with_env();
        if self.seed.is_some() {
            live.seed = self.seed;
        }
        live
    }

    /// Resolves task ids against the presets and `custom_tasks`.
    pub fn task_specs(&self) -> Result<Vec<TaskSpec>> {
        if self.tasks.is_empty() {
            return Err(Error::Usage("no tasks selected".into()));
        }
        self.tasks
            .iter()
            .map(|id| {
                self.custom_tasks
                    .iter()
                    .find(|t| &t.id == id)
                    .cloned()
                    .or_else(|| TaskSpec::preset(id))
                    .ok_or_else(|| {
                        let known: Vec<String> = TaskSpec::presets()
                            .into_iter()
                            .map(|t| t.id)
                            .chain(self.custom_tasks.iter().map(|t| t.id.clone()))
                            .collect();
                        Error::Usage(format!("unknown task `{id}` (known: {})", known.join(", ")))
                    })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Usage("no variants selected".into()));
        }
        for t in &self.custom_tasks {
            t.validate()?;
        }
        self.task_specs()?;
        self.pipeline().validate()?;
        self.ingest.validate()?;
        if matches!(self.backend, BackendMode::Replay | BackendMode::Record) && self.cassette.is_none() {
            return Err(Error::Usage(format!("backend `{}` needs --cassette", self.backend.label())));
        }
        if self.offline && self.backend.uses_network() {
            return Err(Error::Usage(format!(
                "backend `{}` needs the network; use replay or mock with --offline",
                self.backend.label()
            )));
        }
        Ok(())
    }
}
