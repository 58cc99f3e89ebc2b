//! Predictive factor guidance: for every (dimension, level) pair a research
//! call produces a free-text report naming influential factors, and a
//! summary call compresses it into a validated six-factor set.
//!
//! Factor sets are task-level, so they are computed once per task and
//! persisted as a [`FactorBook`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::domain::{
    validate_factor_set, Dimension, FactorSet, Level, Pair, PredictiveFactor, TaskSpec, FACTORS_PER_SET,
};
use crate::error::{Error, Result};
use crate::llm::{ChatBackend, ChatRequest, ResponseFormat};
use crate::reply::{json_object, snippet};

pub type FactorMap = BTreeMap<Pair, FactorSet>;

pub const RESEARCH_SYSTEM: &str = "You are an urban science research agent. Given a prediction task, \
a dimension and a spatial level, investigate which measurable characteristics of a place most \
strongly influence the outcome. Write a concise research brief and enumerate the six most \
influential predictive factors as numbered lines of the form `N. Name: one-sentence definition`.";

pub const SUMMARY_SYSTEM: &str = "You are a summary agent. Compress a research brief into exactly six \
predictive factors. Reply with a JSON object {\"factors\": [{\"name\": ..., \"description\": ...}]} \
holding six entries with short distinct noun-phrase names and one-sentence measurable definitions.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuidanceConfig {
    pub min_report_chars: usize,
    /// Extra attempts after the first for both research and summary.
    pub retries: u32,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        GuidanceConfig {
            min_report_chars: 400,
            retries: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResearchReport {
    pub task_id: String,
    pub dimension: Dimension,
    pub level: Level,
    pub body: String,
}

impl ResearchReport {
    pub fn pair(&self) -> Pair {
        Pair::new(self.dimension, self.level)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub factor_set: FactorSet,
    pub retries: u32,
}

pub fn research_prompt(task: &TaskSpec, pair: Pair) -> String {
    format!(
        "Task: {}\nTask description: {}\nDimension: {}\nLevel: {}\n\n\
         Identify the most influential predictive factors for this task within the {} dimension at \
         the {} level. Explain briefly why each matters, then list exactly {FACTORS_PER_SET} \
         factors as numbered lines `N. Name: definition`.",
        task.id,
        task.description,
        pair.dimension.label(),
        pair.level.label(),
        pair.dimension.label(),
        pair.level.label(),
    )
}

/// Asks for a research brief, re-asking with a new variant seed while the
/// reply is shorter than the configured minimum.
pub fn research(task: &TaskSpec, pair: Pair, backend: &dyn ChatBackend, cfg: &GuidanceConfig) -> Result<ResearchReport> {
    let user = research_prompt(task, pair);
    let mut shortest = 0;
    for attempt in 0..=cfg.retries {
        let req = ChatRequest::new(RESEARCH_SYSTEM, user.clone(), ResponseFormat::FreeText).with_seed(attempt);
        let body = backend.complete(&req)?.text.trim().to_string();
        let len = body.chars().count();
        if len >= cfg.min_report_chars && len > 0 {
            return Ok(ResearchReport {
                task_id: task.id.clone(),
                dimension: pair.dimension,
                level: pair.level,
                body,
            });
        }
        log::warn!("{pair}: research report has {len} characters, below {}", cfg.min_report_chars);
        shortest = if attempt == 0 { len } else { shortest.max(len) };
    }
    Err(Error::DegenerateReport {
        len: shortest,
        min: cfg.min_report_chars,
    })
}

pub fn summary_prompt(task: &TaskSpec, report: &ResearchReport) -> String {
    format!(
        "Task: {}\nTask description: {}\nDimension: {}\nLevel: {}\n\nResearch brief:\n{}\n\n\
         Summarize the brief into exactly {FACTORS_PER_SET} predictive factors.",
        task.id,
        task.description,
        report.dimension.label(),
        report.level.label(),
        report.body,
    )
}

/// Reads `{"factors": [...]}` or a bare array of `{name, description}`.
pub fn parse_factors(text: &str) -> std::result::Result<Vec<PredictiveFactor>, String> {
    let items = match serde_json::from_str::<Value>(text.trim()) {
        Ok(Value::Array(items)) => items,
        _ => match json_object(text)?.remove("factors") {
            Some(Value::Array(items)) => items,
            _ => return Err("reply has no `factors` array".into()),
        },
    };
    items
        .into_iter()
        .enumerate()
        .map(|(i, item)| {
            let name = item.get("name").and_then(Value::as_str);
            let description = item.get("description").and_then(Value::as_str);
            match (name, description) {
                (Some(n), Some(d)) => Ok(PredictiveFactor::new(n.trim(), d.trim())),
                _ => Err(format!("factor #{} lacks a string name or description: {}", i + 1, snippet(&item.to_string()))),
            }
        })
        .collect()
}

/// Turns a report into a validated factor set. Rejected replies are
/// re-asked with the violations appended to the prompt.
pub fn summarize(task: &TaskSpec, report: &ResearchReport, backend: &dyn ChatBackend, cfg: &GuidanceConfig) -> Result<Summary> {
    let base = summary_prompt(task, report);
    let mut violations: Vec<String> = Vec::new();
    for attempt in 0..=cfg.retries {
        let user = if violations.is_empty() {
            base.clone()
        } else {
            let mut user = base.clone();
            user.push_str("\n\nYour previous answer was rejected:\n");
            for v in &violations {
                user.push_str("- ");
                user.push_str(v);
                user.push('\n');
            }
            user.push_str(&format!("Return exactly {FACTORS_PER_SET} factors with distinct names."));
            user
        };
        let req = ChatRequest::new(SUMMARY_SYSTEM, user, ResponseFormat::StructuredObject).with_seed(attempt);
        let text = backend.complete(&req)?.text;
        violations = match parse_factors(&text) {
            Ok(factors) => {
                let factor_set = FactorSet {
                    task_id: task.id.clone(),
                    dimension: report.dimension,
                    level: report.level,
                    factors,
                };
                match validate_factor_set(&factor_set) {
                    Ok(()) => {
                        return Ok(Summary {
                            factor_set,
                            retries: attempt,
                        })
                    }
                    Err(vs) => vs.iter().map(ToString::to_string).collect(),
                }
            }
            Err(e) => vec![e],
        };
        log::warn!("{}: factor set rejected: {}", report.pair(), violations.join("; "));
    }
    Err(Error::InvalidFactorSet {
        attempts: cfg.retries as usize + 1,
        violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidedPair {
    pub report: ResearchReport,
    pub factor_set: FactorSet,
    pub summary_retries: u32,
}

/// The persisted guidance of one task: four reports with their factor sets,
/// in canonical pair order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorBook {
    pub task_id: String,
    pub pairs: Vec<GuidedPair>,
}

impl FactorBook {
    pub fn path(dir: &Path, task_id: &str) -> PathBuf {
        dir.join(format!("{task_id}.json"))
    }

    pub fn factor_map(&self) -> FactorMap {
        self.pairs.iter().map(|g| (g.factor_set.pair(), g.factor_set.clone())).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let pairs: Vec<Pair> = self.pairs.iter().map(|g| g.factor_set.pair()).collect();
        if pairs != Pair::ALL {
            return Err(Error::invalid("factor book", format!("pairs {pairs:?} are not the four canonical pairs")));
        }
        for g in &self.pairs {
            if g.factor_set.task_id != self.task_id {
                return Err(Error::invalid("factor book", format!("{} belongs to task `{}`", g.factor_set.pair(), g.factor_set.task_id)));
            }
            validate_factor_set(&g.factor_set).map_err(|vs| Error::InvalidFactorSet {
                attempts: 0,
                violations: vs.iter().map(ToString::to_string).collect(),
            })?;
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = Self::path(dir, &self.task_id);
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::json("factor book", e))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load(dir: &Path, task_id: &str) -> Result<FactorBook> {
        let path = Self::path(dir, task_id);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::MissingFactorCache {
                    task: task_id.to_string(),
                    path,
                })
            }
            Err(e) => return Err(Error::io(&path, e)),
        };
        let book: FactorBook =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        book.validate()?;
        Ok(book)
    }
}

/// Runs research and summary for all four pairs, concurrently on the
/// current rayon pool. Errors name the failing pair.
pub fn guide(task: &TaskSpec, backend: &dyn ChatBackend, cfg: &GuidanceConfig) -> Result<FactorBook> {
    task.validate()?;
    let pairs = Pair::ALL
        .par_iter()
        .map(|&pair| {
            let chain = || -> Result<GuidedPair> {
                let report = research(task, pair, backend, cfg)?;
                let summary = summarize(task, &report, backend, cfg)?;
                Ok(GuidedPair {
                    report,
                    factor_set: summary.factor_set,
                    summary_retries: summary.retries,
                })
            };
            chain().map_err(|e| e.at(pair))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(FactorBook {
        task_id: task.id.clone(),
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{BackendError, ChatResponse, CountingBackend, MockBackend};
    use crate::synthetic;

    fn task() -> TaskSpec {
        TaskSpec::preset("running_amount").unwrap()
    }

    fn six(names: &[&str]) -> String {
        let factors: Vec<Value> = names
            .iter()
            .map(|n| serde_json::json!({"name": n, "description": format!("How much {n} is present.")}))
            .collect();
        serde_json::json!({ "factors": factors }).to_string()
    }

    #[test]
    fn synthetic_guide_yields_four_valid_sets() {
        let backend = CountingBackend::new(synthetic::backend());
        let book = guide(&task(), &backend, &GuidanceConfig::default()).unwrap();
        assert_eq!(book.pairs.len(), 4);
        let map = book.factor_map();
        assert_eq!(map.keys().copied().collect::<Vec<_>>(), Pair::ALL);
        for fs in map.values() {
            assert!(validate_factor_set(fs).is_ok());
        }
        assert_eq!(backend.calls(), 8);
    }

    #[test]
    fn report_lists_six_factors() {
        let report = research(&task(), Pair::ALL[0], &synthetic::backend(), &GuidanceConfig::default()).unwrap();
        let numbered = report.body.lines().filter(|l| l.trim_start().starts_with(|c: char| c.is_ascii_digit())).count();
        assert!(numbered >= 6);
        assert!(report.body.chars().count() >= 400);
    }

    #[test]
    fn empty_reports_are_degenerate() {
        let backend = CountingBackend::new(MockBackend::constant(""));
        let err = research(&task(), Pair::ALL[0], &backend, &GuidanceConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateReport { len: 0, min: 400 }));
        assert_eq!(backend.calls(), 3);
    }

    #[test]
    fn five_then_six_succeeds_after_one_retry() {
        let backend = MockBackend::new(|_, user, _| {
            if user.contains("count=5") {
                six(&["a", "b", "c", "d", "e", "f"])
            } else {
                six(&["a", "b", "c", "d", "e"])
            }
        });
        let report = ResearchReport {
            task_id: "running_amount".into(),
            dimension: Dimension::Social,
            level: Level::Macro,
            body: "x".repeat(500),
        };
        let summary = summarize(&task(), &report, &backend, &GuidanceConfig::default()).unwrap();
        assert_eq!(summary.retries, 1);
        assert_eq!(summary.factor_set.factors.len(), 6);
    }

    #[test]
    fn always_five_is_exhausted() {
        let backend = CountingBackend::new(MockBackend::constant(six(&["a", "b", "c", "d", "e"])));
        let report = ResearchReport {
            task_id: "running_amount".into(),
            dimension: Dimension::Social,
            level: Level::Macro,
            body: "x".repeat(500),
        };
        let err = summarize(&task(), &report, &backend, &GuidanceConfig::default()).unwrap_err();
        match err {
            Error::InvalidFactorSet { attempts, violations } => {
                assert_eq!(attempts, 3);
                assert_eq!(violations, ["count=5, expected 6"]);
            }
            other => panic!("unexpected {other}"),
        }
        assert_eq!(backend.calls(), 3);
    }

    #[test]
    fn parse_factors_shapes() {
        assert_eq!(parse_factors(&six(&["a", "b", "c", "d", "e", "f"])).unwrap().len(), 6);
        assert_eq!(parse_factors(r#"[{"name":"a","description":"d"}]"#).unwrap().len(), 1);
        assert!(parse_factors(r#"{"items": []}"#).is_err());
        assert!(parse_factors(r#"{"factors": [{"name": 3}]}"#).is_err());
    }

    struct MissingPair;

    impl ChatBackend for MissingPair {
        fn complete(&self, req: &ChatRequest) -> std::result::Result<ChatResponse, BackendError> {
            if req.user_prompt.contains("Dimension: Built Environmental\nLevel: Street") {
                return Err(BackendError::ReplayMiss { fingerprint: "f".into() });
            }
            synthetic::backend().complete(req)
        }

        fn backend_id(&self) -> &str {
            "missing-pair"
        }
    }

    #[test]
    fn failing_pair_is_named() {
        let err = guide(&task(), &MissingPair, &GuidanceConfig::default()).unwrap_err();
        match err {
            Error::AtPair { pair, .. } => assert_eq!(pair, Pair::ALL[3]),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn book_round_trip_and_missing_cache() {
        let dir = tempfile::tempdir().unwrap();
        let book = guide(&task(), &synthetic::backend(), &GuidanceConfig::default()).unwrap();
        book.save(dir.path()).unwrap();
        assert_eq!(FactorBook::load(dir.path(), "running_amount").unwrap(), book);
        assert!(matches!(
            FactorBook::load(dir.path(), "liveliness"),
            Err(Error::MissingFactorCache { .. })
        ));
    }
}
