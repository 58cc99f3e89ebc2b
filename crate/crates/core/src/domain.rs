//! Shared vocabulary: tasks, dimensions and levels, locations, factor sets,
//! extraction records and predictions.
//!
//! Everything here is plain data. Constructors check invariants; nothing
//! mutates after construction except through explicit status transitions.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every prediction target and every ground-truth value lives on this scale.
pub const OUTPUT_RANGE: (f64, f64) = (0.0, 10.0);

/// Number of predictive factors per (dimension, level) pair.
pub const FACTORS_PER_SET: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub description: String,
    pub output_key: String,
}

impl TaskSpec {
    pub fn new(
        id: impl Into<String>,
        description: impl Into<String>,
        output_key: impl Into<String>,
    ) -> Result<Self> {
        let task = TaskSpec {
            id: id.into(),
            description: description.into(),
            output_key: output_key.into(),
        };
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::invalid("task", "id is empty"));
        }
        if self.output_key.trim().is_empty() {
            return Err(Error::invalid("task", format!("`{}` has an empty output_key", self.id)));
        }
        if self.description.trim().is_empty() {
            return Err(Error::invalid("task", format!("`{}` has an empty description", self.id)));
        }
        Ok(())
    }

    pub fn output_range(&self) -> (f64, f64) {
        OUTPUT_RANGE
    }

    /// The three evaluation tasks: running amount, boringness and liveliness.
    pub fn presets() -> Vec<TaskSpec> {
        vec![
            TaskSpec {
                id: "running_amount".into(),
                description: "Estimate the amount of recreational running activity at this \
                              location on a 0-10 scale, where 0 means almost no runners and 10 \
                              means one of the busiest running spots in the city."
                    .into(),
                output_key: "running_amount".into(),
            },
            TaskSpec {
                id: "boringness".into(),
                description: "Estimate how boring people perceive the streetscape at this \
                              location on a 0-10 scale, where 10 is the most boring."
                    .into(),
                output_key: "boringness_score".into(),
            },
            TaskSpec {
                id: "liveliness".into(),
                description: "Estimate how lively people perceive the streetscape at this \
                              location on a 0-10 scale, where 10 is the most lively."
                    .into(),
                output_key: "liveliness_score".into(),
            },
        ]
    }

    pub fn preset(id: &str) -> Option<TaskSpec> {
        Self::presets().into_iter().find(|t| t.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Social,
    BuiltEnvironmental,
}

impl Dimension {
    pub const ALL: [Dimension; 2] = [Dimension::Social, Dimension::BuiltEnvironmental];

    pub fn label(self) -> &'static str {
        match self {
            Dimension::Social => "Social",
            Dimension::BuiltEnvironmental => "Built Environmental",
        }
    }

    fn slug(self) -> &'static str {
        match self {
            Dimension::Social => "social",
            Dimension::BuiltEnvironmental => "environment",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Macro,
    Street,
}

impl Level {
    pub const ALL: [Level; 2] = [Level::Macro, Level::Street];

    pub fn label(self) -> &'static str {
        match self {
            Level::Macro => "Macro",
            Level::Street => "Street",
        }
    }
}

/// One (dimension, level) cell of the 2x2 grid the agents are organised by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pair {
    pub dimension: Dimension,
    pub level: Level,
}

impl Pair {
    pub const fn new(dimension: Dimension, level: Level) -> Self {
        Pair { dimension, level }
    }

    /// Canonical order: social-macro, social-street, environment-macro,
    /// environment-street.
    pub const ALL: [Pair; 4] = [
        Pair::new(Dimension::Social, Level::Macro),
        Pair::new(Dimension::Social, Level::Street),
        Pair::new(Dimension::BuiltEnvironmental, Level::Macro),
        Pair::new(Dimension::BuiltEnvironmental, Level::Street),
    ];

    pub fn slug(self) -> String {
        format!("{}-{}", self.dimension.slug(), self.level.label().to_lowercase())
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.slug())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiEntry {
    pub name: String,
    pub category: String,
    pub distance_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationSample {
    pub id: String,
    #[serde(rename = "lat")]
    pub latitude: f64,
    #[serde(rename = "lon")]
    pub longitude: f64,
    #[serde(default)]
    pub city: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub address: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pois: Vec<PoiEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub streetview_refs: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub ground_truth: BTreeMap<String, f64>,
}

impl LocationSample {
    pub fn new(id: impl Into<String>, latitude: f64, longitude: f64, city: impl Into<String>) -> Result<Self> {
        let sample = LocationSample {
            id: id.into(),
            latitude,
            longitude,
            city: city.into(),
            address: None,
            pois: Vec::new(),
            streetview_refs: Vec::new(),
            ground_truth: BTreeMap::new(),
        };
        sample.validate()?;
        Ok(sample)
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::invalid("location", "id is empty"));
        }
        check_coordinates(self.latitude, self.longitude)
            .map_err(|detail| Error::invalid("location", format!("{}: {detail}", self.id)))?;
        for poi in &self.pois {
            if !(poi.distance_m >= 0.0) {
                return Err(Error::invalid(
                    "location",
                    format!("{}: POI `{}` has negative distance", self.id, poi.name),
                ));
            }
        }
        for (task, value) in &self.ground_truth {
            if !in_output_range(*value) {
                return Err(Error::invalid(
                    "location",
                    format!("{}: ground truth for `{task}` is {value}, outside [0, 10]", self.id),
                ));
            }
        }
        Ok(())
    }
}

pub(crate) fn check_coordinates(lat: f64, lon: f64) -> std::result::Result<(), String> {
    if !(-90.0..=90.0).contains(&lat) {
        return Err(format!("latitude {lat} outside [-90, 90]"));
    }
    if !(-180.0..=180.0).contains(&lon) {
        return Err(format!("longitude {lon} outside [-180, 180]"));
    }
    Ok(())
}

pub fn in_output_range(value: f64) -> bool {
    (OUTPUT_RANGE.0..=OUTPUT_RANGE.1).contains(&value)
}

/// Reads a dataset with one JSON object per line. Blank lines are skipped.
pub fn load_samples(path: &Path) -> Result<Vec<LocationSample>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: LocationSample = serde_json::from_str(&line)
            .map_err(|e| Error::json(format!("{}:{}", path.display(), lineno + 1), e))?;
        sample.validate()?;
        if !seen.insert(sample.id.clone()) {
            return Err(Error::invalid("dataset", format!("duplicate location id `{}`", sample.id)));
        }
        samples.push(sample);
    }
    Ok(samples)
}

pub fn write_samples(path: &Path, samples: &[LocationSample]) -> Result<()> {
    write_json_lines(path, samples)
}

pub(crate) fn write_json_lines<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut out = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut out, row).map_err(|e| Error::json(path.display().to_string(), e))?;
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictiveFactor {
    pub name: String,
    pub description: String,
}

impl PredictiveFactor {
    pub fn new(name: impl Into<String>, description: impl Into<String>) -> Self {
        PredictiveFactor {
            name: name.into(),
            description: description.into(),
        }
    }
}

/// The six factors guiding extraction for one (dimension, level) pair of a task.
///
/// Built from untrusted model output, so it can hold any number of factors;
/// run [`validate_factor_set`] before using it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorSet {
    pub task_id: String,
    pub dimension: Dimension,
    pub level: Level,
    pub factors: Vec<PredictiveFactor>,
}

impl FactorSet {
    pub fn pair(&self) -> Pair {
        Pair::new(self.dimension, self.level)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factors.iter().map(|f| f.name.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Count { found: usize },
    DuplicateName { name: String },
    EmptyName { index: usize },
    EmptyDescription { name: String },
    MultilineName { name: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Count { found } => write!(f, "count={found}, expected {FACTORS_PER_SET}"),
            Violation::DuplicateName { name } => write!(f, "duplicate factor name `{name}`"),
            Violation::EmptyName { index } => write!(f, "factor #{} has an empty name", index + 1),
            Violation::EmptyDescription { name } => write!(f, "factor `{name}` has an empty description"),
            Violation::MultilineName { name } => write!(f, "factor name `{}` contains a line break", name.escape_debug()),
        }
    }
}

fn factor_key(name: &str) -> String {
    name.trim().to_lowercase()
}

/// Accepts iff there are exactly six factors with nonempty, single-line,
/// pairwise distinct names (compared lowercased and trimmed) and nonempty
/// descriptions.
pub fn validate_factor_set(fs: &FactorSet) -> std::result::Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    if fs.factors.len() != FACTORS_PER_SET {
        violations.push(Violation::Count { found: fs.factors.len() });
    }
    let mut seen = HashSet::new();
    for (index, factor) in fs.factors.iter().enumerate() {
        let key = factor_key(&factor.name);
        if key.is_empty() {
            violations.push(Violation::EmptyName { index });
            continue;
        }
        if factor.name.contains(['\n', '\r']) {
            violations.push(Violation::MultilineName { name: factor.name.clone() });
        }
        if factor.description.trim().is_empty() {
            violations.push(Violation::EmptyDescription { name: factor.name.clone() });
        }
        if !seen.insert(key) {
            violations.push(Violation::DuplicateName { name: factor.name.clone() });
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    VariantA,
    VariantB,
    Refined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldValue {
    pub text: String,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
    #[serde(default)]
    pub repair_rounds: u32,
    /// Set when the field stayed below the stability gate after the last repair round.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub low_confidence: bool,
}

impl FieldValue {
    pub fn raw(text: impl Into<String>, provenance: Provenance) -> Self {
        FieldValue {
            text: text.into(),
            provenance,
            similarity: None,
            repair_rounds: 0,
            low_confidence: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    #[serde(flatten)]
    pub value: FieldValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Raw,
    Stable,
    Refined,
    LowConfidence,
}

impl RecordStatus {
    pub fn can_become(self, next: RecordStatus) -> bool {
        matches!(
            (self, next),
            (RecordStatus::Raw, RecordStatus::Stable)
                | (RecordStatus::Raw, RecordStatus::Refined)
                | (RecordStatus::Raw, RecordStatus::LowConfidence)
        )
    }
}

/// Structured extraction output for one location under one (dimension, level) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UrbanInfoRecord {
    pub location_id: String,
    pub task_id: String,
    pub dimension: Dimension,
    pub level: Level,
    pub fields: Vec<Field>,
    pub status: RecordStatus,
}

impl UrbanInfoRecord {
    pub fn pair(&self) -> Pair {
        Pair::new(self.dimension, self.level)
    }

    pub fn keys(&self) -> Vec<&str> {
        self.fields.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&FieldValue> {
        self.fields.iter().find(|f| f.name == name).map(|f| &f.value)
    }

    /// Field keys must equal the factor names of `fs`, in order, and every
    /// text must be nonempty.
    pub fn check_against(&self, fs: &FactorSet) -> Result<()> {
        let names: Vec<&str> = fs.names().collect();
        if self.keys() != names {
            return Err(Error::KeyMismatch {
                detail: format!("record keys {:?} != factor names {:?}", self.keys(), names),
            });
        }
        if let Some(f) = self.fields.iter().find(|f| f.value.text.trim().is_empty()) {
            return Err(Error::invalid("record", format!("field `{}` is empty", f.name)));
        }
        Ok(())
    }

    pub fn transition(&mut self, next: RecordStatus) -> Result<()> {
        if !self.status.can_become(next) {
            return Err(Error::invalid(
                "record",
                format!("status cannot move from {:?} to {next:?}", self.status),
            ));
        }
        self.status = next;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub per_field: Vec<(String, f64)>,
    pub aggregate: f64,
    pub conflicting: Vec<String>,
    pub threshold: f64,
}

impl SimilarityReport {
    pub fn score(&self, name: &str) -> Option<f64> {
        self.per_field.iter().find(|(n, _)| n == name).map(|(_, s)| *s)
    }

    pub fn is_conflicting(&self, name: &str) -> bool {
        self.conflicting.iter().any(|c| c == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoFactors,
    NoReliability,
    SingleLlm,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Full,
        Variant::NoFactors,
        Variant::NoReliability,
        Variant::SingleLlm,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoFactors => "no_factors",
            Variant::NoReliability => "no_reliability",
            Variant::SingleLlm => "single_llm",
        }
    }

    /// Row label in rendered tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Variant::Full => "Urban-MAS",
            Variant::NoFactors => "- PredictiveFactors",
            Variant::NoReliability => "- ReliabilityBoost",
            Variant::SingleLlm => "Single LLM",
        }
    }

    pub fn uses_guided_factors(self) -> bool {
        matches!(self, Variant::Full | Variant::NoReliability)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.label() == s)
            .ok_or_else(|| Error::Usage(format!("unknown variant `{s}` (expected full, no_factors, no_reliability or single_llm)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionOutput {
    pub location_id: String,
    pub task_id: String,
    pub variant: Variant,
    pub value: f64,
    pub clamped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factors(names: &[&str]) -> FactorSet {
        FactorSet {
            task_id: "t".into(),
            dimension: Dimension::Social,
            level: Level::Macro,
            factors: names
                .iter()
                .map(|n| PredictiveFactor::new(*n, format!("How much {n} there is.")))
                .collect(),
        }
    }

    #[test]
    fn six_distinct_factors_accepted() {
        let fs = factors(&["Greenery", "Foot traffic", "Shops", "Lighting", "Noise", "Parks"]);
        assert_eq!(validate_factor_set(&fs), Ok(()));
    }

    #[test]
    fn five_factors_rejected_with_count() {
        let fs = factors(&["Greenery", "Foot traffic", "Shops", "Lighting", "Noise"]);
        let violations = validate_factor_set(&fs).unwrap_err();
        assert_eq!(violations, vec![Violation::Count { found: 5 }]);
        assert_eq!(violations[0].to_string(), "count=5, expected 6");
    }

    #[test]
    fn near_duplicate_names_rejected() {
        let fs = factors(&["Greenery", "greenery ", "Shops", "Lighting", "Noise", "Parks"]);
        let violations = validate_factor_set(&fs).unwrap_err();
        assert_eq!(violations, vec![Violation::DuplicateName { name: "greenery ".into() }]);
    }

    #[test]
    fn multiline_and_empty_names_rejected() {
        let fs = factors(&["Green\nery", "", "Shops", "Lighting", "Noise", "Parks"]);
        let violations = validate_factor_set(&fs).unwrap_err();
        assert!(violations.contains(&Violation::EmptyName { index: 1 }));
        assert!(violations.iter().any(|v| matches!(v, Violation::MultilineName { .. })));
    }

    #[test]
    fn pair_grid_is_four_cells_in_canonical_order() {
        let slugs: Vec<String> = Pair::ALL.iter().map(|p| p.slug()).collect();
        assert_eq!(
            slugs,
            ["social-macro", "social-street", "environment-macro", "environment-street"]
        );
        let product: HashSet<Pair> = Dimension::ALL
            .iter()
            .flat_map(|d| Level::ALL.iter().map(move |l| Pair::new(*d, *l)))
            .collect();
        assert_eq!(product, Pair::ALL.into_iter().collect());
    }

    #[test]
    fn status_transitions_only_leave_raw() {
        use RecordStatus::*;
        for next in [Stable, Refined, LowConfidence] {
            assert!(Raw.can_become(next));
            assert!(!next.can_become(Raw));
            assert!(!Stable.can_become(next));
        }
        assert!(!Raw.can_become(Raw));
    }

    #[test]
    fn sample_validation() {
        assert!(LocationSample::new("a", 91.0, 0.0, "x").is_err());
        assert!(LocationSample::new("a", 0.0, -180.5, "x").is_err());
        let mut s = LocationSample::new("a", 35.0, 139.0, "Tokyo").unwrap();
        s.ground_truth.insert("running_amount".into(), 11.0);
        assert!(s.validate().is_err());
        s.ground_truth.insert("running_amount".into(), 10.0);
        assert!(s.validate().is_ok());
    }

    #[test]
    fn sample_line_format() {
        let line = r#"{"id":"tky-001","lat":35.6586,"lon":139.7454,"city":"Tokyo","ground_truth":{"running_amount":4.5}}"#;
        let s: LocationSample = serde_json::from_str(line).unwrap();
        assert_eq!(s.latitude, 35.6586);
        assert!(s.address.is_none());
        assert_eq!(serde_json::to_string(&s).unwrap(), line);
    }

    #[test]
    fn task_presets_are_valid() {
        for t in TaskSpec::presets() {
            t.validate().unwrap();
            assert_eq!(t.output_range(), (0.0, 10.0));
        }
        assert!(TaskSpec::new("", "x", "y").is_err());
        assert!(TaskSpec::new("a", "x", " ").is_err());
    }
}
