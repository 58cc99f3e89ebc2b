//! Per-location extraction agents, one per (dimension, level) pair.
//!
//! Each agent renders the location context together with its six factors,
//! asks for two independent variants, and hands both to the reliability
//! gate. Only fields the gate flags are sent to the Refiner.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::domain::{
    FactorSet, Field, FieldValue, Level, LocationSample, Pair, PoiEntry, Provenance, RecordStatus,
    SimilarityReport, UrbanInfoRecord,
};
use crate::error::{Error, Result};
use crate::guidance::FactorMap;
use crate::llm::{ChatBackend, ChatRequest, ResponseFormat};
use crate::reliability::{evaluate, reconcile, RefineRequest, ReliabilityConfig, RepairAttempt};
use crate::reply::{cap_chars, json_object};

pub const EXTRACT_SYSTEM: &str = "You are an urban information extraction agent. Extract the \
following factors for this location as a structured object. Reply with a single JSON object whose \
keys are exactly the factor names given and whose values are short factual descriptions.";

pub const REFINE_SYSTEM: &str = "You are a refiner agent. Two extractions of the same factor for \
the same location disagree. Write one corrected description of the factor for this location, \
consistent with the evidence. Reply with the description text only.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionConfig {
    /// POIs listed in a prompt, closest first.
    pub prompt_poi_limit: usize,
    /// Maximum characters kept per extracted value.
    pub value_cap: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            prompt_poi_limit: 10,
            value_cap: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionPrompt {
    pub system: String,
    pub user: String,
    pub image_refs: Vec<String>,
}

impl ExtractionPrompt {
    pub fn request(&self, seed: u32) -> ChatRequest {
        ChatRequest::new(self.system.clone(), self.user.clone(), ResponseFormat::StructuredObject)
            .with_seed(seed)
            .with_images(self.image_refs.clone())
    }
}

/// One backend round trip, kept for the audit trail.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub step: String,
    pub seed: u32,
    pub user_prompt: String,
    pub response: String,
}

/// POIs sorted by distance (ties by name), at most `limit`.
pub fn closest_pois(pois: &[PoiEntry], limit: usize) -> Vec<&PoiEntry> {
    let mut sorted: Vec<&PoiEntry> = pois.iter().collect();
    sorted.sort_by(|a, b| a.distance_m.total_cmp(&b.distance_m).then_with(|| a.name.cmp(&b.name)));
    sorted.truncate(limit);
    sorted
}

/// The location block shared by extraction and single-model prompts.
pub fn render_location(sample: &LocationSample, poi_limit: usize) -> String {
    let mut out = format!(
        "Location: {}\nCity: {}\nCoordinates: {:.5}, {:.5}\nAddress: {}\n",
        sample.id,
        if sample.city.is_empty() { "unknown" } else { &sample.city },
        sample.latitude,
        sample.longitude,
        sample.address.as_deref().unwrap_or("unknown"),
    );
    out.push_str("Nearby points of interest (closest first):\n");
    let pois = closest_pois(&sample.pois, poi_limit);
    if pois.is_empty() {
        out.push_str("- none recorded\n");
    }
    for p in pois {
        out.push_str(&format!("- {} ({}, {:.0} m)\n", p.name, p.category, p.distance_m));
    }
    out
}

pub fn build_prompt(sample: &LocationSample, fs: &FactorSet, cfg: &ExtractionConfig) -> ExtractionPrompt {
    let image_refs = match fs.level {
        Level::Street => sample.streetview_refs.clone(),
        Level::Macro => Vec::new(),
    };
    let mut user = render_location(sample, cfg.prompt_poi_limit);
    if !image_refs.is_empty() {
        user.push_str(&format!("Street-view images attached: {}\n", image_refs.len()));
    }
    user.push_str(&format!(
        "\nTask: {}\nDimension: {}\nLevel: {}\nFactors:\n",
        fs.task_id,
        fs.dimension.label(),
        fs.level.label()
    ));
    for (i, f) in fs.factors.iter().enumerate() {
        user.push_str(&format!("{}. {}: {}\n", i + 1, f.name, f.description));
    }
    user.push_str(&format!(
        "\nReturn a JSON object whose keys are exactly the {} factor names above, each mapped to one \
         short text value of at most {} characters describing that factor at this location.",
        fs.factors.len(),
        cfg.value_cap
    ));
    ExtractionPrompt {
        system: EXTRACT_SYSTEM.to_string(),
        user,
        image_refs,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseIssue {
    Unparseable(String),
    Missing(Vec<String>),
}

impl std::fmt::Display for ParseIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParseIssue::Unparseable(e) => write!(f, "{e}"),
            ParseIssue::Missing(keys) => write!(f, "missing keys: {}", keys.join(", ")),
        }
    }
}

fn value_text(v: &Value) -> Option<String> {
    let text = match v {
        Value::String(s) => s.trim().to_string(),
        Value::Number(n) => n.to_string(),
        Value::Bool(b) => b.to_string(),
        Value::Array(items) => items.iter().filter_map(value_text).collect::<Vec<_>>().join("; "),
        Value::Null | Value::Object(_) => return None,
    };
    (!text.is_empty()).then_some(text)
}

/// Parses a reply into one text per factor, in factor order. Extra keys
/// are ignored; null or empty values count as missing.
pub fn parse_fields(text: &str, fs: &FactorSet, value_cap: usize) -> std::result::Result<Vec<(String, String)>, ParseIssue> {
    let map = json_object(text).map_err(ParseIssue::Unparseable)?;
    let mut fields = Vec::new();
    let mut missing = Vec::new();
    for name in fs.names() {
        let found = map
            .get(name)
            .or_else(|| map.iter().find(|(k, _)| k.trim().eq_ignore_ascii_case(name.trim())).map(|(_, v)| v));
        match found.and_then(value_text) {
            Some(t) => fields.push((name.to_string(), cap_chars(&t, value_cap))),
            None => missing.push(name.to_string()),
        }
    }
    if missing.is_empty() {
        Ok(fields)
    } else {
        Err(ParseIssue::Missing(missing))
    }
}

fn record_from(sample: &LocationSample, fs: &FactorSet, fields: Vec<(String, String)>, provenance: Provenance) -> UrbanInfoRecord {
    UrbanInfoRecord {
        location_id: sample.id.clone(),
        task_id: fs.task_id.clone(),
        dimension: fs.dimension,
        level: fs.level,
        fields: fields
            .into_iter()
            .map(|(name, text)| Field {
                name,
                value: FieldValue::raw(text, provenance),
            })
            .collect(),
        status: RecordStatus::Raw,
    }
}

/// One variant: a call, and at most one re-ask naming what was wrong.
fn extract_one(
    sample: &LocationSample,
    fs: &FactorSet,
    prompt: &ExtractionPrompt,
    seed: u32,
    provenance: Provenance,
    backend: &dyn ChatBackend,
    cfg: &ExtractionConfig,
    log: &mut Vec<Exchange>,
) -> Result<(UrbanInfoRecord, bool)> {
    let tag = if seed == 0 { "a" } else { "b" };
    let mut req = prompt.request(seed);
    let mut issue = None;
    for reask in [false, true] {
        if let Some(issue) = &issue {
            req.user_prompt = format!(
                "{}\n\nYour previous reply could not be used ({issue}). Return the complete JSON object \
                 with every factor name as a key.",
                prompt.user
            );
        }
        let text = backend.complete(&req)?.text;
        log.push(Exchange {
            step: format!("{}extract_{tag}", if reask { "reask_" } else { "" }),
            seed,
            user_prompt: req.user_prompt.clone(),
            response: text.clone(),
        });
        match parse_fields(&text, fs, cfg.value_cap) {
            Ok(fields) => return Ok((record_from(sample, fs, fields, provenance), reask)),
            Err(e) => issue = Some(e),
        }
    }
    Err(Error::ParseFailure {
        pair: fs.pair(),
        detail: format!("variant {tag}: {}", issue.expect("set on failure")),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantPair {
    pub a: UrbanInfoRecord,
    pub b: UrbanInfoRecord,
    pub reasks: u32,
    pub exchanges: Vec<Exchange>,
}

/// Requests variants with seeds 0 and 1, both parsed into raw records.
pub fn extract_variants(sample: &LocationSample, fs: &FactorSet, backend: &dyn ChatBackend, cfg: &ExtractionConfig) -> Result<VariantPair> {
    let prompt = build_prompt(sample, fs, cfg);
    let mut exchanges = Vec::new();
    let (a, ra) = extract_one(sample, fs, &prompt, 0, Provenance::VariantA, backend, cfg, &mut exchanges)?;
    let (b, rb) = extract_one(sample, fs, &prompt, 1, Provenance::VariantB, backend, cfg, &mut exchanges)?;
    Ok(VariantPair {
        a,
        b,
        reasks: u32::from(ra) + u32::from(rb),
        exchanges,
    })
}

pub fn refine_prompt(sample: &LocationSample, fs: &FactorSet, req: &RefineRequest<'_>) -> String {
    let description = fs
        .factors
        .iter()
        .find(|f| f.name == req.field)
        .map(|f| f.description.as_str())
        .unwrap_or("");
    format!(
        "Location: {}\nAddress: {}\nDimension: {}\nLevel: {}\nFactor: {}\nDefinition: {}\nRound: {}\n\
         Variant A: {}\nVariant B: {}\n\nWrite the corrected description of this factor for this location.",
        sample.id,
        sample.address.as_deref().unwrap_or("unknown"),
        fs.dimension.label(),
        fs.level.label(),
        req.field,
        description,
        req.round,
        req.variant_a,
        req.other,
    )
}

/// Everything one extraction agent did for one location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairExtraction {
    pub pair: Pair,
    pub prompt: ExtractionPrompt,
    pub variant_a: UrbanInfoRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant_b: Option<UrbanInfoRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<SimilarityReport>,
    pub repairs: Vec<RepairAttempt>,
    pub reasks: u32,
    pub exchanges: Vec<Exchange>,
    pub record: UrbanInfoRecord,
}

impl PairExtraction {
    pub fn backend_calls(&self) -> usize {
        self.exchanges.len()
    }
}

fn reliable_pair(
    sample: &LocationSample,
    fs: &FactorSet,
    backend: &dyn ChatBackend,
    cfg: &ExtractionConfig,
    rcfg: &ReliabilityConfig,
) -> Result<PairExtraction> {
    let VariantPair { a, b, reasks, mut exchanges } = extract_variants(sample, fs, backend, cfg)?;
    let report = evaluate(&a, &b, rcfg)?;
    let mut refine_log = Vec::new();
    let rec = reconcile(
        &a,
        &b,
        &report,
        |req| {
            let user = refine_prompt(sample, fs, req);
            let chat = ChatRequest::new(REFINE_SYSTEM, user.clone(), ResponseFormat::FreeText).with_seed(req.round);
            let text = backend.complete(&chat)?.text;
            refine_log.push(Exchange {
                step: format!("refine:{}", req.field),
                seed: req.round,
                user_prompt: user,
                response: text.clone(),
            });
            let text = cap_chars(text.trim().trim_matches('"').trim(), cfg.value_cap);
            if text.is_empty() {
                return Err(Error::ParseFailure {
                    pair: fs.pair(),
                    detail: format!("refiner returned nothing for `{}`", req.field),
                });
            }
            Ok(text)
        },
        rcfg,
    )?;
    exchanges.extend(refine_log);
    Ok(PairExtraction {
        pair: fs.pair(),
        prompt: build_prompt(sample, fs, cfg),
        variant_a: a,
        variant_b: Some(b),
        similarity: Some(report),
        repairs: rec.repairs,
        reasks,
        exchanges,
        record: rec.record,
    })
}

fn single_pair(sample: &LocationSample, fs: &FactorSet, backend: &dyn ChatBackend, cfg: &ExtractionConfig) -> Result<PairExtraction> {
    let prompt = build_prompt(sample, fs, cfg);
    let mut exchanges = Vec::new();
    let (a, reasked) = extract_one(sample, fs, &prompt, 0, Provenance::VariantA, backend, cfg, &mut exchanges)?;
    Ok(PairExtraction {
        pair: fs.pair(),
        prompt,
        variant_a: a.clone(),
        variant_b: None,
        similarity: None,
        repairs: Vec::new(),
        reasks: u32::from(reasked),
        exchanges,
        record: a,
    })
}

fn factor_sets(factors: &FactorMap) -> Result<Vec<&FactorSet>> {
    let missing: Vec<String> = Pair::ALL
        .iter()
        .filter(|p| !factors.contains_key(p))
        .map(|p| p.slug())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingRecords { missing });
    }
    Ok(Pair::ALL.iter().map(|p| &factors[p]).collect())
}

/// Runs the four agents concurrently on the current rayon pool; results are
/// in canonical pair order and every record is stable, refined or
/// low-confidence.
pub fn extract_reliable(
    sample: &LocationSample,
    factors: &FactorMap,
    backend: &dyn ChatBackend,
    cfg: &ExtractionConfig,
    rcfg: &ReliabilityConfig,
) -> Result<Vec<PairExtraction>> {
    factor_sets(factors)?
        .into_par_iter()
        .map(|fs| reliable_pair(sample, fs, backend, cfg, rcfg).map_err(|e| e.at(fs.pair())))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Single-variant extraction with unconditional acceptance: one call per
/// pair, records left raw.
pub fn extract_single_variant(
    sample: &LocationSample,
    factors: &FactorMap,
    backend: &dyn ChatBackend,
    cfg: &ExtractionConfig,
) -> Result<Vec<PairExtraction>> {
    factor_sets(factors)?
        .into_par_iter()
        .map(|fs| single_pair(sample, fs, backend, cfg).map_err(|e| e.at(fs.pair())))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}
