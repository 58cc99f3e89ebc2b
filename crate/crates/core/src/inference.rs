//! Joint inference over the four reliable records, and the single-model
//! baseline that skips every agent layer.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::domain::{LocationSample, Pair, PredictionOutput, TaskSpec, UrbanInfoRecord, Variant, OUTPUT_RANGE};
use crate::error::{Error, Result};
use crate::extraction::{render_location, Exchange};
use crate::llm::{ChatBackend, ChatRequest, ResponseFormat};
use crate::reply::{json_object, snippet};

pub const INFER_SYSTEM: &str = "You are a multi-source urban inference agent. You receive structured \
information about one location from four agents covering the social and built environmental \
dimensions at macro and street level. Reason over all four jointly and predict the task outcome. \
Reply with a single JSON object.";

pub const SINGLE_SYSTEM: &str = "You are an urban analyst. Given raw information about one location, \
predict the task outcome. Reply with a single JSON object.";

pub const LOW_CONFIDENCE_MARK: &str = "(low confidence)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    /// Re-asks after a reply that fails the schema.
    pub retries: u32,
    /// POIs listed in the single-model prompt.
    pub prompt_poi_limit: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            retries: 3,
            prompt_poi_limit: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inference {
    pub prediction: PredictionOutput,
    pub retries: u32,
    pub exchanges: Vec<Exchange>,
}

fn schema_instruction(task: &TaskSpec) -> String {
    format!(
        "Output key: {key}\nRespond with a JSON object of the form {{\"{key}\": <number from {lo} to {hi}>, \
         \"rationale\": \"<one or two sentences>\"}}.",
        key = task.output_key,
        lo = OUTPUT_RANGE.0,
        hi = OUTPUT_RANGE.1,
    )
}

/// Renders the joint prompt. Records may arrive in any order; sections are
/// always social-macro, social-street, environment-macro, environment-street.
pub fn render_prompt(task: &TaskSpec, records: &[UrbanInfoRecord]) -> Result<String> {
    let mut ordered = Vec::with_capacity(4);
    let mut missing = Vec::new();
    for pair in Pair::ALL {
        let matching: Vec<&UrbanInfoRecord> = records.iter().filter(|r| r.pair() == pair).collect();
        match matching.as_slice() {
            [one] => ordered.push(*one),
            [] => missing.push(pair.slug()),
            _ => return Err(Error::invalid("records", format!("{} records for {pair}", matching.len()))),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingRecords { missing });
    }
    let location = &ordered[0].location_id;
    if let Some(r) = ordered.iter().find(|r| &r.location_id != location || r.task_id != task.id) {
        return Err(Error::invalid(
            "records",
            format!("{} belongs to location `{}` task `{}`", r.pair(), r.location_id, r.task_id),
        ));
    }

    let mut out = format!("Task: {}\nTask description: {}\nLocation: {location}\n", task.id, task.description);
    for r in ordered {
        out.push_str(&format!("\n## {} / {}\n", r.dimension.label(), r.level.label()));
        for f in &r.fields {
            out.push_str(&format!("- {}: {}", f.name, f.value.text));
            if f.value.low_confidence {
                out.push(' ');
                out.push_str(LOW_CONFIDENCE_MARK);
            }
            out.push('\n');
        }
    }
    out.push('\n');
    out.push_str(&schema_instruction(task));
    Ok(out)
}

pub fn single_prompt(task: &TaskSpec, sample: &LocationSample, cfg: &InferenceConfig) -> String {
    let mut out = format!("Task: {}\nTask description: {}\n", task.id, task.description);
    out.push_str(&render_location(sample, cfg.prompt_poi_limit));
    if !sample.streetview_refs.is_empty() {
        out.push_str(&format!("Street-view images attached: {}\n", sample.streetview_refs.len()));
    }
    out.push('\n');
    out.push_str(&schema_instruction(task));
    out
}

/// Reads the numeric output field and an optional rationale. Other keys
/// are ignored.
pub fn parse_prediction(text: &str, key: &str) -> std::result::Result<(f64, Option<String>), String> {
    let map = json_object(text)?;
    let value = match map.get(key) {
        Some(Value::Number(n)) => n.as_f64().ok_or_else(|| format!("`{key}` is not a finite number"))?,
        Some(other) => return Err(format!("`{key}` must be a number, got {}", snippet(&other.to_string()))),
        None => return Err(format!("reply lacks the key `{key}`")),
    };
    let rationale = map.get("rationale").and_then(Value::as_str).map(str::to_string);
    Ok((value, rationale))
}

/// Clamps into the output range, reporting whether it had to.
pub fn clamp_output(value: f64) -> (f64, bool) {
    let clamped = value.clamp(OUTPUT_RANGE.0, OUTPUT_RANGE.1);
    (clamped, clamped != value)
}

fn ask(
    task: &TaskSpec,
    location_id: &str,
    variant: Variant,
    system: &str,
    user: String,
    images: Vec<String>,
    backend: &dyn ChatBackend,
    cfg: &InferenceConfig,
) -> Result<Inference> {
    let mut exchanges = Vec::new();
    let mut last_error = String::new();
    for attempt in 0..=cfg.retries {
        let prompt = if attempt == 0 {
            user.clone()
        } else {
            format!("{user}\n\nYour previous reply could not be used: {last_error}. Reply with only the JSON object.")
        };
        let req = ChatRequest::new(system, prompt.clone(), ResponseFormat::StructuredObject)
            .with_seed(attempt)
            .with_images(images.clone());
        let text = backend.complete(&req)?.text;
        exchanges.push(Exchange {
            step: "infer".into(),
            seed: attempt,
            user_prompt: prompt,
            response: text.clone(),
        });
        match parse_prediction(&text, &task.output_key) {
            Ok((raw, rationale)) => {
                let (value, clamped) = clamp_output(raw);
                if clamped {
                    log::warn!("{location_id}/{}/{variant}: output {raw} clamped to {value}", task.id);
                }
                return Ok(Inference {
                    prediction: PredictionOutput {
                        location_id: location_id.to_string(),
                        task_id: task.id.clone(),
                        variant,
                        value,
                        clamped,
                        rationale,
                    },
                    retries: attempt,
                    exchanges,
                });
            }
            Err(e) => {
                log::warn!("{location_id}/{}/{variant}: unusable reply: {e}", task.id);
                last_error = e;
            }
        }
    }
    Err(Error::SchemaFailure {
        attempts: cfg.retries as usize + 1,
        detail: last_error,
    })
}

pub fn infer(
    task: &TaskSpec,
    records: &[UrbanInfoRecord],
    variant: Variant,
    backend: &dyn ChatBackend,
    cfg: &InferenceConfig,
) -> Result<Inference> {
    let user = render_prompt(task, records)?;
    ask(task, &records[0].location_id, variant, INFER_SYSTEM, user, Vec::new(), backend, cfg)
}

/// One direct prompt from the raw location context; labeled `single_llm`.
pub fn infer_single_llm(task: &TaskSpec, sample: &LocationSample, backend: &dyn ChatBackend, cfg: &InferenceConfig) -> Result<Inference> {
    let user = single_prompt(task, sample, cfg);
    ask(task, &sample.id, Variant::SingleLlm, SINGLE_SYSTEM, user, sample.streetview_refs.clone(), backend, cfg)
}
