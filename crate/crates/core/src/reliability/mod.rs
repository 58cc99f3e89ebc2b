//! Evaluator and Refiner: hybrid soft similarity between two extraction
//! variants, a per-field stability gate, and conflict-only repair.

mod gestalt;
mod text;

pub use gestalt::{matching_characters, seq_ratio};
pub use text::{is_stripped, jaccard, normalize, EXTRA_STRIPPED};

use serde::{Deserialize, Serialize};

use crate::domain::{Field, FieldValue, Provenance, RecordStatus, SimilarityReport, UrbanInfoRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReliabilityConfig {
    pub threshold: f64,
    pub jaccard_weight: f64,
    pub seq_weight: f64,
    pub max_repair_rounds: u32,
}

impl Default for ReliabilityConfig {
    fn default() -> Self {
        ReliabilityConfig {
            threshold: 0.72,
            jaccard_weight: 0.4,
            seq_weight: 0.6,
            max_repair_rounds: 2,
        }
    }
}

impl ReliabilityConfig {
    pub fn validate(&self) -> Result<()> {
        let weights_ok = (0.0..=1.0).contains(&self.jaccard_weight)
            && (0.0..=1.0).contains(&self.seq_weight)
            && (self.jaccard_weight + self.seq_weight - 1.0).abs() <= 1e-12;
        if !weights_ok {
            return Err(Error::Config(format!(
                "similarity weights must be in [0, 1] and sum to 1 (got {} + {})",
                self.jaccard_weight, self.seq_weight
            )));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::Config(format!("threshold {} outside (0, 1]", self.threshold)));
        }
        if self.max_repair_rounds < 1 {
            return Err(Error::Config("max_repair_rounds must be at least 1".into()));
        }
        Ok(())
    }
}

/// Weighted blend of token Jaccard and gestalt ratio over normalized text.
pub fn soft_sim(a: &str, b: &str, cfg: &ReliabilityConfig) -> f64 {
    soft_sim_normalized(&normalize(a), &normalize(b), cfg)
}

/// [`soft_sim`] for inputs that are already normalized.
pub fn soft_sim_normalized(a: &str, b: &str, cfg: &ReliabilityConfig) -> f64 {
    let score = cfg.jaccard_weight * jaccard(a, b) + cfg.seq_weight * seq_ratio(a, b);
    score.clamp(0.0, 1.0)
}

/// Scores every field of variant B against variant A.
pub fn evaluate(
    var_a: &UrbanInfoRecord,
    var_b: &UrbanInfoRecord,
    cfg: &ReliabilityConfig,
) -> Result<SimilarityReport> {
    if (&var_a.location_id, &var_a.task_id, var_a.pair())
        != (&var_b.location_id, &var_b.task_id, var_b.pair())
    {
        return Err(Error::KeyMismatch {
            detail: format!(
                "variants describe different records ({}/{}/{} vs {}/{}/{})",
                var_a.location_id,
                var_a.task_id,
                var_a.pair(),
                var_b.location_id,
                var_b.task_id,
                var_b.pair()
            ),
        });
    }
    if var_a.keys() != var_b.keys() {
        return Err(Error::KeyMismatch {
            detail: format!("{:?} vs {:?}", var_a.keys(), var_b.keys()),
        });
    }
    let per_field: Vec<(String, f64)> = var_a
        .fields
        .iter()
        .zip(&var_b.fields)
        .map(|(fa, fb)| (fa.name.clone(), soft_sim(&fa.value.text, &fb.value.text, cfg)))
        .collect();
    Ok(report_from_scores(per_field, cfg.threshold))
}

pub fn report_from_scores(per_field: Vec<(String, f64)>, threshold: f64) -> SimilarityReport {
    let aggregate = if per_field.is_empty() {
        1.0
    } else {
        per_field.iter().map(|(_, s)| s).sum::<f64>() / per_field.len() as f64
    };
    let conflicting = conflicting_fields(&per_field, threshold);
    SimilarityReport {
        per_field,
        aggregate,
        conflicting,
        threshold,
    }
}

pub fn conflicting_fields(per_field: &[(String, f64)], threshold: f64) -> Vec<String> {
    per_field
        .iter()
        .filter(|(_, s)| *s < threshold)
        .map(|(n, _)| n.clone())
        .collect()
}

/// What the Refiner is asked to regenerate.
#[derive(Debug, Clone, Copy)]
pub struct RefineRequest<'a> {
    pub field: &'a str,
    pub variant_a: &'a str,
    /// Variant B's text in round one, the previous refinement afterwards.
    pub other: &'a str,
    pub round: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairAttempt {
    pub field: String,
    pub round: u32,
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconciliation {
    pub record: UrbanInfoRecord,
    pub repairs: Vec<RepairAttempt>,
}

struct Pending {
    index: usize,
    last: String,
}

/// Accepts variant A when no field conflicts; otherwise regenerates only the
/// conflicting fields, round by round, re-scoring each refinement against
/// variant A. Fields still below the gate after the last round keep their
/// final refinement and mark the record low-confidence.
pub fn reconcile<F>(
    var_a: &UrbanInfoRecord,
    var_b: &UrbanInfoRecord,
    report: &SimilarityReport,
    mut refine: F,
    cfg: &ReliabilityConfig,
) -> Result<Reconciliation>
where
    F: FnMut(&RefineRequest<'_>) -> Result<String>,
{
    if var_a.keys() != var_b.keys() || report.per_field.len() != var_a.fields.len() {
        return Err(Error::KeyMismatch {
            detail: "report does not cover the variants' fields".into(),
        });
    }
    let mut record = var_a.clone();
    record.status = RecordStatus::Raw;
    for field in record.fields.iter_mut() {
        let score = report.score(&field.name).ok_or_else(|| Error::KeyMismatch {
            detail: format!("no score for field `{}`", field.name),
        })?;
        field.value = FieldValue {
            provenance: Provenance::VariantA,
            similarity: Some(score),
            ..FieldValue::raw(field.value.text.clone(), Provenance::VariantA)
        };
    }

    let mut pending: Vec<Pending> = Vec::new();
    for (index, (field, fb)) in record.fields.iter().zip(&var_b.fields).enumerate() {
        if report.is_conflicting(&field.name) {
            pending.push(Pending {
                index,
                last: fb.value.text.clone(),
            });
        }
    }
    if pending.is_empty() {
        record.transition(RecordStatus::Stable)?;
        return Ok(Reconciliation {
            record,
            repairs: Vec::new(),
        });
    }

    let mut repairs = Vec::new();
    for round in 1..=cfg.max_repair_rounds {
        let mut still = Vec::new();
        for mut p in pending {
            let Field { name, value } = &mut record.fields[p.index];
            let request = RefineRequest {
                field: name,
                variant_a: &var_a.fields[p.index].value.text,
                other: &p.last,
                round,
            };
            let text = refine(&request).map_err(|e| Error::RefineFailed {
                field: name.clone(),
                source: Box::new(e),
            })?;
            let score = soft_sim(&text, request.variant_a, cfg);
            repairs.push(RepairAttempt {
                field: name.clone(),
                round,
                text: text.clone(),
                score,
            });
            *value = FieldValue {
                text: text.clone(),
                provenance: Provenance::Refined,
                similarity: Some(score),
                repair_rounds: round,
                low_confidence: false,
            };
            if score < cfg.threshold {
                p.last = text;
                still.push(p);
            }
        }
        pending = still;
        if pending.is_empty() {
            break;
        }
    }

    let status = if pending.is_empty() {
        RecordStatus::Refined
    } else {
        for p in &pending {
            record.fields[p.index].value.low_confidence = true;
        }
        RecordStatus::LowConfidence
    };
    record.transition(status)?;
    Ok(Reconciliation { record, repairs })
}
