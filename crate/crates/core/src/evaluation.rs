//! Ground truth, error metrics, the ablation runner, and report rendering.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{LocationSample, PredictionOutput, TaskSpec, Variant};
use crate::error::{Error, Result};
use crate::guidance::FactorMap;
use crate::pipeline::{Pipeline, RunResult};

/// Min-max rescale onto [0, 10]. All-equal input maps to 5.0.
pub fn rescale(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyInput("rescale"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("rescale"));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return Ok(vec![5.0; values.len()]);
    }
    // dividing first keeps the maximum at exactly 10
    Ok(values.iter().map(|v| (v - min) / (max - min) * 10.0).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub n: usize,
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
}

/// MAE, MSE and RMSE of paired values.
pub fn error_metrics(predicted: &[f64], truth: &[f64]) -> Result<ErrorMetrics> {
    if predicted.len() != truth.len() {
        return Err(Error::invalid(
            "metrics input",
            format!("{} predictions vs {} truths", predicted.len(), truth.len()),
        ));
    }
    if predicted.is_empty() {
        return Err(Error::EmptyInput("metrics"));
    }
    if predicted.iter().chain(truth).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("metrics"));
    }
    let n = predicted.len();
    let (abs, sq) = predicted
        .iter()
        .zip(truth)
        .fold((0.0, 0.0), |(a, s), (p, t)| (a + (p - t).abs(), s + (p - t) * (p - t)));
    let mse = sq / n as f64;
    Ok(ErrorMetrics {
        n,
        mae: abs / n as f64,
        mse,
        rmse: mse.sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task_id: String,
    pub variant: Variant,
    pub n: usize,
    /// Locations dropped because their pipeline failed.
    #[serde(default)]
    pub excluded: usize,
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
}

/// Aligns predictions with truth by location id; every prediction needs a
/// truth and every truth a prediction.
pub fn metrics(predictions: &[PredictionOutput], truth: &BTreeMap<String, f64>) -> Result<EvalReport> {
    let first = predictions.first().ok_or(Error::EmptyInput("predictions"))?;
    if let Some(p) = predictions
        .iter()
        .find(|p| p.task_id != first.task_id || p.variant != first.variant)
    {
        return Err(Error::invalid(
            "predictions",
            format!("mixed task/variant: {}/{} and {}/{}", first.task_id, first.variant, p.task_id, p.variant),
        ));
    }
    let mut seen = BTreeSet::new();
    for p in predictions {
        if !seen.insert(p.location_id.as_str()) {
            return Err(Error::invalid("predictions", format!("duplicate location `{}`", p.location_id)));
        }
    }
    let no_truth: Vec<String> = predictions
        .iter()
        .filter(|p| !truth.contains_key(&p.location_id))
        .map(|p| p.location_id.clone())
        .collect();
    let no_prediction: Vec<String> = truth.keys().filter(|k| !seen.contains(k.as_str())).cloned().collect();
    if !no_truth.is_empty() || !no_prediction.is_empty() {
        return Err(Error::Alignment { no_truth, no_prediction });
    }
    let p: Vec<f64> = predictions.iter().map(|p| p.value).collect();
    let t: Vec<f64> = predictions.iter().map(|p| truth[&p.location_id]).collect();
    let m = error_metrics(&p, &t)?;
    Ok(EvalReport {
        task_id: first.task_id.clone(),
        variant: first.variant,
        n: m.n,
        excluded: 0,
        mae: m.mae,
        mse: m.mse,
        rmse: m.rmse,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub location_id: String,
    pub task_id: String,
    pub raw_value: f64,
}

/// Ground truth keyed by task, then location.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    by_task: BTreeMap<String, BTreeMap<String, f64>>,
}

impl GroundTruth {
    pub fn from_rows(rows: impl IntoIterator<Item = TruthRow>) -> Result<Self> {
        let mut gt = GroundTruth::default();
        for r in rows {
            if !r.raw_value.is_finite() {
                return Err(Error::NonFinite("ground truth"));
            }
            if gt
                .by_task
                .entry(r.task_id.clone())
                .or_default()
                .insert(r.location_id.clone(), r.raw_value)
                .is_some()
            {
                return Err(Error::invalid(
                    "ground truth",
                    format!("duplicate row for `{}` / `{}`", r.location_id, r.task_id),
                ));
            }
        }
        Ok(gt)
    }

    /// Reads a delimited table with header `location_id,task_id,raw_value`.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::invalid("ground truth", format!("{}: {e}", path.display())))?;
        let rows = reader
            .deserialize::<TruthRow>()
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::invalid("ground truth", format!("{}: {e}", path.display())))?;
        Self::from_rows(rows)
    }

    /// Truth values already on [0, 10] stored with the samples.
    pub fn from_samples(samples: &[LocationSample]) -> Result<Self> {
        Self::from_rows(samples.iter().flat_map(|s| {
            s.ground_truth.iter().map(|(task, v)| TruthRow {
                location_id: s.id.clone(),
                task_id: task.clone(),
                raw_value: *v,
            })
        }))
    }

    pub fn tasks(&self) -> impl Iterator<Item = &str> {
        self.by_task.keys().map(String::as_str)
    }

    /// Raw values of a task, optionally min-max rescaled onto [0, 10].
    pub fn for_task(&self, task_id: &str, rescaled: bool) -> Result<BTreeMap<String, f64>> {
        let raw = self
            .by_task
            .get(task_id)
            .ok_or_else(|| Error::invalid("ground truth", format!("no rows for task `{task_id}`")))?;
        if !rescaled {
            return Ok(raw.clone());
        }
        let values: Vec<f64> = raw.values().copied().collect();
        Ok(raw.keys().cloned().zip(rescale(&values)?).collect())
    }
}

/// Percentage change of `value` relative to `base`.
pub fn relative_change(base: f64, value: f64) -> Option<f64> {
    if base == 0.0 {
        return (value == 0.0).then_some(0.0);
    }
    Some((value - base) / base * 100.0)
}

/// `↑1.46%`, `↓0.50%`, or `0.00%` when the change rounds to zero.
pub fn format_change(pct: Option<f64>) -> String {
    match pct {
        None => "n/a".into(),
        Some(p) => {
            let text = format!("{:.2}%", p.abs());
            if text == "0.00%" {
                text
            } else if p > 0.0 {
                format!("↑{text}")
            } else {
                format!("↓{text}")
            }
        }
    }
}

/// `+1.46%`, `-0.50%`, or `0.00%`, for delimited output.
pub fn format_change_signed(pct: Option<f64>) -> String {
    match pct {
        None => "n/a".into(),
        Some(p) => {
            let text = format!("{:.2}%", p.abs());
            if text == "0.00%" {
                text
            } else if p > 0.0 {
                format!("+{text}")
            } else {
                format!("-{text}")
            }
        }
    }
}

fn baseline<'a>(reports: &'a [EvalReport], task_id: &str) -> Option<&'a EvalReport> {
    reports.iter().find(|r| r.task_id == task_id && r.variant == Variant::Full)
}

/// Rows per task, full variant first, then the others in `Variant::ALL`
/// order. Non-baseline rows carry their change relative to the full variant.
fn ordered(reports: &[EvalReport]) -> Vec<&EvalReport> {
    let mut out: Vec<&EvalReport> = reports.iter().collect();
    let task_order: Vec<&str> = reports.iter().fold(Vec::new(), |mut acc, r| {
        if !acc.contains(&r.task_id.as_str()) {
            acc.push(&r.task_id);
        }
        acc
    });
    out.sort_by_key(|r| (task_order.iter().position(|t| *t == r.task_id), r.variant));
    out
}

pub fn render_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("task_id,variant,n,excluded,mae,mse,rmse,mae_change,mse_change,rmse_change\n");
    for r in ordered(reports) {
        let changes = match baseline(reports, &r.task_id) {
            Some(b) if r.variant != Variant::Full => [
                format_change_signed(relative_change(b.mae, r.mae)),
                format_change_signed(relative_change(b.mse, r.mse)),
                format_change_signed(relative_change(b.rmse, r.rmse)),
            ],
            _ => Default::default(),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},{:.6},{},{},{}",
            r.task_id, r.variant, r.n, r.excluded, r.mae, r.mse, r.rmse, changes[0], changes[1], changes[2]
        );
    }
    out
}

/// Aligned text table, one block per task: metrics to two decimals and,
/// for ablation rows, the change against the full variant in parentheses.
pub fn render_table(reports: &[EvalReport]) -> String {
    let rows = ordered(reports);
    let mut blocks: Vec<(String, Vec<[String; 4]>)> = Vec::new();
    for r in rows {
        let cell = |metric: fn(&EvalReport) -> f64| match baseline(reports, &r.task_id) {
            Some(b) if r.variant != Variant::Full => {
                format!("{:.2} ({})", metric(r), format_change(relative_change(metric(b), metric(r))))
            }
            _ => format!("{:.2}", metric(r)),
        };
        let row = [
            r.variant.display_name().to_string(),
            cell(|r| r.mae),
            cell(|r| r.mse),
            cell(|r| r.rmse),
        ];
        match blocks.last_mut() {
            Some((task, rows)) if *task == r.task_id => rows.push(row),
            _ => blocks.push((r.task_id.clone(), vec![row])),
        }
    }
    let header = ["Variant".to_string(), "MAE".into(), "MSE".into(), "RMSE".into()];
    let mut out = String::new();
    for (i, (task, rows)) in blocks.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let mut width = [0usize; 4];
        for row in std::iter::once(&header).chain(rows) {
            for (w, c) in width.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let _ = writeln!(out, "{task}");
        for row in std::iter::once(&header).chain(rows) {
            let line: Vec<String> = row
                .iter()
                .zip(width)
                .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub reports: Vec<EvalReport>,
    pub runs: Vec<RunResult>,
}

/// One report per (task, variant). Failed locations are excluded from the
/// metrics and counted in `excluded`.
pub fn run_experiment(
    pipeline: &Pipeline<'_>,
    samples: &[LocationSample],
    tasks: &[TaskSpec],
    variants: &[Variant],
    truth: &GroundTruth,
    rescale_truth: bool,
    factors: &BTreeMap<String, FactorMap>,
) -> Result<Experiment> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("dataset"));
    }
    let mut reports = Vec::new();
    let mut runs = Vec::new();
    for task in tasks {
        let task_truth = truth.for_task(&task.id, rescale_truth)?;
        let missing: Vec<String> = samples
            .iter()
            .filter(|s| !task_truth.contains_key(&s.id))
            .map(|s| s.id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Alignment {
                no_truth: missing,
                no_prediction: Vec::new(),
            });
        }
        for &variant in variants {
            let map = factors.get(&task.id);
            if variant.uses_guided_factors() && map.is_none() {
                return Err(Error::Config(format!("no guided factors for task `{}`", task.id)));
            }
            let result = pipeline.run(task, samples, variant, map);
            let predictions = result.predictions();
            if predictions.is_empty() {
                return Err(Error::invalid(
                    "experiment",
                    format!("every location failed for {}/{variant}", task.id),
                ));
            }
            let scored: BTreeMap<String, f64> = predictions
                .iter()
                .map(|p| (p.location_id.clone(), task_truth[&p.location_id]))
                .collect();
            let mut report = metrics(&predictions, &scored)?;
            report.excluded = result.failures.len();
            reports.push(report);
            runs.push(result);
        }
    }
    Ok(Experiment { reports, runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pred(id: &str, value: f64) -> PredictionOutput {
        PredictionOutput {
            location_id: id.into(),
            task_id: "t".into(),
            variant: Variant::Full,
            value,
            clamped: false,
            rationale: None,
        }
    }

    #[test]
    fn rescale_examples() {
        assert_eq!(rescale(&[0.0, 255.0]).unwrap(), [0.0, 10.0]);
        assert_eq!(rescale(&[5.0, 5.0, 5.0]).unwrap(), [5.0, 5.0, 5.0]);
        assert_eq!(rescale(&[2.0, 4.0, 6.0]).unwrap(), [0.0, 5.0, 10.0]);
        assert!(matches!(rescale(&[]), Err(Error::EmptyInput(_))));
        assert!(matches!(rescale(&[1.0, f64::NAN]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn hand_computed_metrics() {
        let m = error_metrics(&[2.0, 4.0], &[1.0, 2.0]).unwrap();
        assert_eq!((m.mae, m.mse), (1.5, 2.5));
        assert!((m.rmse - 2.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn alignment_names_ids() {
        let truth: BTreeMap<String, f64> = [("a".to_string(), 1.0), ("c".to_string(), 2.0)].into();
        match metrics(&[pred("a", 1.0), pred("b", 1.0)], &truth).unwrap_err() {
            Error::Alignment { no_truth, no_prediction } => {
                assert_eq!(no_truth, ["b"]);
                assert_eq!(no_prediction, ["c"]);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn change_formatting() {
        assert_eq!(format_change(relative_change(13.197, 13.3897)), "↑1.46%");
        assert_eq!(format_change(relative_change(13.20, 13.39)), "↑1.44%");
        assert_eq!(format_change(relative_change(2.0, 1.99)), "↓0.50%");
        assert_eq!(format_change(relative_change(0.0, 0.0)), "0.00%");
        assert_eq!(format_change(relative_change(3.0, 3.0)), "0.00%");
        assert_eq!(format_change(relative_change(0.0, 1.0)), "n/a");
        assert_eq!(format_change_signed(relative_change(13.197, 13.3897)), "+1.46%");
    }

    #[test]
    fn table_layout() {
        let report = |variant, mse: f64| EvalReport {
            task_id: "running_amount".into(),
            variant,
            n: 3,
            excluded: 0,
            mae: 1.0,
            mse,
            rmse: mse.sqrt(),
        };
        let reports = [report(Variant::NoReliability, 13.3897), report(Variant::Full, 13.197)];
        let table = render_table(&reports);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[0], "running_amount");
        assert!(lines[2].starts_with("Urban-MAS"));
        assert!(lines[3].starts_with("- ReliabilityBoost"));
        assert!(lines[3].contains("13.39 (↑1.46%)"));
        assert!(lines[3].contains("1.00 (0.00%)"));
        let csv = render_csv(&reports);
        assert!(csv.lines().nth(2).unwrap().starts_with("running_amount,no_reliability,3,0,"));
        assert!(csv.contains(",+1.46%,"));
    }

    #[test]
    fn truth_csv_and_rescale() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "location_id,task_id,raw_value\na,run,0\nb,run,255\nc,run,51\n").unwrap();
        let gt = GroundTruth::load_csv(&path).unwrap();
        let scaled = gt.for_task("run", true).unwrap();
        assert_eq!(scaled["a"], 0.0);
        assert_eq!(scaled["b"], 10.0);
        assert!((scaled["c"] - 2.0).abs() < 1e-12);
        assert!(gt.for_task("other", true).is_err());
        std::fs::write(&path, "location_id,task_id,raw_value\na,run,1\na,run,2\n").unwrap();
        assert!(GroundTruth::load_csv(&path).is_err());
    }

    proptest! {
        #[test]
        fn metric_invariants(pairs in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 1..50)) {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
            let m = error_metrics(&p, &t).unwrap();
            prop_assert!(m.mae >= 0.0 && m.mse >= 0.0);
            prop_assert!((m.rmse * m.rmse - m.mse).abs() <= 1e-12 * m.mse.max(1.0));
            prop_assert!(m.mae <= m.rmse + 1e-12);
            let mut rev_p = p.clone();
            let mut rev_t = t.clone();
            rev_p.reverse();
            rev_t.reverse();
            let r = error_metrics(&rev_p, &rev_t).unwrap();
            prop_assert!((r.mae - m.mae).abs() < 1e-9 && (r.mse - m.mse).abs() < 1e-9);
        }

        #[test]
        fn rescale_bounds(values in proptest::collection::vec(-1e6f64..1e6, 1..40)) {
            let out = rescale(&values).unwrap();
            prop_assert!(out.iter().all(|v| (0.0..=10.0).contains(v)));
        }
    }
}
