//! Reconciles two disagreeing extraction variants: only conflicting fields
//! go to the refiner, for at most the configured number of rounds.

use urbanmas::domain::{Dimension, Field, FieldValue, Level, Provenance, RecordStatus, UrbanInfoRecord};
use urbanmas::reliability::{evaluate, reconcile, ReliabilityConfig};

fn record(texts: &[(&str, &str)], provenance: Provenance) -> UrbanInfoRecord {
    UrbanInfoRecord {
        location_id: "example".into(),
        task_id: "liveliness".into(),
        dimension: Dimension::Social,
        level: Level::Street,
        fields: texts
            .iter()
            .map(|(name, text)| Field {
                name: name.to_string(),
                value: FieldValue::raw(*text, provenance),
            })
            .collect(),
        status: RecordStatus::Raw,
    }
}

fn main() -> urbanmas::Result<()> {
    let cfg = ReliabilityConfig::default();
    let a = record(
        &[
            ("foot_traffic", "heavy foot traffic around the station"),
            ("street_vendors", "several food stalls along the sidewalk"),
            ("night_activity", "bars stay open late"),
        ],
        Provenance::VariantA,
    );
    let b = record(
        &[
            ("foot_traffic", "heavy foot traffic around the station exit"),
            ("street_vendors", "no vendors observed"),
            ("night_activity", "quiet after dark"),
        ],
        Provenance::VariantB,
    );
    let report = evaluate(&a, &b, &cfg)?;
    for (name, score) in &report.per_field {
        println!("{name:<16} {score:.3}");
    }
    println!("conflicting: {:?}", report.conflicting);

    // a refiner that fixes street_vendors at once and never agrees on night_activity
    let outcome = reconcile(
        &a,
        &b,
        &report,
        |req| {
            println!("refine {} (round {})", req.field, req.round);
            Ok(match req.field {
                "street_vendors" => "several food stalls along the sidewalk".into(),
                _ => format!("uncertain, round {}", req.round),
            })
        },
        &cfg,
    )?;
    println!("status: {:?}", outcome.record.status);
    for f in &outcome.record.fields {
        println!(
            "{:<16} {:?} rounds={} low_confidence={}  {:?}",
            f.name, f.value.provenance, f.value.repair_rounds, f.value.low_confidence, f.value.text
        );
    }
    Ok(())
}
