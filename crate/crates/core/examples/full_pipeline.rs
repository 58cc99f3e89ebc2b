//! Factor guidance, extraction, reconciliation and inference for every
//! fixture location, using the synthetic model on a rayon pool.

use std::path::PathBuf;

use urbanmas::domain::{load_samples, TaskSpec, Variant};
use urbanmas::guidance::{guide, GuidanceConfig};
use urbanmas::pipeline::{Pipeline, PipelineConfig};
use urbanmas::synthetic;

fn main() -> urbanmas::Result<()> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let samples = load_samples(&fixtures.join("enriched.jsonl"))?;
    let backend = synthetic::backend();
    let pipeline = Pipeline::new(&backend, PipelineConfig::default())?;

    for task in TaskSpec::presets() {
        let book = pipeline.install(|| guide(&task, &backend, &GuidanceConfig::default()))?;
        let result = pipeline.run(&task, &samples, Variant::Full, Some(&book.factor_map()));
        println!("{}: {:?}", task.id, result.stats);
        for run in &result.runs {
            let p = run.prediction();
            println!("  {:<18} {:>5.2}  {}", p.location_id, p.value, p.rationale.as_deref().unwrap_or(""));
        }
    }
    Ok(())
}
