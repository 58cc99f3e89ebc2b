//! The four-variant ablation on the fixture corpus, replayed from the
//! checked-in cassette, rendered as the comparison table.

use std::collections::BTreeMap;
use std::path::PathBuf;

use urbanmas::domain::{load_samples, TaskSpec, Variant};
use urbanmas::evaluation::{render_table, run_experiment, GroundTruth};
use urbanmas::guidance::FactorBook;
use urbanmas::llm::ReplayBackend;
use urbanmas::pipeline::{Pipeline, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let samples = load_samples(&fixtures.join("enriched.jsonl"))?;
    let truth = GroundTruth::load_csv(&fixtures.join("truth.csv"))?;
    let task = TaskSpec::preset("running_amount").expect("preset");
    let factors = BTreeMap::from([(task.id.clone(), FactorBook::load(&fixtures.join("factors"), &task.id)?.factor_map())]);

    let backend = ReplayBackend::open(fixtures.join("cassette.jsonl"))?;
    let pipeline = Pipeline::new(&backend, PipelineConfig::default())?;
    let experiment = run_experiment(&pipeline, &samples, &[task], &Variant::ALL, &truth, true, &factors)?;
    print!("{}", render_table(&experiment.reports));
    for run in &experiment.runs {
        println!("{}: {} backend calls, {} refiner calls", run.variant, run.stats.backend_calls, run.stats.refiner_calls);
    }
    Ok(())
}
