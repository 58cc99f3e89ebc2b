//! Records a run into a cassette, then replays it with a backend that can
//! only answer from the cassette, and checks the predictions agree.

use std::path::PathBuf;
use std::sync::Arc;

use urbanmas::domain::{load_samples, TaskSpec, Variant};
use urbanmas::guidance::FactorBook;
use urbanmas::llm::{Cassette, CountingBackend, RecordingBackend, ReplayBackend};
use urbanmas::pipeline::{Pipeline, PipelineConfig};
use urbanmas::synthetic;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let samples = load_samples(&fixtures.join("enriched.jsonl"))?;
    let task = TaskSpec::preset("running_amount").expect("preset");
    let factors = FactorBook::load(&fixtures.join("factors"), &task.id)?.factor_map();
    let dir = std::env::temp_dir().join(format!("urbanmas-cassette-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("cassette.jsonl");

    let cassette = Arc::new(Cassette::open(&path)?);
    let recorder = RecordingBackend::new(synthetic::backend(), cassette.clone());
    let recorded = Pipeline::new(&recorder, PipelineConfig::default())?.run(&task, &samples, Variant::Full, Some(&factors));
    println!("recorded {} exchanges into {}", cassette.len(), path.display());

    let replay = CountingBackend::new(ReplayBackend::open(&path)?);
    let replayed = Pipeline::new(&replay, PipelineConfig::default())?.run(&task, &samples, Variant::Full, Some(&factors));
    println!("replayed {} calls", replay.calls());
    assert_eq!(recorded.predictions(), replayed.predictions());
    for p in replayed.predictions() {
        println!("  {:<18} {:.2}", p.location_id, p.value);
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
