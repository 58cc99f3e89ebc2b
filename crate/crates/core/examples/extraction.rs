//! Four concurrent extraction agents for one location: two variants each,
//! gated and repaired, printed record by record.

use std::path::PathBuf;

use urbanmas::domain::{load_samples, TaskSpec};
use urbanmas::extraction::{extract_reliable, ExtractionConfig};
use urbanmas::guidance::FactorBook;
use urbanmas::reliability::ReliabilityConfig;
use urbanmas::synthetic;

fn main() -> urbanmas::Result<()> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let sample = load_samples(&fixtures.join("enriched.jsonl"))?.remove(0);
    let task = TaskSpec::preset("running_amount").expect("preset");
    let book = FactorBook::load(&fixtures.join("factors"), &task.id)?;
    let backend = synthetic::backend();

    let pairs = extract_reliable(&sample, &book.factor_map(), &backend, &ExtractionConfig::default(), &ReliabilityConfig::default())?;
    for p in &pairs {
        let sim = p.similarity.as_ref().map_or(1.0, |s| s.aggregate);
        println!("{} {:?} (mean similarity {sim:.3}, {} repairs)", p.pair, p.record.status, p.repairs.len());
        for f in &p.record.fields {
            let score = f.value.similarity.map_or(String::new(), |s| format!("{s:.2}"));
            println!("  {:<24} {score:>5} {:?}", f.name, f.value.text);
        }
    }
    Ok(())
}
