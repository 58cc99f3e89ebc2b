//! Rebuilds everything under `tests/fixtures` that is derived from the
//! hand-written upstream responses and the synthetic model:
//!
//! - `geo/`: the geo cache, filled by ingesting `samples.jsonl` against the
//!   canned Nominatim, Overpass and street-view responses in `upstream/`;
//! - `enriched.jsonl`: the enriched samples;
//! - `factors/`: the factor book for `running_amount`;
//! - `cassette.jsonl`: every chat exchange of the factor stage and of all
//!   four variants over the enriched samples.
//!
//! Run with `cargo run --example regenerate_fixtures`.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use url::Url;
use urbanmas::domain::{load_samples, write_samples, LocationSample, TaskSpec, Variant};
use urbanmas::geo::{GeoIngestor, IngestConfig};
use urbanmas::guidance::{guide, GuidanceConfig};
use urbanmas::http::{FnClient, HttpResponse, ManualClock, TransportError};
use urbanmas::llm::{Cassette, RecordingBackend};
use urbanmas::pipeline::{Pipeline, PipelineConfig};
use urbanmas::synthetic;

fn upstream(dir: &Path, samples: &[LocationSample], url: &Url) -> Result<HttpResponse, TransportError> {
    let query: String = url.query_pairs().map(|(k, v)| format!("{k}={v}&")).collect();
    let sample = samples
        .iter()
        .find(|s| query.contains(&format!("{:.6}", s.latitude)) && query.contains(&format!("{:.6}", s.longitude)))
        .ok_or_else(|| TransportError(format!("no fixture location in {url}")))?;
    let service = if url.path().ends_with("/reverse") {
        "nominatim"
    } else if url.path().ends_with("/metadata") {
        "streetview"
    } else {
        "overpass"
    };
    let path = dir.join(format!("{service}_{}.json", sample.id));
    let body = fs::read(&path).map_err(|e| TransportError(format!("{}: {e}", path.display())))?;
    Ok(HttpResponse { status: 200, body })
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let samples = load_samples(&root.join("samples.jsonl"))?;

    let geo_dir = root.join("geo");
    let _ = fs::remove_dir_all(&geo_dir);
    let upstream_dir = root.join("upstream");
    let fixture_samples = samples.clone();
    let http = Arc::new(FnClient::new(move |url: &Url| upstream(&upstream_dir, &fixture_samples, url)));
    let geo = GeoIngestor::new(
        IngestConfig {
            cache_dir: geo_dir,
            streetview_key: Some("fixture-key".into()),
            ..IngestConfig::default()
        },
        http,
        Arc::new(ManualClock::default()),
    )?;
    let mut enriched = Vec::new();
    for s in &samples {
        let e = geo.enrich(s)?;
        assert!(e.warnings.is_empty(), "{:?}", e.warnings);
        enriched.push(e.sample);
    }
    write_samples(&root.join("enriched.jsonl"), &enriched)?;

    let cassette_path = root.join("cassette.jsonl");
    let _ = fs::remove_file(&cassette_path);
    let backend = RecordingBackend::new(synthetic::backend(), Arc::new(Cassette::open(&cassette_path)?));
    let task = TaskSpec::preset("running_amount").expect("preset");

    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
    let book = pool.install(|| guide(&task, &backend, &GuidanceConfig::default()))?;
    book.save(&root.join("factors"))?;
    let factors = book.factor_map();

    let pipeline = Pipeline::new(&backend, PipelineConfig { workers: 1, ..PipelineConfig::default() })?;
    for variant in Variant::ALL {
        let result = pipeline.run(&task, &enriched, variant, Some(&factors));
        assert!(result.failures.is_empty(), "{:?}", result.failures);
        println!(
            "{variant}: {} backend calls, {} refiner calls",
            result.stats.backend_calls, result.stats.refiner_calls
        );
    }
    println!("cassette: {} entries -> {}", backend.cassette().len(), cassette_path.display());
    Ok(())
}
