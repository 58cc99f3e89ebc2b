//! Enriches the fixture locations from the checked-in geo cache, offline.
//! Pass `--online` to query Nominatim, Overpass and the street-view
//! metadata endpoint instead, caching into a temporary directory.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use urbanmas::domain::load_samples;
use urbanmas::geo::{GeoIngestor, IngestConfig};
use urbanmas::http::{HttpClient, NoNetwork, ReqwestClient, SystemClock};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let online = std::env::args().any(|a| a == "--online");
    let samples = load_samples(&fixtures.join("samples.jsonl"))?;

    let (cfg, http): (IngestConfig, Arc<dyn HttpClient>) = if online {
        let cfg = IngestConfig {
            cache_dir: std::env::temp_dir().join("urbanmas-geo-example"),
            ..IngestConfig::default()
        }
        .with_env();
        (cfg, Arc::new(ReqwestClient::new(Duration::from_secs(30))?))
    } else {
        let cfg = IngestConfig {
            cache_dir: fixtures.join("geo"),
            offline: true,
            ..IngestConfig::default()
        };
        (cfg, Arc::new(NoNetwork::default()))
    };
    let geo = GeoIngestor::new(cfg, http, Arc::new(SystemClock::default()))?;
    for sample in &samples {
        let e = geo.enrich(sample)?;
        println!("{} {}", e.sample.id, e.sample.address.as_deref().unwrap_or("?"));
        for p in &e.sample.pois {
            println!("  {:>6.1} m  {:<28} {}", p.distance_m, p.name, p.category);
        }
        println!("  street view: {} image(s)", e.sample.streetview_refs.len());
        for w in &e.warnings {
            println!("  warning: {w}");
        }
    }
    let stats = geo.stats();
    println!("cache: {} hits, {} misses ({:.0}% hits)", stats.hits, stats.misses, 100.0 * stats.hit_rate());
    Ok(())
}
