mod common;

use std::sync::{Arc, Mutex};
use std::time::Duration;

use url::Url;
use urbanmas::geo::{GeoError, GeoIngestor, IngestConfig};
use urbanmas::http::{FnClient, HttpClient, ManualClock, NoNetwork};

// Haversine distances (R = 6 371 000 m) computed independently from the
// Overpass fixtures; POIs beyond 300 m are absent.
const EXPECTED: [(&str, &[(&str, &str, f64)]); 3] = [
    (
        "tokyo-shibakoen",
        &[
            ("Tokyo Tower", "tourism=attraction", 3.505988611687956),
            ("FamilyMart Shibakoen", "shop=convenience", 109.79840083529636),
            ("Zojoji Temple", "amenity=place_of_worship", 234.37043336594752),
            ("Shiba Park", "leisure=park", 245.420470077329),
        ],
    ),
    (
        "milan-duomo",
        &[
            ("Museo del Novecento", "tourism=museum", 87.05761498065783),
            ("Duomo di Milano", "amenity=place_of_worship", 155.25809491745838),
            ("Galleria Vittorio Emanuele II", "shop=mall", 189.19217446934252),
        ],
    ),
    (
        "seattle-cbd",
        &[
            ("Seattle Central Library", "amenity=library", 63.16923556785656),
            ("Pioneer Square Cafe", "amenity=cafe", 80.8142612950535),
        ],
    ),
];

fn config(cache: &std::path::Path, offline: bool) -> IngestConfig {
    IngestConfig {
        cache_dir: cache.to_path_buf(),
        streetview_key: Some("fixture-key".into()),
        offline,
        ..IngestConfig::default()
    }
}

#[test]
fn online_enrichment_matches_reference_distances() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::default());
    let geo = GeoIngestor::new(config(dir.path(), false), common::upstream_client(), clock.clone()).unwrap();
    for (sample, (id, pois)) in common::samples().iter().zip(EXPECTED) {
        assert_eq!(sample.id, id);
        let e = geo.enrich(sample).unwrap();
        assert!(e.warnings.is_empty(), "{:?}", e.warnings);
        let got: Vec<(&str, &str)> = e.sample.pois.iter().map(|p| (p.name.as_str(), p.category.as_str())).collect();
        let want: Vec<(&str, &str)> = pois.iter().map(|(n, c, _)| (*n, *c)).collect();
        assert_eq!(got, want, "{id}");
        for (p, (_, _, d)) in e.sample.pois.iter().zip(pois.iter()) {
            assert!((p.distance_m - d).abs() < 1e-6, "{id}/{}: {} vs {d}", p.name, p.distance_m);
        }
        assert!(e.sample.address.is_some());
    }
    assert_eq!(geo.stats().misses, 9);
    // three geocoder calls at least one second apart
    assert!(clock.sleeps().iter().sum::<Duration>() >= Duration::from_secs(2));
}

#[test]
fn cache_written_online_equals_the_checked_in_cache() {
    let dir = tempfile::tempdir().unwrap();
    let geo = GeoIngestor::new(config(dir.path(), false), common::upstream_client(), Arc::new(ManualClock::default()))
        .unwrap();
    let enriched: Vec<_> = common::samples().iter().map(|s| geo.enrich(s).unwrap().sample).collect();
    assert_eq!(enriched, common::enriched());
    assert_eq!(common::snapshot(dir.path()), common::snapshot(&common::fixtures().join("geo")));
}

#[test]
fn offline_rerun_is_served_entirely_from_cache() {
    let net = Arc::new(NoNetwork::default());
    let geo = GeoIngestor::new(
        config(&common::fixtures().join("geo"), true),
        net.clone(),
        Arc::new(ManualClock::default()),
    )
    .unwrap();
    let enriched: Vec<_> = common::samples().iter().map(|s| geo.enrich(s).unwrap().sample).collect();
    assert_eq!(enriched, common::enriched());
    assert_eq!((geo.stats().hits, geo.stats().misses), (9, 0));
    assert_eq!(geo.stats().hit_rate(), 1.0);
    assert_eq!(net.attempts(), 0);
}

#[test]
fn offline_miss_is_reported_per_service() {
    let dir = tempfile::tempdir().unwrap();
    let net = Arc::new(NoNetwork::default());
    let geo = GeoIngestor::new(config(dir.path(), true), net.clone(), Arc::new(ManualClock::default())).unwrap();
    let sample = &common::samples()[0];
    let err = geo.reverse_geocode(sample.latitude, sample.longitude).unwrap_err();
    assert!(matches!(err, GeoError::OfflineMiss { .. }), "{err}");
    assert!(geo.enrich(sample).is_err());
    assert_eq!(net.attempts(), 0);
}

#[test]
fn requests_carry_the_expected_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let upstream = common::upstream_client();
    let log = seen.clone();
    let http: Arc<dyn HttpClient> = Arc::new(FnClient::new(move |url: &Url| {
        log.lock().unwrap().push(url.clone());
        upstream.get(url, &[])
    }));
    let geo = GeoIngestor::new(config(dir.path(), false), http, Arc::new(ManualClock::default())).unwrap();
    let e = geo.enrich(&common::samples()[0]).unwrap();
    let urls = seen.lock().unwrap();
    assert_eq!(urls.len(), 3);
    let reverse = urls.iter().find(|u| u.path().ends_with("/reverse")).unwrap();
    let q: Vec<(String, String)> = reverse.query_pairs().map(|(k, v)| (k.into(), v.into())).collect();
    assert!(q.contains(&("format".into(), "jsonv2".into())));
    assert!(q.contains(&("lat".into(), "35.658600".into())));
    let overpass = urls.iter().find(|u| u.query_pairs().any(|(k, _)| k == "data")).unwrap();
    let data = overpass.query_pairs().find(|(k, _)| k == "data").unwrap().1.into_owned();
    assert!(data.contains("around:300,35.658600,139.745400"), "{data}");
    // the API key is sent to the metadata endpoint but never stored
    assert!(urls.iter().any(|u| u.query_pairs().any(|(k, v)| k == "key" && v == "fixture-key")));
    assert!(e.sample.streetview_refs.iter().all(|r| !r.contains("fixture-key")));
}
