#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use url::Url;
use urbanmas::cli::Env;
use urbanmas::config::{BackendMode, RunConfig};
use urbanmas::domain::{load_samples, LocationSample};
use urbanmas::http::{FnClient, HttpClient, HttpResponse, ManualClock, NoNetwork, TransportError};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn samples() -> Vec<LocationSample> {
    load_samples(&fixtures().join("samples.jsonl")).unwrap()
}

pub fn enriched() -> Vec<LocationSample> {
    load_samples(&fixtures().join("enriched.jsonl")).unwrap()
}

/// Serves `upstream/<service>_<id>.json`, picking the sample whose
/// coordinates appear in the decoded query.
pub fn upstream_client() -> Arc<dyn HttpClient> {
    let dir = fixtures().join("upstream");
    let samples = samples();
    Arc::new(FnClient::new(move |url: &Url| -> Result<HttpResponse, TransportError> {
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
        let body = fs::read(dir.join(format!("{service}_{}.json", sample.id))).map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpResponse { status: 200, body })
    }))
}

pub fn offline_env() -> (Env, Arc<NoNetwork>) {
    let net = Arc::new(NoNetwork::default());
    let env = Env {
        http: net.clone(),
        clock: Arc::new(ManualClock::default()),
    };
    (env, net)
}

/// Offline replay configuration over the fixture corpus, writing to `out`.
pub fn replay_config(out: &Path) -> RunConfig {
    let f = fixtures();
    let mut cfg = RunConfig {
        backend: BackendMode::Replay,
        dataset: Some(f.join("samples.jsonl")),
        truth: Some(f.join("truth.csv")),
        cassette: Some(f.join("cassette.jsonl")),
        factor_dir: Some(f.join("factors")),
        offline: true,
        out: out.to_path_buf(),
        ..RunConfig::default()
    };
    cfg.ingest.cache_dir = f.join("geo");
    cfg
}

/// Every regular file under `root`, relative path and contents, sorted.
pub fn snapshot(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}
