//! Turns bare coordinates into the context the agents read: a reverse
//! geocoded address, nearby points of interest, and street-view image
//! references. Every upstream answer is cached on disk; offline mode reads
//! the cache only and never touches the network.

mod cache;
mod haversine;

pub use cache::{coord_key, GeoCache};
pub use haversine::{haversine_m, EARTH_RADIUS_M};

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use url::Url;

use crate::domain::{check_coordinates, LocationSample, PoiEntry};
use crate::http::{Clock, HttpClient, MinInterval};

pub const ENV_STREETVIEW_KEY: &str = "URBANMAS_STREETVIEW_KEY";

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("offline and no cached {service} entry for {key}")]
    OfflineMiss { service: &'static str, key: String },

    #[error("{service} unavailable: {detail}")]
    Upstream { service: &'static str, detail: String },

    #[error("invalid coordinates: {0}")]
    InvalidCoordinates(String),

    #[error("geo cache: {0}")]
    Cache(String),

    #[error("ingest config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub poi_radius_m: f64,
    pub poi_limit: usize,
    pub cache_dir: PathBuf,
    pub offline: bool,
    pub nominatim_url: String,
    pub overpass_url: String,
    pub streetview_url: String,
    #[serde(skip_serializing)]
    pub streetview_key: Option<String>,
    /// Minimum spacing between live geocoder calls.
    pub geocoder_interval_ms: u64,
    /// Download street-view images into the cache and reference local files.
    pub cache_images: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            poi_radius_m: 300.0,
            poi_limit: 25,
            cache_dir: PathBuf::from("cache/geo"),
            offline: false,
            nominatim_url: "https://nominatim.openstreetmap.org".into(),
            overpass_url: "https://overpass-api.de/api/interpreter".into(),
            streetview_url: "https://maps.googleapis.com/maps/api/streetview".into(),
            streetview_key: None,
            geocoder_interval_ms: 1000,
            cache_images: false,
        }
    }
}

impl IngestConfig {
    pub fn with_env(mut self) -> Self {
        if self.streetview_key.is_none() {
            self.streetview_key = std::env::var(ENV_STREETVIEW_KEY).ok().filter(|k| !k.is_empty());
        }
        self
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        if !(self.poi_radius_m > 0.0) {
            return Err(GeoError::Config(format!("poi_radius_m must be positive, got {}", self.poi_radius_m)));
        }
        if self.poi_limit == 0 {
            return Err(GeoError::Config("poi_limit must be positive".into()));
        }
        for (name, url) in [
            ("nominatim_url", &self.nominatim_url),
            ("overpass_url", &self.overpass_url),
            ("streetview_url", &self.streetview_url),
        ] {
            Url::parse(url).map_err(|e| GeoError::Config(format!("{name}: {e}")))?;
        }
        Ok(())
    }
}

/// A POI as stored in the cache, before distance filtering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPoi {
    pub name: String,
    pub category: String,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CachedAddress {
    address: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct CachedPois {
    radius_m: f64,
    elements: Vec<RawPoi>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CachedStreetview {
    status: String,
    #[serde(default)]
    pano_id: Option<String>,
    #[serde(default)]
    image_url: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub hits: usize,
    pub misses: usize,
}

impl CacheStats {
    pub fn hit_rate(&self) -> f64 {
        let total = self.hits + self.misses;
        if total == 0 {
            1.0
        } else {
            self.hits as f64 / total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Enrichment {
    pub sample: LocationSample,
    pub warnings: Vec<String>,
}

/// Keeps POIs within `radius_m`, sorted by distance (ties by name), capped at `limit`.
pub fn select_pois(raw: &[RawPoi], lat: f64, lon: f64, radius_m: f64, limit: usize) -> Vec<PoiEntry> {
    let mut pois: Vec<PoiEntry> = raw
        .iter()
        .map(|p| PoiEntry {
            name: p.name.clone(),
            category: p.category.clone(),
            distance_m: haversine_m(lat, lon, p.lat, p.lon),
        })
        .filter(|p| p.distance_m <= radius_m)
        .collect();
    pois.sort_by(|a, b| {
        a.distance_m
            .total_cmp(&b.distance_m)
            .then_with(|| a.name.cmp(&b.name))
            .then_with(|| a.category.cmp(&b.category))
    });
    pois.truncate(limit);
    pois
}

const CATEGORY_KEYS: [&str; 12] = [
    "amenity",
    "shop",
    "leisure",
    "tourism",
    "office",
    "public_transport",
    "railway",
    "highway",
    "historic",
    "natural",
    "landuse",
    "building",
];

fn parse_overpass(body: &Value) -> Vec<RawPoi> {
    let Some(elements) = body["elements"].as_array() else {
        return Vec::new();
    };
    elements
        .iter()
        .filter_map(|el| {
            let tags = el.get("tags")?;
            let name = tags.get("name")?.as_str()?.trim();
            if name.is_empty() {
                return None;
            }
            let (lat, lon) = match (el["lat"].as_f64(), el["lon"].as_f64()) {
                (Some(lat), Some(lon)) => (lat, lon),
                _ => (el["center"]["lat"].as_f64()?, el["center"]["lon"].as_f64()?),
            };
            let category = CATEGORY_KEYS
                .iter()
                .find_map(|k| tags.get(*k).and_then(Value::as_str).map(|v| format!("{k}={v}")))
                .unwrap_or_else(|| "other".to_string());
            Some(RawPoi {
                name: name.to_string(),
                category,
                lat,
                lon,
            })
        })
        .collect()
}

pub struct GeoIngestor {
    cfg: IngestConfig,
    http: Arc<dyn HttpClient>,
    clock: Arc<dyn Clock>,
    cache: GeoCache,
    geocoder_gate: MinInterval,
    overpass_gate: MinInterval,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl GeoIngestor {
    pub fn new(cfg: IngestConfig, http: Arc<dyn HttpClient>, clock: Arc<dyn Clock>) -> Result<Self, GeoError> {
        cfg.validate()?;
        let interval = Duration::from_millis(cfg.geocoder_interval_ms);
        Ok(GeoIngestor {
            cache: GeoCache::new(&cfg.cache_dir),
            geocoder_gate: MinInterval::new(interval),
            overpass_gate: MinInterval::new(interval),
            cfg,
            http,
            clock,
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &IngestConfig {
        &self.cfg
    }

    pub fn cache(&self) -> &GeoCache {
        &self.cache
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::SeqCst),
            misses: self.misses.load(Ordering::SeqCst),
        }
    }

    fn hit(&self) {
        self.hits.fetch_add(1, Ordering::SeqCst);
    }

    fn miss(&self) {
        self.misses.fetch_add(1, Ordering::SeqCst);
    }

    fn fetch_json(&self, service: &'static str, url: &Url) -> Result<Value, GeoError> {
        let resp = self
            .http
            .get(url, &[("Accept", "application/json".to_string())])
            .map_err(|e| GeoError::Upstream { service, detail: e.to_string() })?;
        if !resp.is_success() {
            return Err(GeoError::Upstream {
                service,
                detail: format!("HTTP {}", resp.status),
            });
        }
        serde_json::from_slice(&resp.body).map_err(|e| GeoError::Upstream {
            service,
            detail: format!("bad JSON: {e}"),
        })
    }

    fn endpoint(&self, base: &str, path: &str, query: &[(&str, String)]) -> Result<Url, GeoError> {
        let joined = if path.is_empty() {
            base.to_string()
        } else {
            format!("{}/{path}", base.trim_end_matches('/'))
        };
        Url::parse_with_params(&joined, query).map_err(|e| GeoError::Config(e.to_string()))
    }

    pub fn reverse_geocode(&self, lat: f64, lon: f64) -> Result<String, GeoError> {
        check_coordinates(lat, lon).map_err(GeoError::InvalidCoordinates)?;
        let key = coord_key(lat, lon);
        if let Some(c) = self.cache.get::<CachedAddress>("geocode", &key)? {
            self.hit();
            return Ok(c.address);
        }
        self.miss();
        if self.cfg.offline {
            return Err(GeoError::OfflineMiss { service: "geocoder", key });
        }
        let url = self.endpoint(
            &self.cfg.nominatim_url,
            "reverse",
            &[
                ("format", "jsonv2".into()),
                ("lat", format!("{lat:.6}")),
                ("lon", format!("{lon:.6}")),
                ("zoom", "18".into()),
            ],
        )?;
        self.geocoder_gate.wait(self.clock.as_ref());
        let body = self.fetch_json("geocoder", &url)?;
        let address = body["display_name"]
            .as_str()
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| GeoError::Upstream {
                service: "geocoder",
                detail: body["error"].as_str().unwrap_or("no display_name in response").to_string(),
            })?
            .to_string();
        self.cache.put("geocode", &key, &CachedAddress { address: address.clone() })?;
        Ok(address)
    }

    pub fn overpass_query(&self, lat: f64, lon: f64) -> String {
        let r = self.cfg.poi_radius_m;
        format!(
            "[out:json][timeout:25];(node(around:{r},{lat:.6},{lon:.6})[name];\
             way(around:{r},{lat:.6},{lon:.6})[name];);out center tags;"
        )
    }

    pub fn nearby_pois(&self, lat: f64, lon: f64) -> Result<Vec<PoiEntry>, GeoError> {
        check_coordinates(lat, lon).map_err(GeoError::InvalidCoordinates)?;
        let key = format!("{}_r{}", coord_key(lat, lon), self.cfg.poi_radius_m);
        let raw = match self.cache.get::<CachedPois>("pois", &key)? {
            Some(c) => {
                self.hit();
                c.elements
            }
            None => {
                self.miss();
                if self.cfg.offline {
                    return Err(GeoError::OfflineMiss { service: "POI service", key });
                }
                let url = self.endpoint(&self.cfg.overpass_url, "", &[("data", self.overpass_query(lat, lon))])?;
                self.overpass_gate.wait(self.clock.as_ref());
                let elements = parse_overpass(&self.fetch_json("POI service", &url)?);
                self.cache.put(
                    "pois",
                    &key,
                    &CachedPois {
                        radius_m: self.cfg.poi_radius_m,
                        elements: elements.clone(),
                    },
                )?;
                elements
            }
        };
        Ok(select_pois(&raw, lat, lon, self.cfg.poi_radius_m, self.cfg.poi_limit))
    }

    pub fn streetview_refs(&self, lat: f64, lon: f64) -> Result<Vec<String>, GeoError> {
        check_coordinates(lat, lon).map_err(GeoError::InvalidCoordinates)?;
        let key = coord_key(lat, lon);
        let image = self.cache.path("streetview", &key, "jpg");
        if image.is_file() {
            self.hit();
            return Ok(vec![image.display().to_string()]);
        }
        if let Some(meta) = self.cache.get::<CachedStreetview>("streetview", &key)? {
            self.hit();
            return Ok(meta.image_url.into_iter().collect());
        }
        self.miss();
        if self.cfg.offline {
            return Err(GeoError::OfflineMiss { service: "street view", key });
        }
        let api_key = self.cfg.streetview_key.clone().ok_or_else(|| GeoError::Upstream {
            service: "street view",
            detail: format!("no API key ({ENV_STREETVIEW_KEY} unset)"),
        })?;
        let url = self.endpoint(
            &self.cfg.streetview_url,
            "metadata",
            &[("location", format!("{lat:.6},{lon:.6}")), ("key", api_key.clone())],
        )?;
        let body = self.fetch_json("street view", &url)?;
        let status = body["status"].as_str().unwrap_or("UNKNOWN").to_string();
        let pano_id = body["pano_id"].as_str().map(str::to_string);
        let meta = match (status.as_str(), pano_id) {
            ("OK", Some(pano)) => {
                let image_url = self.endpoint(
                    &self.cfg.streetview_url,
                    "",
                    &[("size", "640x640".into()), ("pano", pano.clone())],
                )?;
                CachedStreetview {
                    status,
                    pano_id: Some(pano),
                    image_url: Some(image_url.to_string()),
                }
            }
            ("ZERO_RESULTS", _) | ("NOT_FOUND", _) => CachedStreetview {
                status,
                pano_id: None,
                image_url: None,
            },
            (other, _) => {
                return Err(GeoError::Upstream {
                    service: "street view",
                    detail: format!("metadata status {other}"),
                })
            }
        };
        if self.cfg.cache_images {
            if let Some(image_url) = &meta.image_url {
                let mut with_key = Url::parse(image_url).map_err(|e| GeoError::Config(e.to_string()))?;
                with_key.query_pairs_mut().append_pair("key", &api_key);
                let resp = self.http.get(&with_key, &[]).map_err(|e| GeoError::Upstream {
                    service: "street view",
                    detail: e.to_string(),
                })?;
                if resp.is_success() {
                    self.cache.put_bytes(&image, &resp.body)?;
                }
            }
        }
        self.cache.put("streetview", &key, &meta)?;
        if image.is_file() {
            return Ok(vec![image.display().to_string()]);
        }
        Ok(meta.image_url.into_iter().collect())
    }

    /// Fills address, POIs and street-view references. A single failing
    /// upstream yields a warning and leaves that field as it was; the call
    /// fails only when all three do.
    pub fn enrich(&self, sample: &LocationSample) -> Result<Enrichment, GeoError> {
        let (lat, lon) = (sample.latitude, sample.longitude);
        check_coordinates(lat, lon).map_err(GeoError::InvalidCoordinates)?;
        let mut out = sample.clone();
        let mut warnings = Vec::new();
        let mut errors = Vec::new();

        match self.reverse_geocode(lat, lon) {
            Ok(address) => out.address = Some(address),
            Err(e) => {
                warnings.push(format!("{}: address not resolved: {e}", sample.id));
                errors.push(e);
            }
        }
        match self.nearby_pois(lat, lon) {
            Ok(pois) => out.pois = pois,
            Err(e) => {
                warnings.push(format!("{}: POIs not resolved: {e}", sample.id));
                errors.push(e);
            }
        }
        match self.streetview_refs(lat, lon) {
            Ok(refs) => out.streetview_refs = refs,
            Err(e) => {
                warnings.push(format!("{}: street view not resolved: {e}", sample.id));
                errors.push(e);
            }
        }
        if errors.len() == 3 {
            return Err(errors.swap_remove(0));
        }
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(Enrichment { sample: out, warnings })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::{Headers, HttpResponse, ManualClock, NoNetwork, TransportError};
    use std::collections::HashMap;
    use std::sync::Mutex;

    /// Routes by URL path; unknown paths fail like a dead upstream.
    struct Routes {
        bodies: HashMap<&'static str, String>,
        calls: Mutex<Vec<String>>,
        clock: Arc<ManualClock>,
        stamps: Mutex<Vec<Duration>>,
    }

    impl HttpClient for Routes {
        fn get(&self, url: &Url, _: Headers<'_>) -> Result<HttpResponse, TransportError> {
            self.calls.lock().unwrap().push(url.to_string());
            self.stamps.lock().unwrap().push(self.clock.now());
            let route = url.path().rsplit('/').next().unwrap_or("");
            match self.bodies.get(route) {
                Some(body) => Ok(HttpResponse { status: 200, body: body.clone().into_bytes() }),
                None => Err(TransportError(format!("no route for {url}"))),
            }
        }

        fn post_json(&self, _: &Url, _: Headers<'_>, _: &Value) -> Result<HttpResponse, TransportError> {
            unreachable!()
        }
    }

    const NOMINATIM: &str = r#"{"place_id":1,"display_name":"Tokyo Tower, 4-2-8 Shibakoen, Minato, Tokyo, 105-0011, Japan"}"#;
    const OVERPASS: &str = r#"{"elements":[
        {"type":"node","lat":35.6590,"lon":139.7454,"tags":{"name":"Far Cafe","amenity":"cafe"}},
        {"type":"way","center":{"lat":35.6587,"lon":139.7455},"tags":{"name":"Near Park","leisure":"park"}},
        {"type":"node","lat":35.6700,"lon":139.7454,"tags":{"name":"Outside Radius","shop":"books"}},
        {"type":"node","lat":35.6586,"lon":139.7460,"tags":{"amenity":"bench"}}
    ]}"#;

    fn routes(clock: Arc<ManualClock>, with: &[&'static str]) -> Arc<Routes> {
        let mut bodies = HashMap::new();
        for r in with {
            let body = match *r {
                "reverse" => NOMINATIM.to_string(),
                "interpreter" => OVERPASS.to_string(),
                "metadata" => r#"{"status":"OK","pano_id":"PANO1"}"#.to_string(),
                _ => unreachable!(),
            };
            bodies.insert(*r, body);
        }
        Arc::new(Routes {
            bodies,
            calls: Mutex::new(Vec::new()),
            clock,
            stamps: Mutex::new(Vec::new()),
        })
    }

    fn cfg(dir: &std::path::Path) -> IngestConfig {
        IngestConfig {
            cache_dir: dir.to_path_buf(),
            streetview_key: Some("sv-key".into()),
            ..IngestConfig::default()
        }
    }

    #[test]
    fn live_lookups_then_cache_hits() {
        let dir = tempfile::tempdir().unwrap();
        let clock = Arc::new(ManualClock::default());
        let http = routes(clock.clone(), &["reverse", "interpreter", "metadata"]);
        let geo = GeoIngestor::new(cfg(dir.path()), http.clone(), clock).unwrap();
        let sample = LocationSample::new("tky", 35.6586, 139.7454, "Tokyo").unwrap();

        let first = geo.enrich(&sample).unwrap();
        assert!(first.warnings.is_empty());
        assert!(first.sample.address.as_deref().unwrap().contains("Tokyo"));
        let names: Vec<&str> = first.sample.pois.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, ["Near Park", "Far Cafe"]);
        assert_eq!(first.sample.pois[0].category, "leisure=park");
        assert_eq!(first.sample.streetview_refs.len(), 1);
        assert!(first.sample.streetview_refs[0].contains("pano=PANO1"));
        assert!(!first.sample.streetview_refs[0].contains("sv-key"));
        let calls = http.calls.lock().unwrap().len();
        assert_eq!(calls, 3);

        let again = geo.enrich(&first.sample).unwrap();
        assert_eq!(again.sample, first.sample);
        assert_eq!(http.calls.lock().unwrap().len(), calls);
        assert_eq!(geo.stats(), CacheStats { hits: 3, misses: 3 });
    }

    #[test]
    fn offline_uncached_is_a_miss_without_network() {
        let dir = tempfile::tempdir().unwrap();
        let net = Arc::new(NoNetwork::default());
        let geo = GeoIngestor::new(
            IngestConfig { offline: true, ..cfg(dir.path()) },
            net.clone(),
            Arc::new(ManualClock::default()),
        )
        .unwrap();
        assert!(matches!(geo.reverse_geocode(35.0, 139.0), Err(GeoError::OfflineMiss { .. })));
        assert!(matches!(geo.nearby_pois(35.0, 139.0), Err(GeoError::OfflineMiss { .. })));
        assert!(matches!(geo.streetview_refs(35.0, 139.0), Err(GeoError::OfflineMiss { .. })));
        let sample = LocationSample::new("x", 35.0, 139.0, "Tokyo").unwrap();
        assert!(geo.enrich(&sample).is_err());
        assert_eq!(net.attempts(), 0);
    }

    #[test]
    fn offline_serves_cached_image_path() {
        let dir = tempfile::tempdir().unwrap();
        let geo = GeoIngestor::new(
            IngestConfig { offline: true, ..cfg(dir.path()) },
            Arc::new(NoNetwork::default()),
            Arc::new(ManualClock::default()),
        )
        .unwrap();
        let image = geo.cache().path("streetview", &coord_key(45.4642, 9.19), "jpg");
        std::fs::create_dir_all(image.parent().unwrap()).unwrap();
        std::fs::write(&image, b"\xff\xd8\xff").unwrap();
        assert_eq!(geo.streetview_refs(45.4642, 9.19).unwrap(), vec![image.display().to_string()]);
    }

    #[test]
    fn no_coverage_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let clock = Arc::new(ManualClock::default());
        let mut http = routes(clock.clone(), &[]);
        Arc::get_mut(&mut http)
            .unwrap()
            .bodies
            .insert("metadata", r#"{"status":"ZERO_RESULTS"}"#.into());
        let geo = GeoIngestor::new(cfg(dir.path()), http, clock).unwrap();
        assert!(geo.streetview_refs(47.6, -122.3).unwrap().is_empty());
    }

    #[test]
    fn partial_failure_keeps_address_and_warns() {
        let dir = tempfile::tempdir().unwrap();
        let clock = Arc::new(ManualClock::default());
        let http = routes(clock.clone(), &["reverse", "metadata"]);
        let geo = GeoIngestor::new(cfg(dir.path()), http, clock).unwrap();
        let sample = LocationSample::new("tky", 35.6586, 139.7454, "Tokyo").unwrap();
        let out = geo.enrich(&sample).unwrap();
        assert!(out.sample.address.is_some());
        assert!(out.sample.pois.is_empty());
        assert_eq!(out.warnings.len(), 1);
        assert!(out.warnings[0].contains("POIs"));
    }

    #[test]
    fn empty_upstream_result_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let clock = Arc::new(ManualClock::default());
        let mut http = routes(clock.clone(), &[]);
        Arc::get_mut(&mut http).unwrap().bodies.insert("interpreter", r#"{"elements":[]}"#.into());
        let geo = GeoIngestor::new(cfg(dir.path()), http, clock).unwrap();
        assert!(geo.nearby_pois(35.0, 139.0).unwrap().is_empty());
    }

    #[test]
    fn geocoder_calls_are_spaced() {
        let dir = tempfile::tempdir().unwrap();
        let clock = Arc::new(ManualClock::default());
        let http = routes(clock.clone(), &["reverse"]);
        let geo = GeoIngestor::new(cfg(dir.path()), http.clone(), clock).unwrap();
        for i in 0..4 {
            geo.reverse_geocode(35.0 + f64::from(i) * 0.01, 139.0).unwrap();
        }
        let stamps = http.stamps.lock().unwrap().clone();
        for w in stamps.windows(2) {
            assert!(w[1] - w[0] >= Duration::from_secs(1));
        }
    }

    #[test]
    fn select_pois_sorted_bounded_limited() {
        let raw: Vec<RawPoi> = (0..40)
            .map(|i| RawPoi {
                name: format!("p{i:02}"),
                category: "amenity=cafe".into(),
                lat: 35.0 + f64::from(i) * 0.0002,
                lon: 139.0,
            })
            .collect();
        let pois = select_pois(&raw, 35.0, 139.0, 300.0, 25);
        assert!(pois.len() <= 25);
        assert!(pois.iter().all(|p| p.distance_m <= 300.0));
        assert!(pois.windows(2).all(|w| w[0].distance_m <= w[1].distance_m));
        assert_eq!(pois[0].name, "p00");
    }

    #[test]
    fn bad_config_rejected() {
        let net: Arc<dyn HttpClient> = Arc::new(NoNetwork::default());
        let clock: Arc<dyn Clock> = Arc::new(ManualClock::default());
        for bad in [
            IngestConfig { poi_radius_m: 0.0, ..IngestConfig::default() },
            IngestConfig { poi_limit: 0, ..IngestConfig::default() },
        ] {
            assert!(GeoIngestor::new(bad, net.clone(), clock.clone()).is_err());
        }
    }
}
