use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::GeoError;

/// One JSON file per key, laid out as `<dir>/<kind>/<key>.json`.
pub struct GeoCache {
    dir: PathBuf,
    writes: Mutex<()>,
}

/// Coordinates rounded to 5 decimals (about a meter).
pub fn coord_key(lat: f64, lon: f64) -> String {
    format!("{:.5}_{:.5}", round5(lat), round5(lon))
}

fn round5(v: f64) -> f64 {
    let r = (v * 1e5).round() / 1e5;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

impl GeoCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        GeoCache {
            dir: dir.into(),
            writes: Mutex::new(()),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, kind: &str, key: &str, ext: &str) -> PathBuf {
        self.dir.join(kind).join(format!("{key}.{ext}"))
    }

    pub fn get<T: DeserializeOwned>(&self, kind: &str, key: &str) -> Result<Option<T>, GeoError> {
        let path = self.path(kind, key, "json");
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| GeoError::Cache(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(GeoError::Cache(format!("{}: {e}", path.display()))),
        }
    }

    pub fn put<T: Serialize>(&self, kind: &str, key: &str, value: &T) -> Result<(), GeoError> {
        let bytes = serde_json::to_vec_pretty(value).map_err(|e| GeoError::Cache(e.to_string()))?;
        self.put_bytes(&self.path(kind, key, "json"), &bytes)
    }

    /// Writes through a temporary file and rename so readers never see a
    /// partial entry.
    pub fn put_bytes(&self, path: &Path, bytes: &[u8]) -> Result<(), GeoError> {
        let _guard = self.writes.lock().unwrap();
        let parent = path.parent().unwrap_or(&self.dir);
        fs::create_dir_all(parent).map_err(|e| GeoError::Cache(format!("{}: {e}", parent.display())))?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, bytes).map_err(|e| GeoError::Cache(format!("{}: {e}", tmp.display())))?;
        fs::rename(&tmp, path).map_err(|e| GeoError::Cache(format!("{}: {e}", path.display())))
    }
}
