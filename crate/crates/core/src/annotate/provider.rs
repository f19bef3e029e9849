use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;

use super::{AnnotateError, WebDetection};
use crate::phash::{ImageRef, PHash64};

/// Something that can run web detection on an image.
pub trait WebDetectionProvider: Send + Sync {
    fn name(&self) -> &str;

    fn detect(&self, hash: PHash64, image: &ImageRef) -> Result<WebDetection, AnnotateError>;

    /// Number of detections served so far (cache hits excluded).
    fn calls(&self) -> usize;
}

/// Offline provider backed by a JSON object keyed by pHash hex.
#[derive(Debug, Default)]
pub struct FixtureProvider {
    entries: HashMap<PHash64, WebDetection>,
    calls: AtomicUsize,
}

impl FixtureProvider {
    pub fn new(entries: HashMap<PHash64, WebDetection>) -> Self {
        FixtureProvider {
            entries,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self, AnnotateError> {
        let raw: BTreeMap<String, WebDetection> =
            serde_json::from_str(s).map_err(|e| AnnotateError::Fixture(e.to_string()))?;
        let mut entries = HashMap::with_capacity(raw.len());
        for (hex, det) in raw {
            let h = PHash64::from_hex(&hex).map_err(|e| AnnotateError::Fixture(e.to_string()))?;
            det.validate()?;
            entries.insert(h, det);
        }
        Ok(Self::new(entries))
    }

    pub fn from_path(path: &Path) -> Result<Self, AnnotateError> {
        let text = fs::read_to_string(path)
            .map_err(|e| AnnotateError::Fixture(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl WebDetectionProvider for FixtureProvider {
    fn name(&self) -> &str {
        "fixture"
    }

    fn detect(&self, hash: PHash64, _image: &ImageRef) -> Result<WebDetection, AnnotateError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.entries
            .get(&hash)
            .cloned()
            .ok_or(AnnotateError::FixtureMiss(hash))
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

/// Content-addressed store: one `<phash-hex>.json` file per detection.
#[derive(Debug)]
pub struct DetectionCache {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl DetectionCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, AnnotateError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| AnnotateError::Cache {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(DetectionCache {
            dir,
            write_lock: Mutex::new(()),
        })
    }

    pub fn path_for(&self, hash: PHash64) -> PathBuf {
        self.dir.join(format!("{}.json", hash.to_hex()))
    }

    pub fn get(&self, hash: PHash64) -> Result<Option<WebDetection>, AnnotateError> {
        let path = self.path_for(hash);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| AnnotateError::Cache {
                    path: path.display().to_string(),
                    source: e.into(),
                }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(source) => Err(AnnotateError::Cache {
                path: path.display().to_string(),
                source,
            }),
        }
    }

    pub fn put(&self, hash: PHash64, det: &WebDetection) -> Result<(), AnnotateError> {
        let path = self.path_for(hash);
        let err = |source: std::io::Error| AnnotateError::Cache {
            path: path.display().to_string(),
            source,
        };
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(err)?;
        serde_json::to_writer(&mut tmp, det).map_err(|e| err(e.into()))?;
        tmp.flush().map_err(err)?;
        tmp.persist(&path).map_err(|e| err(e.error))?;
        Ok(())
    }
}

/// Detection for one medoid, served from the cache when present.
pub fn detect(
    medoid: &ImageRef,
    hash: PHash64,
    provider: &dyn WebDetectionProvider,
    cache: &DetectionCache,
) -> Result<WebDetection, AnnotateError> {
    if let Some(hit) = cache.get(hash)? {
        return Ok(hit);
    }
    let det = provider.detect(hash, medoid)?;
    det.validate()?;
    cache.put(hash, &det)?;
    Ok(det)
}

/// Run [`detect`] for every `(cluster id, medoid, hash)` on at most `workers` threads.
pub fn detect_all(
    medoids: &[(usize, ImageRef, PHash64)],
    provider: &dyn WebDetectionProvider,
    cache: &DetectionCache,
    workers: usize,
) -> Result<BTreeMap<usize, WebDetection>, AnnotateError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| AnnotateError::Provider {
            provider: provider.name().to_string(),
            message: format!("cannot start worker pool: {e}"),
            attempts: 0,
            status: None,
            retry_after_secs: None,
        })?;
    pool.install(|| {
        medoids
            .par_iter()
            .map(|(id, img, h)| detect(img, *h, provider, cache).map(|d| (*id, d)))
            .collect()
    })
}
