//! Remote web-detection provider speaking the Cloud Vision `images:annotate`
//! REST schema (`WEB_DETECTION` feature). See `docs/live-provider.md`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use base64::Engine;
use serde_json::{json, Value};

use super::{AnnotateError, WebDetection, WebDetectionProvider};
use crate::phash::{ImageRef, PHash64};

pub const DEFAULT_ENDPOINT: &str = "https://vision.googleapis.com/v1/images:annotate";
pub const API_KEY_ENV: &str = "IMGSPREAD_VISION_API_KEY";

#[derive(Clone, Debug)]
pub struct LiveConfig {
    pub endpoint: String,
    pub api_key: String,
    pub max_attempts: u32,
    /// Minimum spacing between request starts, across all workers.
    pub min_interval: Duration,
    pub backoff_base: Duration,
    pub timeout: Duration,
    pub max_results: u32,
}

impl LiveConfig {
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>) -> Self {
        LiveConfig {
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            max_attempts: 4,
            min_interval: Duration::from_millis(100),
            backoff_base: Duration::from_millis(500),
            timeout: Duration::from_secs(60),
            max_results: 50,
        }
    }

    /// Reads the key from `IMGSPREAD_VISION_API_KEY`.
    pub fn from_env(endpoint: impl Into<String>) -> Result<Self, AnnotateError> {
        let key = std::env::var(API_KEY_ENV)
            .map_err(|_| AnnotateError::Credentials(format!("{API_KEY_ENV} is not set")))?;
        Ok(Self::new(endpoint, key))
    }
}

pub struct LiveProvider {
    config: LiveConfig,
    agent: ureq::Agent,
    last_request: Mutex<Option<Instant>>,
    calls: AtomicUsize,
}

enum Attempt {
    Done(WebDetection),
    Retry { status: Option<u16>, message: String, retry_after: Option<u64> },
    Fatal { status: Option<u16>, message: String },
}

impl LiveProvider {
    pub fn new(config: LiveConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        LiveProvider {
            config,
            agent,
            last_request: Mutex::new(None),
            calls: AtomicUsize::new(0),
        }
    }

    fn throttle(&self) {
        let mut last = self.last_request.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(prev) = *last {
            let next = prev + self.config.min_interval;
            let now = Instant::now();
            if next > now {
                std::thread::sleep(next - now);
            }
        }
        *last = Some(Instant::now());
    }

    fn attempt(&self, body: &Value) -> Attempt {
        self.throttle();
        let url = format!("{}?key={}", self.config.endpoint, self.config.api_key);
        let mut resp = match self.agent.post(&url).send_json(body) {
            Ok(r) => r,
            Err(e) => {
                return Attempt::Retry {
                    status: None,
                    message: e.to_string(),
                    retry_after: None,
                }
            }
        };
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok());
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        match status {
            200..=299 => match serde_json::from_str::<Value>(&text)
                .map_err(|e| e.to_string())
                .and_then(|v| parse_vision_response(&v))
            {
                Ok(det) => Attempt::Done(det),
                Err(message) => Attempt::Fatal { status: Some(status), message },
            },
            408 | 429 | 500..=599 => Attempt::Retry {
                status: Some(status),
                message: truncate(&text),
                retry_after,
            },
            _ => Attempt::Fatal {
                status: Some(status),
                message: truncate(&text),
            },
        }
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(300).collect()
}

impl WebDetectionProvider for LiveProvider {
    fn name(&self) -> &str {
        "live"
    }

    fn detect(&self, hash: PHash64, image: &ImageRef) -> Result<WebDetection, AnnotateError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let bytes = image.read_bytes().map_err(|e| AnnotateError::Provider {
            provider: "live".into(),
            message: format!("cannot read medoid {}: {e}", image.id),
            attempts: 0,
            status: None,
            retry_after_secs: None,
        })?;
        let body = request_body(&bytes, self.config.max_results);
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body) {
                Attempt::Done(det) => return Ok(det),
                Attempt::Fatal { status, message } => {
                    return Err(AnnotateError::Provider {
                        provider: "live".into(),
                        message: format!("{hash}: {message}"),
                        attempts,
                        status,
                        retry_after_secs: None,
                    })
                }
                Attempt::Retry { status, message, retry_after } => {
                    if attempts >= self.config.max_attempts {
                        return Err(AnnotateError::Provider {
                            provider: "live".into(),
                            message: format!("{hash}: {message}"),
                            attempts,
                            status,
                            retry_after_secs: retry_after,
                        });
                    }
                    let backoff = self.config.backoff_base * 2u32.pow(attempts - 1);
                    let wait = retry_after.map(Duration::from_secs).unwrap_or(backoff);
                    std::thread::sleep(wait);
                }
            }
        }
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

pub fn request_body(image_bytes: &[u8], max_results: u32) -> Value {
    json!({
        "requests": [{
            "image": { "content": base64::engine::general_purpose::STANDARD.encode(image_bytes) },
            "features": [{ "type": "WEB_DETECTION", "maxResults": max_results }]
        }]
    })
}

fn urls(v: Option<&Value>) -> Vec<String> {
    v.and_then(Value::as_array)
        .map(|a| {
            a.iter()
                .filter_map(|e| e.get("url").and_then(Value::as_str))
                .map(str::to_string)
                .collect()
        })
        .unwrap_or_default()
}

/// Map an `images:annotate` response onto a [`WebDetection`]. Entities without
/// a description are dropped; a missing score reads as 0.
pub fn parse_vision_response(v: &Value) -> Result<WebDetection, String> {
    let first = v
        .get("responses")
        .and_then(Value::as_array)
        .and_then(|a| a.first())
        .ok_or("response has no `responses[0]`")?;
    if let Some(err) = first.get("error") {
        return Err(format!("provider error: {err}"));
    }
    let web = match first.get("webDetection") {
        Some(w) => w,
        None => return Ok(WebDetection::default()),
    };
    let entities = web
        .get("webEntities")
        .and_then(Value::as_array)
        .map(|a| {
            a.iter()
                .filter_map(|e| {
                    let label = e.get("description").and_then(Value::as_str)?.trim();
                    if label.is_empty() {
                        return None;
                    }
                    let score = e.get("score").and_then(Value::as_f64).unwrap_or(0.0).max(0.0);
                    Some((label.to_string(), score))
                })
                .collect()
        })
        .unwrap_or_default();
    Ok(WebDetection {
        entities,
        full_match_urls: urls(web.get("fullMatchingImages")),
        page_urls: urls(web.get("pagesWithMatchingImages")),
    })
}
