//! Pipeline configuration, read from a TOML file. Relative paths resolve
//! against the directory holding the file.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::DateTime;
use imgspread::cluster::{DEFAULT_EPS, DEFAULT_MIN_SAMPLES};
use imgspread::events::{DEFAULT_COMMUNITIES, DEFAULT_MIN_OCCURRENCES};
use imgspread::graphs::{DEFAULT_JACCARD_THRESHOLD, DEFAULT_TOP_FRACTION};
use imgspread::hawkes::{ExpKernel, GammaPrior, GibbsConfig, DEFAULT_DELTA_MAX_HOURS, DEFAULT_TAU_HOURS};
use serde::{Deserialize, Serialize};

use crate::error::PipelineError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Global seed; every random draw in the pipeline derives from it.
    #[serde(default)]
    pub seed: u64,
    pub paths: Paths,
    #[serde(default)]
    pub cluster: ClusterParams,
    pub annotate: AnnotateParams,
    #[serde(default)]
    pub graph: GraphParams,
    pub events: EventsParams,
    #[serde(default)]
    pub hawkes: HawkesParams,
    #[serde(default)]
    pub report: ReportParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub corpus: PathBuf,
    pub cache: PathBuf,
    pub output: PathBuf,
    pub events: PathBuf,
    #[serde(default)]
    pub tweets: Option<PathBuf>,
    /// One entity per line; each becomes a subset in the event and influence reports.
    #[serde(default)]
    pub entities: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterParams {
    pub eps: u32,
    pub min_samples: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            eps: DEFAULT_EPS,
            min_samples: DEFAULT_MIN_SAMPLES,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Fixture,
    Live,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotateParams {
    pub provider: ProviderKind,
    /// Annotation file for the fixture provider.
    #[serde(default)]
    pub fixture: Option<PathBuf>,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_workers() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphParams {
    pub threshold: f64,
    pub fraction: f64,
}

impl Default for GraphParams {
    fn default() -> Self {
        GraphParams {
            threshold: DEFAULT_JACCARD_THRESHOLD,
            fraction: DEFAULT_TOP_FRACTION,
        }
    }
}

/// Unix seconds or an RFC 3339 string.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Timestamp {
    Unix(i64),
    Text(String),
}

impl Timestamp {
    pub fn unix(&self) -> Result<i64, PipelineError> {
        match self {
            Timestamp::Unix(t) => Ok(*t),
            Timestamp::Text(s) => DateTime::parse_from_rfc3339(s)
                .map(|d| d.timestamp())
                .map_err(|e| PipelineError::Config(format!("bad timestamp {s:?}: {e}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventsParams {
    pub window_start: Timestamp,
    pub window_end: Timestamp,
    #[serde(default = "default_communities")]
    pub communities: Vec<String>,
    #[serde(default = "default_min_occurrences")]
    pub min_occurrences: usize,
}

fn default_communities() -> Vec<String> {
    DEFAULT_COMMUNITIES.iter().map(|s| s.to_string()).collect()
}

fn default_min_occurrences() -> usize {
    DEFAULT_MIN_OCCURRENCES
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HawkesParams {
    pub tau_hours: f64,
    pub delta_max_hours: f64,
    /// `[shape, rate]`
    pub lambda0_prior: [f64; 2],
    pub w_prior: [f64; 2],
    pub burn_in: usize,
    pub samples: usize,
    pub workers: usize,
}

impl Default for HawkesParams {
    fn default() -> Self {
        let g = GibbsConfig::default();
        HawkesParams {
            tau_hours: DEFAULT_TAU_HOURS,
            delta_max_hours: DEFAULT_DELTA_MAX_HOURS,
            lambda0_prior: [g.lambda0_prior.shape, g.lambda0_prior.rate],
            w_prior: [g.w_prior.shape, g.w_prior.rate],
            burn_in: g.burn_in,
            samples: g.samples,
            workers: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportParams {
    /// Community whose external influence orders the ranking.
    pub source: String,
    /// Rows in the ranked entity/domain tables and the ranking.
    pub top: usize,
}

impl Default for ReportParams {
    fn default() -> Self {
        ReportParams {
            source: "Trolls".into(),
            top: 20,
        }
    }
}

impl PipelineConfig {
    /// Parse, resolve relative paths against `base`, and validate.
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        let abs = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        abs(&mut cfg.paths.corpus);
        abs(&mut cfg.paths.cache);
        abs(&mut cfg.paths.output);
        abs(&mut cfg.paths.events);
        cfg.paths.tweets.as_mut().map(abs);
        cfg.paths.entities.as_mut().map(abs);
        cfg.annotate.fixture.as_mut().map(abs);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, &base)
    }

    pub fn window(&self) -> Result<(i64, i64), PipelineError> {
        Ok((self.events.window_start.unix()?, self.events.window_end.unix()?))
    }

    pub fn gibbs(&self) -> GibbsConfig {
        let h = &self.hawkes;
        GibbsConfig {
            kernel: ExpKernel {
                tau: h.tau_hours,
                delta_max: h.delta_max_hours,
            },
            lambda0_prior: GammaPrior {
                shape: h.lambda0_prior[0],
                rate: h.lambda0_prior[1],
            },
            w_prior: GammaPrior {
                shape: h.w_prior[0],
                rate: h.w_prior[1],
            },
            burn_in: h.burn_in,
            samples: h.samples,
            seed: self.seed,
            ..GibbsConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.cluster.eps > 64 {
            return bad(format!("cluster.eps must be in [0, 64], got {}", self.cluster.eps));
        }
        if self.cluster.min_samples == 0 {
            return bad("cluster.min_samples must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.graph.threshold) {
            return bad(format!("graph.threshold must be in [0, 1], got {}", self.graph.threshold));
        }
        if !(self.graph.fraction > 0.0 && self.graph.fraction <= 1.0) {
            return bad(format!("graph.fraction must be in (0, 1], got {}", self.graph.fraction));
        }
        let (start, end) = self.window()?;
        if start >= end {
            return bad("events.window_start must precede events.window_end".into());
        }
        if self.events.min_occurrences == 0 {
            return bad("events.min_occurrences must be >= 1".into());
        }
        if !self.events.communities.contains(&self.report.source) {
            return bad(format!("report.source {:?} is not a configured community", self.report.source));
        }
        self.gibbs().validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.annotate.provider == ProviderKind::Fixture && self.annotate.fixture.is_none() {
            return bad("annotate.fixture is required for the fixture provider".into());
        }
        let must_exist = [
            Some(("paths.corpus", &self.paths.corpus)),
            Some(("paths.events", &self.paths.events)),
            self.paths.tweets.as_ref().map(|p| ("paths.tweets", p)),
            self.paths.entities.as_ref().map(|p| ("paths.entities", p)),
            self.annotate.fixture.as_ref().map(|p| ("annotate.fixture", p)),
        ];
        for (key, p) in must_exist.into_iter().flatten() {
            if !p.exists() {
                return bad(format!("{key}: {} does not exist", p.display()));
            }
        }
        Ok(())
    }
}
