//! Cluster annotation through a pluggable web-detection provider, and the
//! entity/domain popularity tables built from it.

mod domain;
pub mod live;
mod provider;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use domain::registrable_domain;
pub use live::{LiveConfig, LiveProvider};
pub use provider::{detect, detect_all, DetectionCache, FixtureProvider, WebDetectionProvider};

use crate::cluster::Cluster;
use crate::phash::PHash64;
use crate::report::{count_with_percent, percent_1dp};

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("provider {provider} failed after {attempts} attempt(s) (status {status:?}): {message}")]
    Provider {
        provider: String,
        message: String,
        attempts: u32,
        status: Option<u16>,
        retry_after_secs: Option<u64>,
    },
    #[error("no fixture entry for pHash {0}")]
    FixtureMiss(PHash64),
    #[error("clusters without a detection: {0:?}")]
    AnnotationGap(Vec<usize>),
    #[error("invalid detection: {0}")]
    InvalidDetection(String),
    #[error("bad fixture file: {0}")]
    Fixture(String),
    #[error("cache error at {path}: {source}")]
    Cache {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("missing credentials: {0}")]
    Credentials(String),
}

/// Web-detection result for one image: scored entities plus URLs where it appears.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WebDetection {
    /// `(label, score)` in provider order.
    #[serde(default)]
    pub entities: Vec<(String, f64)>,
    #[serde(default)]
    pub full_match_urls: Vec<String>,
    #[serde(default)]
    pub page_urls: Vec<String>,
}

impl WebDetection {
    pub fn validate(&self) -> Result<(), AnnotateError> {
        for (label, score) in &self.entities {
            if label.is_empty() {
                return Err(AnnotateError::InvalidDetection("empty entity label".into()));
            }
            if !score.is_finite() || *score < 0.0 {
                return Err(AnnotateError::InvalidDetection(format!(
                    "entity {label:?} has score {score}"
                )));
            }
        }
        Ok(())
    }

    /// Highest-scoring label; the first listed wins ties.
    pub fn top_entity(&self) -> Option<&str> {
        let mut best: Option<(&str, f64)> = None;
        for (label, score) in &self.entities {
            if best.is_none_or(|(_, s)| *score > s) {
                best = Some((label, *score));
            }
        }
        best.map(|(l, _)| l)
    }

    pub fn entity_set(&self) -> BTreeSet<&str> {
        self.entities.iter().map(|(l, _)| l.as_str()).collect()
    }

    /// Registrable domains of every URL, deduplicated.
    pub fn domains(&self) -> BTreeSet<String> {
        self.full_match_urls
            .iter()
            .chain(&self.page_urls)
            .filter_map(|u| registrable_domain(u))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedCluster {
    pub cluster_id: usize,
    pub image_count: usize,
    pub detection: WebDetection,
    pub top_entity: Option<String>,
    pub domains: BTreeSet<String>,
}

impl AnnotatedCluster {
    pub fn new(cluster_id: usize, image_count: usize, detection: WebDetection) -> Self {
        let top_entity = detection.top_entity().map(str::to_string);
        let domains = detection.domains();
        AnnotatedCluster {
            cluster_id,
            image_count,
            detection,
            top_entity,
            domains,
        }
    }
}

fn gaps(clusters: &[Cluster], detections: &BTreeMap<usize, WebDetection>) -> Result<(), AnnotateError> {
    let missing: Vec<usize> = clusters
        .iter()
        .filter(|c| !detections.contains_key(&c.id))
        .map(|c| c.id)
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(AnnotateError::AnnotationGap(missing))
    }
}

pub fn annotate_clusters(
    clusters: &[Cluster],
    detections: &BTreeMap<usize, WebDetection>,
) -> Result<Vec<AnnotatedCluster>, AnnotateError> {
    gaps(clusters, detections)?;
    Ok(clusters
        .iter()
        .map(|c| AnnotatedCluster::new(c.id, c.members.len(), detections[&c.id].clone()))
        .collect())
}

/// Every member image inherits its cluster's top entity (`None` when the
/// detection has no entities).
pub fn assign_entities(
    clusters: &[Cluster],
    detections: &BTreeMap<usize, WebDetection>,
) -> Result<BTreeMap<String, Option<String>>, AnnotateError> {
    gaps(clusters, detections)?;
    let mut out = BTreeMap::new();
    for c in clusters {
        let top = detections[&c.id].top_entity().map(str::to_string);
        for m in &c.members {
            out.insert(m.clone(), top.clone());
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopularityRow {
    pub key: String,
    pub cluster_count: u64,
    pub cluster_pct: f64,
    pub image_count: u64,
    pub image_pct: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PopularityTable {
    pub total_clusters: u64,
    pub total_images: u64,
    pub rows: Vec<PopularityRow>,
}

fn build_table(counts: BTreeMap<&str, (u64, u64)>, total_clusters: u64, total_images: u64) -> PopularityTable {
    let mut rows: Vec<PopularityRow> = counts
        .into_iter()
        .map(|(k, (c, i))| PopularityRow {
            key: k.to_string(),
            cluster_count: c,
            cluster_pct: percent_1dp(c, total_clusters).unwrap_or(0.0),
            image_count: i,
            image_pct: percent_1dp(i, total_images).unwrap_or(0.0),
        })
        .collect();
    // BTreeMap order makes the stable sort break ties alphabetically
    rows.sort_by_key(|r| std::cmp::Reverse(r.cluster_count));
    PopularityTable {
        total_clusters,
        total_images,
        rows,
    }
}

fn totals(annotated: &[AnnotatedCluster]) -> (u64, u64) {
    (
        annotated.len() as u64,
        annotated.iter().map(|a| a.image_count as u64).sum(),
    )
}

/// Top-entity popularity over clusters and images, sorted by cluster count.
pub fn entity_popularity(annotated: &[AnnotatedCluster]) -> PopularityTable {
    let mut counts: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for a in annotated {
        if let Some(e) = &a.top_entity {
            let slot = counts.entry(e.as_str()).or_default();
            slot.0 += 1;
            slot.1 += a.image_count as u64;
        }
    }
    let (tc, ti) = totals(annotated);
    build_table(counts, tc, ti)
}

/// Domain popularity; a domain counts once per cluster.
pub fn domain_popularity(annotated: &[AnnotatedCluster]) -> PopularityTable {
    let mut counts: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for a in annotated {
        for d in &a.domains {
            let slot = counts.entry(d.as_str()).or_default();
            slot.0 += 1;
            slot.1 += a.image_count as u64;
        }
    }
    let (tc, ti) = totals(annotated);
    build_table(counts, tc, ti)
}

impl PopularityTable {
    pub fn total_cluster_count(&self) -> u64 {
        self.rows.iter().map(|r| r.cluster_count).sum()
    }

    /// Machine-readable CSV: `key,cluster_count,cluster_pct,image_count,image_pct`.
    pub fn to_csv(&self, key_header: &str) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([key_header, "cluster_count", "cluster_pct", "image_count", "image_pct"])
            .expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.key.clone(),
                r.cluster_count.to_string(),
                format!("{:.1}", r.cluster_pct),
                r.image_count.to_string(),
                format!("{:.1}", r.image_pct),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv")
    }

    /// Side-by-side top-`n` ranking by clusters and by images, e.g.
    /// `Russia | 2,783 (3.5%) | Russia | 30,426 (4.0%)`.
    pub fn ranked_text(&self, key_title: &str, n: usize) -> String {
        let by_clusters: Vec<&PopularityRow> = self.rows.iter().take(n).collect();
        let mut by_images: Vec<&PopularityRow> = self.rows.iter().collect();
        by_images.sort_by(|a, b| b.image_count.cmp(&a.image_count).then_with(|| a.key.cmp(&b.key)));
        by_images.truncate(n);
        let mut out = format!("{key_title} | #clusters (%) | {key_title} | #images (%)\n");
        for i in 0..by_clusters.len().max(by_images.len()) {
            let left = by_clusters
                .get(i)
                .map(|r| (r.key.as_str(), count_with_percent(r.cluster_count, self.total_clusters)))
                .unwrap_or(("", String::new()));
            let right = by_images
                .get(i)
                .map(|r| (r.key.as_str(), count_with_percent(r.image_count, self.total_images)))
                .unwrap_or(("", String::new()));
            out.push_str(&format!("{} | {} | {} | {}\n", left.0, left.1, right.0, right.1));
        }
        out
    }

    /// One line per row: `pinterest.com, 9,433 (12.0%), 76,231 (10.1%)`.
    pub fn row_lines(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| {
                format!(
                    "{}, {}, {}",
                    r.key,
                    count_with_percent(r.cluster_count, self.total_clusters),
                    count_with_percent(r.image_count, self.total_images)
                )
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phash::{ImageRef, ImageSource};

    fn det(entities: &[(&str, f64)], urls: &[&str]) -> WebDetection {
        WebDetection {
            entities: entities.iter().map(|(l, s)| (l.to_string(), *s)).collect(),
            full_match_urls: urls.iter().map(|s| s.to_string()).collect(),
            page_urls: vec![],
        }
    }

    fn cluster(id: usize, members: &[&str]) -> Cluster {
        Cluster {
            id,
            medoid: members[0].to_string(),
            members: members.iter().map(|s| s.to_string()).collect(),
            unique_hashes: 1,
        }
    }

    fn img() -> ImageRef {
        ImageRef {
            id: "m".into(),
            source: ImageSource::Bytes(vec![]),
            community: None,
            timestamp: None,
        }
    }

    const FIXTURE: &str = r#"{
        "00000000000000aa": {"entities": [["Russia", 0.9]], "full_match_urls": [], "page_urls": []},
        "00000000000000bb": {"entities": [], "full_match_urls": ["https://x.com/1"], "page_urls": []}
    }"#;

    #[test]
    fn fixture_echo_and_cache_contract() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DetectionCache::open(dir.path()).unwrap();
        let provider = FixtureProvider::from_json_str(FIXTURE).unwrap();
        let h = PHash64(0xaa);
        let first = detect(&img(), h, &provider, &cache).unwrap();
        assert_eq!(first, det(&[("Russia", 0.9)], &[]));
        assert_eq!(provider.calls(), 1);
        assert!(cache.path_for(h).exists());
        for _ in 0..5 {
            assert_eq!(detect(&img(), h, &provider, &cache).unwrap(), first);
        }
        assert_eq!(provider.calls(), 1);

        // a fresh provider over the same cache directory is never consulted
        let cold = FixtureProvider::default();
        let cache2 = DetectionCache::open(dir.path()).unwrap();
        assert_eq!(detect(&img(), h, &cold, &cache2).unwrap(), first);
        assert_eq!(cold.calls(), 0);
    }

    #[test]
    fn empty_entity_list_has_no_top_entity() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DetectionCache::open(dir.path()).unwrap();
        let provider = FixtureProvider::from_json_str(FIXTURE).unwrap();
        let d = detect(&img(), PHash64(0xbb), &provider, &cache).unwrap();
        assert!(d.entities.is_empty());
        assert_eq!(AnnotatedCluster::new(0, 1, d).top_entity, None);
    }

    #[test]
    fn fixture_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DetectionCache::open(dir.path()).unwrap();
        let provider = FixtureProvider::from_json_str(FIXTURE).unwrap();
        assert!(matches!(
            detect(&img(), PHash64(1), &provider, &cache),
            Err(AnnotateError::FixtureMiss(PHash64(1)))
        ));
    }

    #[test]
    fn fixture_rejects_bad_entries() {
        assert!(FixtureProvider::from_json_str(r#"{"xyz": {}}"#).is_err());
        assert!(FixtureProvider::from_json_str(r#"{"00000000000000aa": {"entities": [["", 1.0]]}}"#).is_err());
        assert!(FixtureProvider::from_json_str(r#"{"00000000000000aa": {"entities": [["a", -1.0]]}}"#).is_err());
    }

    #[test]
    fn detect_all_with_bounded_pool() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DetectionCache::open(dir.path()).unwrap();
        let provider = FixtureProvider::from_json_str(FIXTURE).unwrap();
        let items = vec![(0, img(), PHash64(0xaa)), (1, img(), PHash64(0xbb))];
        let all = detect_all(&items, &provider, &cache, 2).unwrap();
        assert_eq!(all.len(), 2);
        let again = detect_all(&items, &provider, &cache, 2).unwrap();
        assert_eq!(all, again);
        assert_eq!(provider.calls(), 2);
    }

    #[test]
    fn top_entity_rules() {
        assert_eq!(det(&[("Car", 0.2), ("Russia", 0.9)], &[]).top_entity(), Some("Russia"));
        assert_eq!(det(&[("Only", 0.1)], &[]).top_entity(), Some("Only"));
        assert_eq!(det(&[("X", 0.5), ("Y", 0.5)], &[]).top_entity(), Some("X"));
        assert_eq!(det(&[], &[]).top_entity(), None);
    }

    #[test]
    fn assign_propagates_top_entity() {
        let clusters = vec![cluster(0, &["a", "b"])];
        let dets = BTreeMap::from([(0, det(&[("Car", 0.2), ("Russia", 0.9)], &[]))]);
        let m = assign_entities(&clusters, &dets).unwrap();
        assert_eq!(m["a"].as_deref(), Some("Russia"));
        assert_eq!(m["b"].as_deref(), Some("Russia"));
    }

    #[test]
    fn assign_reports_gaps() {
        let clusters = vec![cluster(0, &["a"]), cluster(3, &["b"]), cluster(7, &["c"])];
        let dets = BTreeMap::from([(3, det(&[("E", 1.0)], &[]))]);
        match assign_entities(&clusters, &dets) {
            Err(AnnotateError::AnnotationGap(ids)) => assert_eq!(ids, vec![0, 7]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn entity_popularity_counts() {
        let one = vec![AnnotatedCluster::new(0, 1, det(&[("E", 1.0)], &[]))];
        let t = entity_popularity(&one);
        assert_eq!(t.rows.len(), 1);
        let r = &t.rows[0];
        assert_eq!((r.key.as_str(), r.cluster_count, r.cluster_pct, r.image_count, r.image_pct), ("E", 1, 100.0, 1, 100.0));

        let two = vec![
            AnnotatedCluster::new(0, 2, det(&[("E", 1.0)], &[])),
            AnnotatedCluster::new(1, 3, det(&[("E", 0.7)], &[])),
            AnnotatedCluster::new(2, 5, det(&[("F", 0.7)], &[])),
        ];
        let t = entity_popularity(&two);
        assert_eq!(t.rows[0].key, "E");
        assert_eq!(t.rows[0].cluster_count, 2);
        assert_eq!(t.rows[0].image_count, 5);
        assert_eq!(t.rows[0].cluster_pct, 66.7);
        assert_eq!(t.rows[0].image_pct, 50.0);
        assert_eq!(t.total_cluster_count(), 3);
    }

    #[test]
    fn domain_popularity_dedups_per_cluster() {
        let a = vec![AnnotatedCluster::new(0, 4, det(&[("E", 1.0)], &["https://a.com/x", "http://a.com/y"]))];
        let t = domain_popularity(&a);
        assert_eq!(t.rows.len(), 1);
        assert_eq!((t.rows[0].key.as_str(), t.rows[0].cluster_count, t.rows[0].image_count), ("a.com", 1, 4));
        let none = vec![AnnotatedCluster::new(0, 4, det(&[("E", 1.0)], &[]))];
        assert!(domain_popularity(&none).rows.is_empty());
    }

    #[test]
    fn table_formats() {
        let t = PopularityTable {
            total_clusters: 78_624,
            total_images: 753_634,
            rows: vec![PopularityRow {
                key: "Russia".into(),
                cluster_count: 2783,
                cluster_pct: 3.5,
                image_count: 30_426,
                image_pct: 4.0,
            }],
        };
        assert_eq!(t.row_lines(), vec!["Russia, 2,783 (3.5%), 30,426 (4.0%)"]);
        let text = t.ranked_text("Top entity", 20);
        assert_eq!(
            text,
            "Top entity | #clusters (%) | Top entity | #images (%)\nRussia | 2,783 (3.5%) | Russia | 30,426 (4.0%)\n"
        );
        assert!(t.to_csv("entity").starts_with("entity,cluster_count,cluster_pct,image_count,image_pct\nRussia,2783,3.5,30426,4.0"));
    }
}
