//! The seven pipeline stages and the resumable runner around them.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use imgspread::annotate::{
    self, annotate_clusters, detect_all, domain_popularity, entity_popularity, AnnotateError, AnnotatedCluster,
    DetectionCache, FixtureProvider, LiveConfig, LiveProvider, WebDetectionProvider,
};
use imgspread::cluster::{cluster_corpus, cluster_stats, Cluster, Clustering};
use imgspread::events::{
    event_count_table, filter_min_occurrences, ingest_reader, read_tweets_csv, select_by_entities, weekly_share_report,
    EventStore, InputFormat,
};
use imgspread::graphs::{
    cluster_similarity_graph, entity_domain_graph, louvain, to_dot, top_degree_filter, write_gexf, WeightedGraph,
};
use imgspread::hawkes::{fit_many, rank_by_troll_influence, significance_matrix, AttributionCounts, InfluenceReport, PhashFit};
use imgspread::phash::{phash_file, ImageRef, PHash64, DCT_SIZE};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{PipelineConfig, ProviderKind};
use crate::error::PipelineError;
use crate::manifest::{file_digest, hex_digest, write_atomic, Manifest, StageRecord};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const HASHES: &str = "hashes.jsonl";
pub const HASH_REJECTS: &str = "hash_rejects.jsonl";
pub const CLUSTERS: &str = "clusters.jsonl";
pub const NOISE: &str = "noise.json";
pub const CLUSTER_STATS: &str = "cluster_stats.json";
pub const ANNOTATIONS: &str = "annotations.jsonl";
pub const GRAPH_SUMMARY: &str = "graphs/summary.json";
pub const EVENTS: &str = "events.json";
pub const INGEST_REJECTS: &str = "ingest_rejects.jsonl";
pub const INGEST_SUMMARY: &str = "ingest_summary.json";
pub const FITS: &str = "fits.jsonl";
pub const REPORT: &str = "report/report.json";

const IMAGE_EXTENSIONS: [&str; 8] = ["png", "jpg", "jpeg", "gif", "bmp", "webp", "tif", "tiff"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, clap::ValueEnum)]
pub enum Stage {
    Hash,
    Cluster,
    Annotate,
    Graph,
    Events,
    Fit,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Hash,
        Stage::Cluster,
        Stage::Annotate,
        Stage::Graph,
        Stage::Events,
        Stage::Fit,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Hash => "hash",
            Stage::Cluster => "cluster",
            Stage::Annotate => "annotate",
            Stage::Graph => "graph",
            Stage::Events => "events",
            Stage::Fit => "fit",
            Stage::Report => "report",
        }
    }

    /// Upstream stages, checked in this order.
    pub fn deps(self) -> &'static [Stage] {
        match self {
            Stage::Hash | Stage::Events => &[],
            Stage::Cluster => &[Stage::Hash],
            Stage::Annotate => &[Stage::Cluster, Stage::Hash],
            Stage::Graph => &[Stage::Annotate],
            Stage::Fit => &[Stage::Events],
            Stage::Report => &[Stage::Fit, Stage::Events, Stage::Graph, Stage::Annotate, Stage::Cluster, Stage::Hash],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Ran,
    UpToDate,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StageStatus {
    Missing,
    UpToDate,
    /// Outputs changed on disk, inputs changed or the tool version differs.
    Outdated,
    /// Recorded config hash differs from the current config.
    StaleConfig,
}

type Outputs = Vec<(String, Vec<u8>)>;

#[derive(Serialize, Deserialize)]
struct HashLine {
    id: String,
    phash: PHash64,
}

#[derive(Serialize, Deserialize)]
struct RejectLine {
    id: String,
    error: String,
}

fn jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> Result<Vec<u8>, PipelineError> {
    let mut out = Vec::new();
    for it in items {
        serde_json::to_writer(&mut out, &it).map_err(PipelineError::data)?;
        out.push(b'\n');
    }
    Ok(out)
}

fn pretty<T: Serialize>(v: &T) -> Result<Vec<u8>, PipelineError> {
    let mut b = serde_json::to_vec_pretty(v).map_err(PipelineError::data)?;
    b.push(b'\n');
    Ok(b)
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| PipelineError::Data(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PipelineError> {
    let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))
}

fn config_digest(v: &Value) -> String {
    hex_digest(v.to_string().as_bytes())
}

/// Image files under `root`, as sorted `/`-separated relative ids.
pub fn list_images(root: &Path) -> Result<Vec<String>, PipelineError> {
    fn walk(dir: &Path, root: &Path, out: &mut Vec<String>) -> Result<(), PipelineError> {
        for entry in fs::read_dir(dir).map_err(|e| PipelineError::io(dir, e))? {
            let path = entry.map_err(|e| PipelineError::io(dir, e))?.path();
            if path.is_dir() {
                walk(&path, root, out)?;
            } else if path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            {
                let rel = path.strip_prefix(root).expect("walk stays under root");
                let id: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
                out.push(id.join("/"));
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, root, &mut out)?;
    out.sort();
    Ok(out)
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub force: bool,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, force: bool) -> Self {
        Pipeline { config, force }
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.paths.output
    }

    fn out(&self, rel: &str) -> PathBuf {
        self.out_dir().join(rel)
    }

    fn config_hash(&self, stage: Stage) -> Result<String, PipelineError> {
        let c = &self.config;
        let v = match stage {
            Stage::Hash => json!({ "dct_size": DCT_SIZE }),
            Stage::Cluster => json!({ "eps": c.cluster.eps, "min_samples": c.cluster.min_samples }),
            Stage::Annotate => json!({
                "provider": c.annotate.provider,
                "endpoint": if c.annotate.provider == ProviderKind::Live { c.annotate.endpoint.clone() } else { None },
            }),
            Stage::Graph => json!({ "threshold": c.graph.threshold, "fraction": c.graph.fraction, "seed": c.seed }),
            Stage::Events => json!({
                "window": c.window()?,
                "communities": c.events.communities,
                "min_occurrences": c.events.min_occurrences,
            }),
            Stage::Fit => {
                let h = &c.hawkes;
                json!({
                    "tau": h.tau_hours, "delta_max": h.delta_max_hours,
                    "lambda0_prior": h.lambda0_prior, "w_prior": h.w_prior,
                    "burn_in": h.burn_in, "samples": h.samples, "seed": c.seed,
                })
            }
            Stage::Report => json!({ "source": c.report.source, "top": c.report.top }),
        };
        Ok(config_digest(&v))
    }

    fn corpus_digest(&self) -> Result<String, PipelineError> {
        let mut h = Sha256::new();
        for id in list_images(&self.config.paths.corpus)? {
            h.update(id.as_bytes());
            h.update([0]);
            h.update(file_digest(&self.config.paths.corpus.join(&id))?.as_bytes());
            h.update(b"\n");
        }
        Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }

    fn inputs(&self, stage: Stage) -> Result<BTreeMap<String, String>, PipelineError> {
        let mut m = BTreeMap::new();
        let mut upstream = |rel: &str| -> Result<(), PipelineError> {
            m.insert(rel.to_string(), file_digest(&self.out(rel))?);
            Ok(())
        };
        match stage {
            Stage::Hash => {}
            Stage::Cluster => upstream(HASHES)?,
            Stage::Annotate => {
                upstream(CLUSTERS)?;
                upstream(HASHES)?;
            }
            Stage::Graph => upstream(ANNOTATIONS)?,
            Stage::Events => {}
            Stage::Fit => upstream(EVENTS)?,
            Stage::Report => {
                for rel in [ANNOTATIONS, CLUSTERS, NOISE, HASHES, EVENTS, FITS, GRAPH_SUMMARY] {
                    upstream(rel)?;
                }
            }
        }
        let c = &self.config;
        match stage {
            Stage::Hash => {
                m.insert("corpus".into(), self.corpus_digest()?);
            }
            Stage::Annotate => {
                if let (ProviderKind::Fixture, Some(p)) = (c.annotate.provider, &c.annotate.fixture) {
                    m.insert("fixture".into(), file_digest(p)?);
                }
            }
            Stage::Events => {
                m.insert("events".into(), file_digest(&c.paths.events)?);
            }
            Stage::Report => {
                if let Some(p) = &c.paths.tweets {
                    m.insert("tweets".into(), file_digest(p)?);
                }
                if let Some(p) = &c.paths.entities {
                    m.insert("entities".into(), file_digest(p)?);
                }
            }
            _ => {}
        }
        Ok(m)
    }

    fn check_deps(&self, stage: Stage, manifest: &Manifest) -> Result<(), PipelineError> {
        for dep in stage.deps() {
            if !manifest.stages.contains_key(dep.name()) || !manifest.outputs_intact(dep.name(), self.out_dir()) {
                return Err(PipelineError::Dependency(dep.name().to_string()));
            }
        }
        Ok(())
    }

    pub fn status(&self, stage: Stage) -> Result<StageStatus, PipelineError> {
        let manifest = Manifest::load(self.out_dir())?;
        let Some(rec) = manifest.stages.get(stage.name()) else {
            return Ok(StageStatus::Missing);
        };
        if rec.config_hash != self.config_hash(stage)? {
            return Ok(StageStatus::StaleConfig);
        }
        let current = if self.check_deps(stage, &manifest).is_ok() {
            self.inputs(stage).ok()
        } else {
            None
        };
        let fresh = rec.tool_version == TOOL_VERSION
            && current.as_ref() == Some(&rec.inputs)
            && manifest.outputs_intact(stage.name(), self.out_dir());
        Ok(if fresh { StageStatus::UpToDate } else { StageStatus::Outdated })
    }

    /// Run one stage unless its record shows the same config, inputs,
    /// outputs and tool version.
    pub fn run(&self, stage: Stage) -> Result<Outcome, PipelineError> {
        let out_dir = self.out_dir().to_path_buf();
        fs::create_dir_all(&out_dir).map_err(|e| PipelineError::io(&out_dir, e))?;
        let manifest = Manifest::load(&out_dir)?;
        self.check_deps(stage, &manifest)?;
        let config_hash = self.config_hash(stage)?;
        let inputs = self.inputs(stage)?;
        if let Some(rec) = manifest.stages.get(stage.name()) {
            if rec.config_hash != config_hash && !self.force {
                return Err(PipelineError::StaleArtifact {
                    stage: stage.name().into(),
                    recorded: rec.config_hash.clone(),
                    current: config_hash,
                });
            }
            if !self.force
                && rec.inputs == inputs
                && rec.tool_version == TOOL_VERSION
                && manifest.outputs_intact(stage.name(), &out_dir)
            {
                return Ok(Outcome::UpToDate);
            }
        }

        let outputs = match stage {
            Stage::Hash => self.hash()?,
            Stage::Cluster => self.cluster()?,
            Stage::Annotate => self.annotate()?,
            Stage::Graph => self.graph()?,
            Stage::Events => self.events()?,
            Stage::Fit => self.fit()?,
            Stage::Report => self.report()?,
        };
        let mut digests = BTreeMap::new();
        for (rel, bytes) in &outputs {
            write_atomic(&out_dir.join(rel), bytes)?;
            digests.insert(rel.clone(), hex_digest(bytes));
        }
        // reload so that concurrent edits to other stages' records survive
        let mut manifest = Manifest::load(&out_dir)?;
        manifest.stages.insert(
            stage.name().into(),
            StageRecord {
                tool_version: TOOL_VERSION.into(),
                config_hash,
                inputs,
                outputs: digests,
            },
        );
        manifest.save(&out_dir)?;
        Ok(Outcome::Ran)
    }

    pub fn run_all(&self) -> Result<Vec<(Stage, Outcome)>, PipelineError> {
        Stage::ALL.iter().map(|&s| self.run(s).map(|o| (s, o))).collect()
    }

    fn hash(&self) -> Result<Outputs, PipelineError> {
        let root = &self.config.paths.corpus;
        let ids = list_images(root)?;
        let results: Vec<(String, Result<PHash64, String>)> = ids
            .into_par_iter()
            .map(|id| {
                let r = phash_file(&root.join(&id)).map_err(|e| e.to_string());
                (id, r)
            })
            .collect();
        let mut ok = Vec::new();
        let mut rejects = Vec::new();
        for (id, r) in results {
            match r {
                Ok(phash) => ok.push(HashLine { id, phash }),
                Err(error) => rejects.push(RejectLine { id, error }),
            }
        }
        Ok(vec![(HASHES.into(), jsonl(&ok)?), (HASH_REJECTS.into(), jsonl(&rejects)?)])
    }

    fn load_hashes(&self) -> Result<BTreeMap<String, PHash64>, PipelineError> {
        Ok(read_jsonl::<HashLine>(&self.out(HASHES))?
            .into_iter()
            .map(|l| (l.id, l.phash))
            .collect())
    }

    fn cluster(&self) -> Result<Outputs, PipelineError> {
        let hashes = self.load_hashes()?;
        let c = &self.config.cluster;
        let clustering =
            cluster_corpus(&hashes, c.eps, c.min_samples).map_err(|e| PipelineError::Config(e.to_string()))?;
        let mut clusters = Vec::new();
        clustering.write_jsonl(&mut clusters).map_err(PipelineError::data)?;
        Ok(vec![
            (CLUSTERS.into(), clusters),
            (NOISE.into(), pretty(&clustering.noise)?),
            (CLUSTER_STATS.into(), pretty(&cluster_stats(&clustering))?),
        ])
    }

    fn load_clusters(&self) -> Result<Vec<Cluster>, PipelineError> {
        let f = fs::File::open(self.out(CLUSTERS)).map_err(|e| PipelineError::io(&self.out(CLUSTERS), e))?;
        Clustering::read_jsonl(BufReader::new(f)).map_err(PipelineError::data)
    }

    fn provider(&self) -> Result<Box<dyn WebDetectionProvider>, PipelineError> {
        let a = &self.config.annotate;
        Ok(match a.provider {
            ProviderKind::Fixture => {
                let path = a.fixture.as_ref().expect("validated");
                Box::new(FixtureProvider::from_path(path).map_err(PipelineError::data)?)
            }
            ProviderKind::Live => {
                let endpoint = a.endpoint.clone().unwrap_or_else(|| annotate::live::DEFAULT_ENDPOINT.to_string());
                let cfg = LiveConfig::from_env(endpoint).map_err(|e| PipelineError::Config(e.to_string()))?;
                Box::new(LiveProvider::new(cfg))
            }
        })
    }

    fn annotate(&self) -> Result<Outputs, PipelineError> {
        let hashes = self.load_hashes()?;
        let clusters = self.load_clusters()?;
        let medoids: Vec<(usize, ImageRef, PHash64)> = clusters
            .iter()
            .map(|c| {
                let h = hashes
                    .get(&c.medoid)
                    .ok_or_else(|| PipelineError::Data(format!("medoid {:?} has no hash", c.medoid)))?;
                Ok((c.id, ImageRef::from_path(c.medoid.clone(), self.config.paths.corpus.join(&c.medoid)), *h))
            })
            .collect::<Result<_, PipelineError>>()?;
        let provider = self.provider()?;
        let cache = DetectionCache::open(&self.config.paths.cache).map_err(PipelineError::data)?;
        let detections = detect_all(&medoids, provider.as_ref(), &cache, self.config.annotate.workers).map_err(
            |e| match e {
                AnnotateError::Credentials(m) => PipelineError::Config(m),
                other => PipelineError::data(other),
            },
        )?;
        let annotated = annotate_clusters(&clusters, &detections).map_err(PipelineError::data)?;
        Ok(vec![(ANNOTATIONS.into(), jsonl(&annotated)?)])
    }

    fn load_annotations(&self) -> Result<Vec<AnnotatedCluster>, PipelineError> {
        read_jsonl(&self.out(ANNOTATIONS))
    }

    fn graph(&self) -> Result<Outputs, PipelineError> {
        let annotated = self.load_annotations()?;
        let g = &self.config.graph;
        let cfg_err = |e: imgspread::graphs::GraphError| PipelineError::Config(e.to_string());
        let clusters = cluster_similarity_graph(&annotated, g.threshold).map_err(cfg_err)?;
        let full = entity_domain_graph(&annotated).map_err(PipelineError::data)?;
        let entities = top_degree_filter(&full, g.fraction).map_err(cfg_err)?;
        let mut outputs = Vec::new();
        let mut summary = BTreeMap::new();
        for (name, graph) in [("clusters", &clusters), ("entities_domains", &entities)] {
            let partition = louvain(graph, self.config.seed);
            let mut gexf = Vec::new();
            write_gexf(graph, &partition, &mut gexf).map_err(PipelineError::data)?;
            outputs.push((format!("graphs/{name}.gexf"), gexf));
            outputs.push((format!("graphs/{name}.dot"), to_dot(graph, &partition).into_bytes()));
            summary.insert(name, graph_summary(graph, partition.community_count(), partition.modularity));
        }
        summary.insert(
            "entities_domains_unfiltered",
            json!({ "nodes": full.node_count(), "edges": full.edge_count() }),
        );
        outputs.push((GRAPH_SUMMARY.into(), pretty(&summary)?));
        Ok(outputs)
    }

    fn events(&self) -> Result<Outputs, PipelineError> {
        let c = &self.config;
        let path = &c.paths.events;
        let f = fs::File::open(path).map_err(|e| PipelineError::io(path, e))?;
        let ingested = ingest_reader(
            BufReader::new(f),
            InputFormat::from_path(path),
            &c.events.communities,
            c.window()?,
        )
        .map_err(PipelineError::data)?;
        let store = filter_min_occurrences(&ingested.store, c.events.min_occurrences)
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        let summary = json!({
            "ingest": ingested.summary,
            "min_occurrences": c.events.min_occurrences,
            "kept_phashes": store.phash_count(),
            "kept_events": store.total_events(),
        });
        Ok(vec![
            (EVENTS.into(), pretty(&store)?),
            (INGEST_REJECTS.into(), jsonl(&ingested.rejects)?),
            (INGEST_SUMMARY.into(), pretty(&summary)?),
        ])
    }

    fn load_store(&self) -> Result<EventStore, PipelineError> {
        read_json(&self.out(EVENTS))
    }

    fn fit(&self) -> Result<Outputs, PipelineError> {
        let store = self.load_store()?;
        let series: Vec<(PHash64, Vec<Vec<f64>>)> = store
            .series
            .keys()
            .map(|h| (*h, store.times_hours(*h).expect("key from store")))
            .collect();
        let fits = fit_many(&series, store.horizon_hours(), &self.config.gibbs(), self.config.hawkes.workers)
            .map_err(PipelineError::data)?;
        Ok(vec![(FITS.into(), jsonl(&fits)?)])
    }

    fn report(&self) -> Result<Outputs, PipelineError> {
        let c = &self.config;
        let top = c.report.top;
        let annotated = self.load_annotations()?;
        let clusters = self.load_clusters()?;
        let noise: Vec<String> = read_json(&self.out(NOISE))?;
        let hashes = self.load_hashes()?;
        let store = self.load_store()?;
        let fits: Vec<PhashFit> = read_jsonl(&self.out(FITS))?;
        let communities = store.communities.clone();
        let k = communities.len();
        let source = communities
            .iter()
            .position(|x| x == &c.report.source)
            .ok_or_else(|| PipelineError::Config(format!("report.source {:?} not in event store", c.report.source)))?;

        let mut outputs: Outputs = Vec::new();
        let mut put = |name: &str, bytes: Vec<u8>| outputs.push((format!("report/{name}"), bytes));

        let entities = entity_popularity(&annotated);
        let domains = domain_popularity(&annotated);
        put("table1_entities.csv", entities.to_csv("entity").into_bytes());
        put("table1_entities.txt", entities.ranked_text("Top entity", top).into_bytes());
        put("table2_domains.csv", domains.to_csv("domain").into_bytes());
        put("table2_domains.txt", domains.ranked_text("Domain", top).into_bytes());
        let stats = cluster_stats(&Clustering {
            clusters: clusters.clone(),
            noise,
        });
        put("cluster_summary.txt", format!("{}\n", stats.summary_line()).into_bytes());

        // every hash in an annotated cluster inherits the cluster's entity set
        let by_id: BTreeMap<usize, &AnnotatedCluster> = annotated.iter().map(|a| (a.cluster_id, a)).collect();
        let mut phash_entities: BTreeMap<PHash64, BTreeSet<String>> = BTreeMap::new();
        let mut phash_cluster: BTreeMap<PHash64, (usize, Option<String>)> = BTreeMap::new();
        for cl in &clusters {
            let Some(a) = by_id.get(&cl.id) else { continue };
            for m in &cl.members {
                if let Some(h) = hashes.get(m) {
                    phash_entities
                        .entry(*h)
                        .or_default()
                        .extend(a.detection.entity_set().into_iter().map(str::to_string));
                    phash_cluster.entry(*h).or_insert((cl.id, a.top_entity.clone()));
                }
            }
        }

        let subsets: Vec<String> = match &c.paths.entities {
            Some(p) => fs::read_to_string(p)
                .map_err(|e| PipelineError::io(p, e))?
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect(),
            None => Vec::new(),
        };
        let mut subset_stores = Vec::new();
        let mut selection = BTreeMap::new();
        for name in &subsets {
            let (sub, rep) =
                select_by_entities(&store, &phash_entities, std::slice::from_ref(name)).map_err(PipelineError::data)?;
            selection.insert(name.clone(), rep);
            subset_stores.push((name.clone(), sub));
        }
        let mut rows: Vec<(&str, &EventStore)> = vec![("All images", &store)];
        rows.extend(subset_stores.iter().map(|(n, s)| (n.as_str(), s)));
        put("table3_events.csv", event_count_table(&rows).into_bytes());

        let all_counts: Vec<AttributionCounts> = fits.iter().map(PhashFit::counts).collect();
        let total = AttributionCounts::aggregate(k, &all_counts).map_err(PipelineError::data)?;
        let overall = InfluenceReport::from_counts(&communities, &total).map_err(PipelineError::data)?;
        put("influence.csv", overall.influence_csv(None).into_bytes());
        put("efficiency.csv", overall.efficiency_csv().into_bytes());

        let mut subset_reports = BTreeMap::new();
        for (name, sub) in &subset_stores {
            let (inside, outside): (Vec<&PhashFit>, Vec<&PhashFit>) =
                fits.iter().partition(|f| sub.series.contains_key(&f.phash));
            let a: Vec<AttributionCounts> = inside.iter().map(|f| f.counts()).collect();
            let b: Vec<AttributionCounts> = outside.iter().map(|f| f.counts()).collect();
            let counts = AttributionCounts::aggregate(k, &a).map_err(PipelineError::data)?;
            let rep = InfluenceReport::from_counts(&communities, &counts).map_err(PipelineError::data)?;
            let sig = significance_matrix(&a, &b, k);
            put(&format!("influence_{}.csv", slug(name)), rep.influence_csv(Some(&sig)).into_bytes());
            put(&format!("efficiency_{}.csv", slug(name)), rep.efficiency_csv().into_bytes());
            subset_reports.insert(name.clone(), json!({ "report": rep, "significance": sig }));
        }

        let ranking = rank_by_troll_influence(&fits, source);
        let mut csv = String::from("rank,phash,external_influence,cluster_id,top_entity\n");
        for (i, (h, v)) in ranking.iter().enumerate() {
            let (cid, ent) = phash_cluster
                .get(h)
                .map(|(id, e)| (id.to_string(), e.clone().unwrap_or_default()))
                .unwrap_or_default();
            csv.push_str(&format!("{},{},{:.6},{},{}\n", i + 1, h, v, cid, ent));
        }
        put("ranking.csv", csv.into_bytes());

        let weekly = match &c.paths.tweets {
            Some(p) => {
                let f = fs::File::open(p).map_err(|e| PipelineError::io(p, e))?;
                let tweets = read_tweets_csv(BufReader::new(f)).map_err(PipelineError::data)?;
                let r = weekly_share_report(tweets, Some(store.window));
                put("weekly_shares.csv", r.to_csv().into_bytes());
                Some(r)
            }
            None => None,
        };

        let summary = json!({
            "communities": communities,
            "cluster_stats": stats,
            "entities": entities,
            "domains": domains,
            "event_counts": rows.iter().map(|(n, s)| json!({
                "name": n, "per_community": s.counts_per_community(),
                "total": s.total_events(), "phashes": s.phash_count(),
            })).collect::<Vec<_>>(),
            "selection": selection,
            "influence": overall,
            "subsets": subset_reports,
            "ranking_source": c.report.source,
            "ranking": ranking.iter().take(top).map(|(h, v)| json!({ "phash": h, "external_influence": v })).collect::<Vec<_>>(),
            "weekly": weekly,
        });
        put("report.json", pretty(&summary)?);
        Ok(outputs)
    }
}

fn graph_summary(g: &WeightedGraph, communities: usize, modularity: f64) -> Value {
    json!({
        "nodes": g.node_count(),
        "edges": g.edge_count(),
        "communities": communities,
        "modularity": modularity,
    })
}
