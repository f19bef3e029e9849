//! Cluster-similarity and entity-domain graphs, community detection, and export.

mod gexf;
mod louvain;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gexf::{read_gexf, to_dot, write_gexf};
pub use louvain::{louvain, modularity, LOUVAIN_MIN_GAIN};

use crate::annotate::AnnotatedCluster;

pub const DEFAULT_JACCARD_THRESHOLD: f64 = 0.4;
pub const DEFAULT_TOP_FRACTION: f64 = 0.3;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid graph config: {0}")]
    Config(String),
    #[error("duplicate node id {0:?}")]
    DuplicateNode(String),
    #[error("unknown node id {0:?}")]
    UnknownNode(String),
    #[error("invalid edge {u:?} -- {v:?}: {reason}")]
    InvalidEdge { u: String, v: String, reason: String },
    #[error("partition does not cover node {0:?}")]
    Uncovered(String),
    #[error("malformed GEXF: {0}")]
    Gexf(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Cluster,
    Entity,
    Domain,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Cluster => "cluster",
            NodeKind::Entity => "entity",
            NodeKind::Domain => "domain",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cluster" => Some(NodeKind::Cluster),
            "entity" => Some(NodeKind::Entity),
            "domain" => Some(NodeKind::Domain),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    pub label: String,
}

/// Undirected edge between node indices, stored with `u < v`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

/// Simple undirected graph with weights in `(0, 1]`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct WeightedGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    #[serde(skip)]
    pairs: HashMap<(usize, usize), usize>,
}

impl PartialEq for WeightedGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

impl WeightedGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn add_node(&mut self, id: impl Into<String>, kind: NodeKind, label: impl Into<String>) -> Result<usize, GraphError> {
        let id = id.into();
        if self.index.contains_key(&id) {
            return Err(GraphError::DuplicateNode(id));
        }
        let idx = self.nodes.len();
        self.index.insert(id.clone(), idx);
        self.nodes.push(Node {
            id,
            kind,
            label: label.into(),
        });
        Ok(idx)
    }

    pub fn add_edge(&mut self, u: &str, v: &str, weight: f64) -> Result<(), GraphError> {
        let bad = |reason: &str| GraphError::InvalidEdge {
            u: u.to_string(),
            v: v.to_string(),
            reason: reason.to_string(),
        };
        let a = self.index_of(u).ok_or_else(|| GraphError::UnknownNode(u.to_string()))?;
        let b = self.index_of(v).ok_or_else(|| GraphError::UnknownNode(v.to_string()))?;
        if a == b {
            return Err(bad("self-loop"));
        }
        if !(weight > 0.0 && weight <= 1.0) {
            return Err(bad(&format!("weight {weight} outside (0, 1]")));
        }
        let key = (a.min(b), a.max(b));
        if self.pairs.contains_key(&key) {
            return Err(bad("duplicate edge"));
        }
        self.pairs.insert(key, self.edges.len());
        self.edges.push(Edge {
            u: key.0,
            v: key.1,
            weight,
        });
        Ok(())
    }

    pub fn edge_weight(&self, u: &str, v: &str) -> Option<f64> {
        let (a, b) = (self.index_of(u)?, self.index_of(v)?);
        self.pairs
            .get(&(a.min(b), a.max(b)))
            .map(|&e| self.edges[e].weight)
    }

    /// Number of incident edges per node.
    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.nodes.len()];
        for e in &self.edges {
            d[e.u] += 1;
            d[e.v] += 1;
        }
        d
    }

    /// `(neighbour, weight)` lists per node.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            adj[e.u].push((e.v, e.weight));
            adj[e.v].push((e.u, e.weight));
        }
        adj
    }
}

/// Community assignment of every node plus its modularity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub community_of: BTreeMap<String, usize>,
    pub modularity: f64,
}

impl Partition {
    pub fn community_count(&self) -> usize {
        self.community_of.values().collect::<BTreeSet<_>>().len()
    }

    pub fn communities(&self) -> BTreeMap<usize, Vec<String>> {
        let mut out: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for (n, c) in &self.community_of {
            out.entry(*c).or_default().push(n.clone());
        }
        out
    }
}

pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

fn cluster_node_id(id: usize) -> String {
    format!("cluster:{id}")
}

/// Clusters linked by the Jaccard similarity of their entity sets, keeping
/// edges with `J >= threshold` (and `J > 0`).
pub fn cluster_similarity_graph(annotated: &[AnnotatedCluster], threshold: f64) -> Result<WeightedGraph, GraphError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(GraphError::Config(format!("threshold must be in [0, 1], got {threshold}")));
    }
    let sets: Vec<BTreeSet<&str>> = annotated.iter().map(|a| a.detection.entity_set()).collect();

    // only clusters sharing an entity can have J > 0
    let mut by_entity: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, s) in sets.iter().enumerate() {
        for e in s {
            by_entity.entry(e).or_default().push(i);
        }
    }
    let mut edges: Vec<(usize, usize, f64)> = (0..sets.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let candidates: BTreeSet<usize> = sets[i]
                .iter()
                .flat_map(|e| by_entity[e].iter().copied())
                .filter(|&j| j > i)
                .collect();
            let sets = &sets;
            candidates.into_iter().filter_map(move |j| {
                let w = jaccard(&sets[i], &sets[j]);
                (w > 0.0 && w >= threshold).then_some((i, j, w))
            })
        })
        .collect();
    edges.sort_by_key(|e| (e.0, e.1));

    let mut g = WeightedGraph::new();
    for a in annotated {
        let label = a.top_entity.clone().unwrap_or_else(|| format!("cluster {}", a.cluster_id));
        g.add_node(cluster_node_id(a.cluster_id), NodeKind::Cluster, label)?;
    }
    for (i, j, w) in edges {
        g.add_edge(
            &cluster_node_id(annotated[i].cluster_id),
            &cluster_node_id(annotated[j].cluster_id),
            w,
        )?;
    }
    Ok(g)
}

/// Bipartite graph linking each cluster's top entity to the domains its
/// images appear on; weights are co-occurrence counts over the maximum count.
pub fn entity_domain_graph(annotated: &[AnnotatedCluster]) -> Result<WeightedGraph, GraphError> {
    let mut entities: BTreeSet<&str> = BTreeSet::new();
    let mut domains: BTreeSet<&str> = BTreeSet::new();
    let mut counts: BTreeMap<(&str, &str), u64> = BTreeMap::new();
    for a in annotated {
        let Some(e) = a.top_entity.as_deref() else { continue };
        entities.insert(e);
        for d in &a.domains {
            domains.insert(d);
            *counts.entry((e, d.as_str())).or_default() += 1;
        }
    }
    let max = counts.values().copied().max().unwrap_or(0);
    let mut g = WeightedGraph::new();
    for e in &entities {
        g.add_node(format!("entity:{e}"), NodeKind::Entity, *e)?;
    }
    for d in &domains {
        g.add_node(format!("domain:{d}"), NodeKind::Domain, *d)?;
    }
    for ((e, d), c) in counts {
        g.add_edge(&format!("entity:{e}"), &format!("domain:{d}"), c as f64 / max as f64)?;
    }
    Ok(g)
}

/// Keep the `ceil(fraction * |V|)` highest-degree nodes (ties: smaller id
/// first) and the edges among them.
pub fn top_degree_filter(graph: &WeightedGraph, fraction: f64) -> Result<WeightedGraph, GraphError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(GraphError::Config(format!("fraction must be in (0, 1], got {fraction}")));
    }
    let n = graph.node_count();
    // guard against 0.3 * 10 = 3.0000000000000004
    let keep = ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let keep = keep.min(n);
    let deg = graph.degrees();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| deg[b].cmp(&deg[a]).then_with(|| graph.nodes[a].id.cmp(&graph.nodes[b].id)));
    let kept: BTreeSet<usize> = order.into_iter().take(keep).collect();

    let mut g = WeightedGraph::new();
    for &i in &kept {
        let node = &graph.nodes[i];
        g.add_node(node.id.clone(), node.kind, node.label.clone())?;
    }
    for e in graph.edges.iter().filter(|e| kept.contains(&e.u) && kept.contains(&e.v)) {
        g.add_edge(&graph.nodes[e.u].id, &graph.nodes[e.v].id, e.weight)?;
    }
    Ok(g)
}
