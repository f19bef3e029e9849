//! Density-based clustering of perceptual hashes in Hamming space.
//!
//! Semantics are classical DBSCAN over images:
//! an image is a core point iff at least `min_samples` images (itself included)
//! lie within `eps`; clusters are connected components of core points, plus the
//! border points reachable from them. Ties are resolved deterministically:
//!
//! * core components are ordered by their smallest core image id;
//! * a border point joins the first eligible component in that order;
//! * final cluster ids are assigned by ascending smallest member id.
//!
//! Images sharing a hash always share a fate, so the work is done over unique
//! hashes weighted by multiplicity.

mod bktree;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bktree::BkTree;

use crate::phash::{hamming, PHash64};

pub const DEFAULT_EPS: u32 = 8;
pub const DEFAULT_MIN_SAMPLES: usize = 2;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("invalid clustering config: {0}")]
    Config(String),
    #[error("cannot take the medoid of an empty cluster")]
    EmptyCluster,
    #[error("malformed cluster record on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: usize,
    pub medoid: String,
    pub members: Vec<String>,
    pub unique_hashes: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clustering {
    pub clusters: Vec<Cluster>,
    pub noise: Vec<String>,
}

impl Clustering {
    pub fn image_count(&self) -> usize {
        self.clusters.iter().map(|c| c.members.len()).sum()
    }

    /// Write one JSON object per cluster.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), ClusterError> {
        for c in &self.clusters {
            serde_json::to_writer(&mut w, c).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Read clusters written by [`Clustering::write_jsonl`]; noise is stored elsewhere.
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<Cluster>, ClusterError> {
        let mut out = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let c: Cluster = serde_json::from_str(&line).map_err(|e| ClusterError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            out.push(c);
        }
        Ok(out)
    }
}

fn check_params(eps: u32, min_samples: usize) -> Result<(), ClusterError> {
    if eps > 64 {
        return Err(ClusterError::Config(format!("eps must be in [0, 64], got {eps}")));
    }
    if min_samples == 0 {
        return Err(ClusterError::Config("min_samples must be >= 1".into()));
    }
    Ok(())
}

struct UniqueHashes<'a> {
    hashes: Vec<PHash64>,
    /// Sorted ids per unique hash.
    ids: Vec<Vec<&'a str>>,
}

fn group_unique<'a>(hashes: &'a BTreeMap<String, PHash64>) -> UniqueHashes<'a> {
    let mut by_hash: BTreeMap<PHash64, Vec<&'a str>> = BTreeMap::new();
    // BTreeMap iteration is id-sorted, so each id list comes out sorted
    for (id, h) in hashes {
        by_hash.entry(*h).or_default().push(id.as_str());
    }
    let (hashes, ids) = by_hash.into_iter().unzip();
    UniqueHashes { hashes, ids }
}

/// Neighbour lists (indices into `hashes`, self included) through the BK-tree.
pub fn neighbors_indexed(hashes: &[PHash64], eps: u32) -> Vec<Vec<usize>> {
    let tree: BkTree = hashes.iter().copied().zip(0..).collect();
    hashes
        .par_iter()
        .map(|h| {
            let mut n = tree.within(*h, eps);
            n.sort_unstable();
            n
        })
        .collect()
}

/// Quadratic neighbour lists; kept as the reference for the indexed search.
pub fn neighbors_brute(hashes: &[PHash64], eps: u32) -> Vec<Vec<usize>> {
    hashes
        .iter()
        .map(|a| {
            hashes
                .iter()
                .enumerate()
                .filter(|(_, b)| hamming(*a, **b) <= eps)
                .map(|(j, _)| j)
                .collect()
        })
        .collect()
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

pub fn cluster_corpus(
    hashes: &BTreeMap<String, PHash64>,
    eps: u32,
    min_samples: usize,
) -> Result<Clustering, ClusterError> {
    check_params(eps, min_samples)?;
    let uniq = group_unique(hashes);
    let n = uniq.hashes.len();
    let mult: Vec<usize> = uniq.ids.iter().map(Vec::len).collect();
    let neighbors = neighbors_indexed(&uniq.hashes, eps);

    let core: Vec<bool> = neighbors
        .iter()
        .map(|ns| ns.iter().map(|&j| mult[j]).sum::<usize>() >= min_samples)
        .collect();

    let mut parent: Vec<usize> = (0..n).collect();
    for u in (0..n).filter(|&u| core[u]) {
        for &v in neighbors[u].iter().filter(|&&v| core[v]) {
            let (a, b) = (find(&mut parent, u), find(&mut parent, v));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }

    // order core components by smallest core image id
    let mut comp_min: BTreeMap<usize, &str> = BTreeMap::new();
    for u in (0..n).filter(|&u| core[u]) {
        let root = find(&mut parent, u);
        let first = uniq.ids[u][0];
        comp_min
            .entry(root)
            .and_modify(|m| {
                if first < *m {
                    *m = first
                }
            })
            .or_insert(first);
    }
    let mut order: Vec<(usize, &str)> = comp_min.into_iter().collect();
    order.sort_by(|a, b| a.1.cmp(b.1));
    let rank: BTreeMap<usize, usize> = order.iter().enumerate().map(|(r, (root, _))| (*root, r)).collect();

    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); order.len()];
    let mut noise: Vec<String> = Vec::new();
    for u in 0..n {
        let target = if core[u] {
            Some(rank[&find(&mut parent, u)])
        } else {
            neighbors[u]
                .iter()
                .filter(|&&v| core[v])
                .map(|&v| rank[&find(&mut parent, v)])
                .min()
        };
        match target {
            Some(g) => groups[g].push(u),
            None => noise.extend(uniq.ids[u].iter().map(|s| s.to_string())),
        }
    }
    noise.sort();

    let mut clusters: Vec<Cluster> = groups
        .into_iter()
        .map(|members| {
            let mut ids: Vec<String> = members
                .iter()
                .flat_map(|&u| uniq.ids[u].iter().map(|s| s.to_string()))
                .collect();
            ids.sort();
            let weighted: Vec<(PHash64, usize, &str)> =
                members.iter().map(|&u| (uniq.hashes[u], mult[u], uniq.ids[u][0])).collect();
            Cluster {
                id: 0,
                medoid: weighted_medoid(&weighted).to_string(),
                members: ids,
                unique_hashes: members.len(),
            }
        })
        .collect();
    clusters.sort_by(|a, b| a.members[0].cmp(&b.members[0]));
    for (i, c) in clusters.iter_mut().enumerate() {
        c.id = i;
    }
    Ok(Clustering { clusters, noise })
}

/// `(hash, multiplicity, smallest id with that hash)`; non-empty.
fn weighted_medoid<'a>(items: &[(PHash64, usize, &'a str)]) -> &'a str {
    let mut best: Option<(u64, &str)> = None;
    for (h, _, id) in items {
        let total: u64 = items
            .iter()
            .map(|(o, m, _)| hamming(*h, *o) as u64 * *m as u64)
            .sum();
        best = match best {
            Some((bt, bid)) if bt < total || (bt == total && bid <= *id) => Some((bt, bid)),
            _ => Some((total, id)),
        };
    }
    best.expect("non-empty cluster").1
}

/// Member minimising the mean Hamming distance to all members; ties go to the smallest id.
pub fn medoid(members: &[(String, PHash64)]) -> Result<String, ClusterError> {
    if members.is_empty() {
        return Err(ClusterError::EmptyCluster);
    }
    let mut by_hash: BTreeMap<PHash64, (usize, &str)> = BTreeMap::new();
    for (id, h) in members {
        by_hash
            .entry(*h)
            .and_modify(|(m, first)| {
                *m += 1;
                if id.as_str() < *first {
                    *first = id.as_str();
                }
            })
            .or_insert((1, id.as_str()));
    }
    let items: Vec<(PHash64, usize, &str)> = by_hash.into_iter().map(|(h, (m, id))| (h, m, id)).collect();
    Ok(weighted_medoid(&items).to_string())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub cluster_count: usize,
    pub image_count: usize,
    pub noise_count: usize,
    pub mean_unique_per_cluster: f64,
    pub median_unique_per_cluster: f64,
    pub mean_images_per_cluster: f64,
    /// `(unique hashes, fraction of clusters with at most that many)`.
    pub unique_per_cluster_cdf: Vec<(usize, f64)>,
    pub images_per_cluster_cdf: Vec<(usize, f64)>,
}

fn cdf(values: &[usize]) -> Vec<(usize, f64)> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(*v).or_default() += 1;
    }
    let n = values.len() as f64;
    let mut acc = 0;
    counts
        .into_iter()
        .map(|(v, c)| {
            acc += c;
            (v, acc as f64 / n)
        })
        .collect()
}

fn median(sorted: &[usize]) -> f64 {
    match sorted.len() {
        0 => 0.0,
        n if n % 2 == 1 => sorted[n / 2] as f64,
        n => (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0,
    }
}

pub fn cluster_stats(clustering: &Clustering) -> ClusterStats {
    let mut unique: Vec<usize> = clustering.clusters.iter().map(|c| c.unique_hashes).collect();
    unique.sort_unstable();
    let sizes: Vec<usize> = clustering.clusters.iter().map(|c| c.members.len()).collect();
    let k = unique.len();
    let mean = |v: &[usize]| if v.is_empty() { 0.0 } else { v.iter().sum::<usize>() as f64 / v.len() as f64 };
    ClusterStats {
        cluster_count: k,
        image_count: clustering.image_count(),
        noise_count: clustering.noise.len(),
        mean_unique_per_cluster: mean(&unique),
        median_unique_per_cluster: median(&unique),
        mean_images_per_cluster: mean(&sizes),
        unique_per_cluster_cdf: cdf(&unique),
        images_per_cluster_cdf: cdf(&sizes),
    }
}

impl ClusterStats {
    /// One-line summary, e.g. `78,624 clusters containing 753,634 images; unique images per cluster: mean 1.8, median 1`.
    pub fn summary_line(&self) -> String {
        format!(
            "{} clusters containing {} images; unique images per cluster: mean {:.1}, median {}",
            crate::report::thousands(self.cluster_count as u64),
            crate::report::thousands(self.image_count as u64),
            self.mean_unique_per_cluster,
            self.median_unique_per_cluster
        )
    }
}
