//! Louvain modularity optimisation (resolution 1).

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Partition, WeightedGraph};

/// A level (or a local-move pass) must raise modularity by more than this to continue.
pub const LOUVAIN_MIN_GAIN: f64 = 1e-7;

/// Symmetric weighted adjacency with self-loops kept apart; `self_w[i]` is
/// `A_ii` (twice the internal edge weight after aggregation).
struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    self_w: Vec<f64>,
}

impl Level {
    fn n(&self) -> usize {
        self.adj.len()
    }

    fn strength(&self, i: usize) -> f64 {
        self.self_w[i] + self.adj[i].iter().map(|(_, w)| w).sum::<f64>()
    }

    fn modularity(&self, comm: &[usize], m2: f64) -> f64 {
        let k = comm.iter().max().map_or(0, |c| c + 1);
        let mut inside = vec![0.0; k];
        let mut tot = vec![0.0; k];
        for i in 0..self.n() {
            tot[comm[i]] += self.strength(i);
            inside[comm[i]] += self.self_w[i];
            for &(j, w) in &self.adj[i] {
                if comm[j] == comm[i] {
                    inside[comm[i]] += w;
                }
            }
        }
        (0..k).map(|c| inside[c] / m2 - (tot[c] / m2).powi(2)).sum()
    }

    /// Repeated local-move passes; returns the community of each node.
    fn local_moves(&self, order: &[usize], m2: f64) -> Vec<usize> {
        let n = self.n();
        let strength: Vec<f64> = (0..n).map(|i| self.strength(i)).collect();
        let mut comm: Vec<usize> = (0..n).collect();
        let mut tot = strength.clone();
        let mut q = self.modularity(&comm, m2);
        let mut links: BTreeMap<usize, f64> = BTreeMap::new();
        loop {
            let mut moved = false;
            for &i in order {
                let own = comm[i];
                links.clear();
                links.insert(own, 0.0);
                for &(j, w) in &self.adj[i] {
                    *links.entry(comm[j]).or_insert(0.0) += w;
                }
                tot[own] -= strength[i];
                let gain = |c: usize, w_ic: f64| w_ic - tot[c] * strength[i] / m2;
                let mut best = own;
                let mut best_gain = gain(own, links[&own]);
                for (&c, &w_ic) in &links {
                    let g = gain(c, w_ic);
                    if g > best_gain + 1e-12 {
                        best = c;
                        best_gain = g;
                    }
                }
                tot[best] += strength[i];
                if best != own {
                    comm[i] = best;
                    moved = true;
                }
            }
            let q_new = self.modularity(&comm, m2);
            if !moved || q_new - q < LOUVAIN_MIN_GAIN {
                break;
            }
            q = q_new;
        }
        comm
    }

    fn aggregate(&self, comm: &[usize], k: usize) -> Level {
        let mut self_w = vec![0.0; k];
        let mut maps: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); k];
        for i in 0..self.n() {
            let ci = comm[i];
            self_w[ci] += self.self_w[i];
            for &(j, w) in &self.adj[i] {
                let cj = comm[j];
                if ci == cj {
                    self_w[ci] += w;
                } else {
                    *maps[ci].entry(cj).or_insert(0.0) += w;
                }
            }
        }
        Level {
            adj: maps.into_iter().map(|m| m.into_iter().collect()).collect(),
            self_w,
        }
    }
}

/// Relabel to `0..k` in order of first appearance.
fn compact(comm: &mut [usize]) -> usize {
    let mut map: BTreeMap<usize, usize> = BTreeMap::new();
    let mut next = 0;
    for c in comm.iter_mut() {
        let id = *map.entry(*c).or_insert_with(|| {
            next += 1;
            next - 1
        });
        *c = id;
    }
    next
}

/// Weighted modularity of a community assignment (`comm[i]` for node `i`).
/// Zero for an edgeless graph.
pub fn modularity(graph: &WeightedGraph, comm: &[usize]) -> f64 {
    let level = Level {
        adj: graph.adjacency(),
        self_w: vec![0.0; graph.node_count()],
    };
    let m2 = 2.0 * graph.edges().iter().map(|e| e.weight).sum::<f64>();
    if m2 == 0.0 {
        return 0.0;
    }
    level.modularity(comm, m2)
}

/// Louvain community detection. The node visiting order at each level is a
/// permutation drawn from `seed`, so equal seeds give equal partitions.
pub fn louvain(graph: &WeightedGraph, seed: u64) -> Partition {
    let n = graph.node_count();
    let m2 = 2.0 * graph.edges().iter().map(|e| e.weight).sum::<f64>();
    let mut assignment: Vec<usize> = (0..n).collect();

    if m2 > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut level = Level {
            adj: graph.adjacency(),
            self_w: vec![0.0; n],
        };
        let mut q = level.modularity(&(0..n).collect::<Vec<_>>(), m2);
        loop {
            let mut order: Vec<usize> = (0..level.n()).collect();
            order.shuffle(&mut rng);
            let mut comm = level.local_moves(&order, m2);
            let k = compact(&mut comm);
            let q_new = level.modularity(&comm, m2);
            if k == level.n() || q_new - q < LOUVAIN_MIN_GAIN {
                break;
            }
            for a in assignment.iter_mut() {
                *a = comm[*a];
            }
            level = level.aggregate(&comm, k);
            q = q_new;
        }
    }
    compact(&mut assignment);
    let modularity = modularity(graph, &assignment);
    Partition {
        community_of: graph
            .nodes()
            .iter()
            .zip(&assignment)
            .map(|(node, c)| (node.id.clone(), *c))
            .collect(),
        modularity,
    }
}
