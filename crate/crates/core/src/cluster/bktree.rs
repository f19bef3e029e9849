//! Burkhard-Keller tree over 64-bit hashes under the Hamming metric.

use crate::phash::{hamming, PHash64};

#[derive(Debug, Clone)]
struct Node {
    hash: PHash64,
    /// Caller-supplied payload index.
    item: usize,
    children: Vec<(u32, usize)>,
}

/// Exact range index: `within(q, r)` returns every inserted item at distance `<= r`.
#[derive(Debug, Clone, Default)]
pub struct BkTree {
    nodes: Vec<Node>,
}

impl BkTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn insert(&mut self, hash: PHash64, item: usize) {
        let new_idx = self.nodes.len();
        self.nodes.push(Node {
            hash,
            item,
            children: Vec::new(),
        });
        if new_idx == 0 {
            return;
        }
        let mut cur = 0;
        loop {
            let d = hamming(self.nodes[cur].hash, hash);
            match self.nodes[cur].children.iter().find(|(cd, _)| *cd == d) {
                Some(&(_, next)) => cur = next,
                None => {
                    self.nodes[cur].children.push((d, new_idx));
                    return;
                }
            }
        }
    }

    /// Items within `radius` of `query`, in unspecified order.
    pub fn within(&self, query: PHash64, radius: u32) -> Vec<usize> {
        let mut out = Vec::new();
        if self.nodes.is_empty() {
            return out;
        }
        let mut stack = vec![0usize];
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx];
            let d = hamming(node.hash, query);
            if d <= radius {
                out.push(node.item);
            }
            let lo = d.saturating_sub(radius);
            let hi = d + radius;
            stack.extend(
                node.children
                    .iter()
                    .filter(|(cd, _)| *cd >= lo && *cd <= hi)
                    .map(|&(_, c)| c),
            );
        }
        out
    }
}

impl FromIterator<(PHash64, usize)> for BkTree {
    fn from_iter<I: IntoIterator<Item = (PHash64, usize)>>(iter: I) -> Self {
        let mut t = BkTree::new();
        for (h, i) in iter {
            t.insert(h, i);
        }
        t
    }
}
