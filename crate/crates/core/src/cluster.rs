//! Task similarity tree from transfer-out affinity columns.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ahp::AffinityMatrix;
use crate::domain::TaskId;
use crate::error::{Error, Result};
use crate::FORMAT_VERSION;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    /// Cluster ids: `0..leaves.len()` are leaves, `leaves.len() + k` is merge `k`.
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub format_version: u32,
    /// Leaves sorted by name.
    pub leaves: Vec<TaskId>,
    pub merges: Vec<Merge>,
}

/// Transfer-out feature vector of every source: its first-order affinity
/// towards each target, renormalized over the target's cross edges. A task's
/// entry towards itself is 0.
pub fn transfer_out_columns(affinity: &AffinityMatrix) -> BTreeMap<TaskId, Vec<f64>> {
    let n = affinity.targets().count();
    let mut columns: BTreeMap<TaskId, Vec<f64>> = BTreeMap::new();
    for (j, (_, row)) in affinity.targets().enumerate() {
        let cross: Vec<_> = row
            .iter()
            .filter(|e| e.edge.order() == 1 && !e.edge.is_self_edge())
            .collect();
        let total: f64 = cross.iter().map(|e| e.p).sum();
        for entry in cross {
            let source = &entry.edge.sources()[0];
            columns
                .entry(source.clone())
                .or_insert_with(|| vec![0.0; n])[j] = entry.p / total;
        }
    }
    columns
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Average-linkage agglomerative clustering of transfer-out columns under
/// Euclidean distance. Among equally close pairs, the pair whose cluster
/// names (smallest leaf name) sort first is merged.
pub fn similarity_tree(affinity: &AffinityMatrix) -> Result<Dendrogram> {
    let columns = transfer_out_columns(affinity);
    if columns.len() < 2 {
        return Err(Error::TooFewTasks(columns.len()));
    }
    let leaves: Vec<TaskId> = columns.keys().cloned().collect();
    let features: Vec<&Vec<f64>> = columns.values().collect();
    Ok(average_linkage(leaves, &features))
}

pub(crate) fn average_linkage(leaves: Vec<TaskId>, features: &[&Vec<f64>]) -> Dendrogram {
    let n = leaves.len();
    // Active clusters: (id, name, size, height).
    let mut active: Vec<(usize, TaskId, usize, f64)> = leaves
        .iter()
        .enumerate()
        .map(|(i, name)| (i, name.clone(), 1, 0.0))
        .collect();
    let mut dist: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for i in 0..n {
        for j in (i + 1)..n {
            dist.insert((i, j), euclidean(features[i], features[j]));
        }
    }
    let key = |a: usize, b: usize| if a < b { (a, b) } else { (b, a) };

    let mut merges = Vec::with_capacity(n - 1);
    while active.len() > 1 {
        let mut best: Option<(f64, (&TaskId, &TaskId), usize, usize)> = None;
        for x in 0..active.len() {
            for y in (x + 1)..active.len() {
                let d = dist[&key(active[x].0, active[y].0)];
                let names = if active[x].1 <= active[y].1 {
                    (&active[x].1, &active[y].1)
                } else {
                    (&active[y].1, &active[x].1)
                };
                let better = match &best {
                    None => true,
                    Some((bd, bn, _, _)) => d < *bd || (d == *bd && names < *bn),
                };
                if better {
                    best = Some((d, names, x, y));
                }
            }
        }
        let (d, _, x, y) = best.expect("at least two clusters");
        let (a, b) = (active[x].clone(), active[y].clone());
        let (left, right) = if a.1 <= b.1 { (a, b) } else { (b, a) };
        let id = n + merges.len();
        let size = left.2 + right.2;
        let height = d.max(left.3).max(right.3);
        merges.push(Merge {
            left: left.0,
            right: right.0,
            height,
            size,
        });
        active.retain(|c| c.0 != left.0 && c.0 != right.0);
        for other in &active {
            let dl = dist[&key(other.0, left.0)];
            let dr = dist[&key(other.0, right.0)];
            let merged = (left.2 as f64 * dl + right.2 as f64 * dr) / size as f64;
            dist.insert(key(other.0, id), merged);
        }
        active.push((id, left.1.clone(), size, height));
    }
    Dendrogram {
        format_version: FORMAT_VERSION,
        leaves,
        merges,
    }
}

impl Dendrogram {
    pub fn height_of(&self, id: usize) -> f64 {
        if id < self.leaves.len() {
            0.0
        } else {
            self.merges[id - self.leaves.len()].height
        }
    }

    /// Leaf names under cluster `id`, sorted.
    pub fn members(&self, id: usize) -> Vec<&TaskId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(c) = stack.pop() {
            if c < self.leaves.len() {
                out.push(&self.leaves[c]);
            } else {
                let m = &self.merges[c - self.leaves.len()];
                stack.push(m.left);
                stack.push(m.right);
            }
        }
        out.sort();
        out
    }

    pub fn to_newick(&self) -> String {
        let root = self.leaves.len() + self.merges.len() - 1;
        let mut out = String::new();
        self.write_newick(root, None, &mut out);
        out.push_str(";\n");
        out
    }

    fn write_newick(&self, id: usize, parent_height: Option<f64>, out: &mut String) {
        if id < self.leaves.len() {
            out.push_str(&newick_label(self.leaves[id].as_str()));
        } else {
            let m = &self.merges[id - self.leaves.len()];
            out.push('(');
            self.write_newick(m.left, Some(m.height), out);
            out.push(',');
            self.write_newick(m.right, Some(m.height), out);
            out.push(')');
        }
        if let Some(h) = parent_height {
            out.push_str(&format!(":{}", h - self.height_of(id)));
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dendrogram serializes") + "\n"
    }
}

fn newick_label(name: &str) -> String {
    let plain = name
        .chars()
        .all(|c| !c.is_whitespace() && !"(),:;'[]".contains(c));
    if plain {
        name.to_string()
    } else {
        format!("'{}'", name.replace('\'', "''"))
    }
}
