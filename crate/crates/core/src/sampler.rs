//! Candidate transfer enumeration.
//!
//! First-order edges cover every source/target pair. Higher-order edges are
//! filtered by a beam over each target's first-order ranking: orders 2..=4
//! take every combination of the `beam_width` best sources, orders 5 and up
//! take only the prefix of the `k` best sources.

use std::collections::BTreeMap;

use log::warn;

use crate::domain::{TaskDictionary, TaskId, TransferEdge};
use crate::error::{Error, Result};

/// Highest order enumerated by full combinations of the beam.
pub const COMBINATION_MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerConfig {
    pub max_order: usize,
    pub beam_width: usize,
    pub high_order_beam: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            max_order: 1,
            beam_width: 5,
            high_order_beam: 1,
        }
    }
}

impl SamplerConfig {
    pub fn with_max_order(max_order: usize) -> Self {
        SamplerConfig {
            max_order,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_order < 1 {
            return Err(Error::InvalidConfig("max_order must be at least 1".into()));
        }
        if self.beam_width < 1 {
            return Err(Error::InvalidConfig("beam_width must be at least 1".into()));
        }
        if self.high_order_beam != 1 {
            return Err(Error::InvalidConfig(
                "only a beam of size 1 is supported above order 4".into(),
            ));
        }
        Ok(())
    }
}

/// Every `({s}, t)` with `s` a source and `t` a target, `s != t`, plus the
/// self-edge `({t}, t)` for targets that are also sources. Sorted canonically.
pub fn first_order_edges(dict: &TaskDictionary) -> Vec<TransferEdge> {
    let mut edges = Vec::new();
    for t in dict.targets() {
        for s in dict.sources() {
            if s == t {
                edges.push(TransferEdge::self_edge(t.clone()));
            } else {
                edges.push(TransferEdge::new([s.clone()], t.clone()).expect("distinct tasks"));
            }
        }
    }
    edges.sort();
    edges
}

/// First-order cross edges into `target` (no self-edge).
pub fn cross_edges_into(dict: &TaskDictionary, target: &TaskId) -> Vec<TransferEdge> {
    let mut edges: Vec<TransferEdge> = dict
        .sources()
        .filter(|s| *s != target)
        .map(|s| TransferEdge::new([s.clone()], target.clone()).expect("distinct tasks"))
        .collect();
    edges.sort();
    edges
}

/// Sources of `target` by descending first-order affinity, ties broken by
/// task name. The self-edge is never ranked.
pub fn rank_sources<'a>(
    affinities: impl IntoIterator<Item = (&'a TransferEdge, f64)>,
    target: &TaskId,
) -> Result<Vec<TaskId>> {
    let mut ranked: Vec<(TaskId, f64)> = affinities
        .into_iter()
        .filter(|(e, _)| e.target() == target && e.order() == 1 && !e.is_self_edge())
        .map(|(e, p)| (e.sources()[0].clone(), p))
        .collect();
    if ranked.is_empty() {
        return Err(Error::MissingTarget(target.to_string()));
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ranked.into_iter().map(|(s, _)| s).collect())
}

/// Higher-order candidates (orders `2..=max_order`) for every ranked target.
/// Orders that need more sources than a target has are skipped with a warning.
pub fn higher_order_edges(
    ranked: &BTreeMap<TaskId, Vec<TaskId>>,
    cfg: &SamplerConfig,
) -> Result<Vec<TransferEdge>> {
    cfg.validate()?;
    let mut edges = Vec::new();
    for (target, sources) in ranked {
        for k in 2..=cfg.max_order {
            let pool = if k <= COMBINATION_MAX_ORDER {
                cfg.beam_width
            } else {
                k
            };
            if sources.len() < k || pool < k {
                warn!(
                    "skipping order-{k} candidates for `{target}`: {} ranked sources, beam {pool}",
                    sources.len()
                );
                continue;
            }
            let top = &sources[..pool.min(sources.len())];
            if k <= COMBINATION_MAX_ORDER {
                for combo in combinations(top.len(), k) {
                    let chosen = combo.iter().map(|&i| top[i].clone());
                    edges.push(TransferEdge::new(chosen, target.clone())?);
                }
            } else {
                edges.push(TransferEdge::new(top[..k].iter().cloned(), target.clone())?);
            }
        }
    }
    edges.sort();
    edges.dedup();
    Ok(edges)
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub(crate) fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Newline-delimited `src1+src2->target` lines.
pub fn edges_to_text(edges: &[TransferEdge]) -> String {
    edges.iter().map(|e| format!("{e}\n")).collect()
}

pub fn edges_from_text(text: &str) -> Result<Vec<TransferEdge>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let (sources, target) = line
                .split_once("->")
                .ok_or_else(|| Error::Schema(format!("malformed edge line `{line}`")))?;
            let sources = sources
                .split('+')
                .map(|s| TaskId::new(s.trim()))
                .collect::<Result<Vec<_>>>()?;
            TransferEdge::new(sources, TaskId::new(target.trim())?)
        })
        .collect()
}
