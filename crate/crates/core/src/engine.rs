//! End-to-end pipeline and the analyses built on it.
//!
//! `normalize` turns records into affinities, `solve_affinity` picks the
//! optimal taxonomy for one configuration, and the remaining functions sweep
//! or perturb that solve: budget/order grids, single-target localization and
//! comparison against random feasible policies.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ahp::{self, assemble_affinity, AffinityMatrix, TargetEigenvector};
use crate::bip::{build_instance, solve, CostMode, SolveStatus, SolverConfig, TOLERANCE};
use crate::domain::{EvaluationRecordStore, TaskDictionary, TaskId, TransferEdge};
use crate::error::{Error, Result};
use crate::sampler::{cross_edges_into, higher_order_edges, rank_sources, SamplerConfig};
use crate::taxonomy::{extract_taxonomy, PolicyEntry, Taxonomy, TaxonomyConfig};
use crate::FORMAT_VERSION;

/// Rejection-sampling attempts per random policy.
pub const RANDOM_POLICY_MAX_ATTEMPTS: usize = 10_000;

/// How first-order coverage is checked during normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Coverage {
    /// Every source must have a first-order record for every target.
    Full,
    /// Only sources with records compete.
    Recorded,
}

/// Affinities for every target of `dict`.
///
/// Each target first plays a tournament among its first-order cross edges to
/// rank its sources. The beam over that ranking yields higher-order
/// candidates; those with records join the first-order edges and the
/// self-edge (when recorded) in one final tournament whose eigenvector is the
/// target's affinity row.
pub fn normalize(
    store: &EvaluationRecordStore,
    dict: &TaskDictionary,
    cfg: &SamplerConfig,
) -> Result<AffinityMatrix> {
    normalize_with(store, dict, cfg, Coverage::Full)
}

fn normalize_with(
    store: &EvaluationRecordStore,
    dict: &TaskDictionary,
    cfg: &SamplerConfig,
    coverage: Coverage,
) -> Result<AffinityMatrix> {
    cfg.validate()?;
    if store.is_empty() {
        return Err(Error::Schema("record store is empty".into()));
    }
    let targets: Vec<&TaskId> = dict.targets().collect();
    let rows = targets
        .par_iter()
        .map(|t| normalize_target(store, dict, t, cfg, coverage))
        .collect::<Result<Vec<_>>>()?;
    assemble_affinity(dict, rows)
}

fn normalize_target(
    store: &EvaluationRecordStore,
    dict: &TaskDictionary,
    target: &TaskId,
    cfg: &SamplerConfig,
    coverage: Coverage,
) -> Result<TargetEigenvector> {
    let group = store
        .target(target)
        .ok_or_else(|| Error::MissingTarget(target.to_string()))?;
    let mut cross = cross_edges_into(dict, target);
    match coverage {
        Coverage::Full => {
            if let Some(e) = cross.iter().find(|e| !group.contains(e)) {
                return Err(Error::MissingCompetitor(e.to_string()));
            }
        }
        Coverage::Recorded => cross.retain(|e| group.contains(e)),
    }

    let mut competitors: Vec<TransferEdge> = cross.clone();
    let self_edge = TransferEdge::self_edge(target.clone());
    if dict.is_source(target) && group.contains(&self_edge) {
        competitors.push(self_edge);
    }
    if cfg.max_order > 1 && !cross.is_empty() {
        let first = ahp::target_affinities(store, target, &cross)?;
        let ranking = rank_sources(cross.iter().zip(first), target)?;
        let ranked = BTreeMap::from([(target.clone(), ranking)]);
        competitors.extend(
            higher_order_edges(&ranked, cfg)?
                .into_iter()
                .filter(|e| group.contains(e)),
        );
    }
    if competitors.is_empty() {
        return Err(Error::MissingTarget(target.to_string()));
    }
    competitors.sort();
    let eigenvector = ahp::target_affinities(store, target, &competitors)?;
    Ok(TargetEigenvector {
        target: target.clone(),
        competitors,
        eigenvector,
    })
}

/// Candidate edges of `affinity` usable under `dict` up to `max_order`.
pub fn candidate_edges(
    affinity: &AffinityMatrix,
    dict: &TaskDictionary,
    max_order: usize,
) -> Result<Vec<TransferEdge>> {
    let mut edges = Vec::new();
    for t in dict.targets() {
        let row = affinity
            .target(t)
            .ok_or_else(|| Error::MissingTarget(t.to_string()))?;
        for entry in row.iter().filter(|e| e.edge.order() <= max_order) {
            entry.edge.validate(dict, None)?;
            edges.push(entry.edge.clone());
        }
    }
    Ok(edges)
}

/// Optimal taxonomy over the candidates of order at most `max_order`.
pub fn solve_affinity(
    affinity: &AffinityMatrix,
    dict: &TaskDictionary,
    max_order: usize,
    cfg: &SolverConfig,
) -> Result<Taxonomy> {
    if max_order < 1 {
        return Err(Error::InvalidConfig("max_order must be at least 1".into()));
    }
    let edges = candidate_edges(affinity, dict, max_order)?;
    let inst = build_instance(affinity, dict, &edges, cfg)?;
    let sol = solve(&inst);
    if sol.status == SolveStatus::Infeasible {
        return Err(Error::Infeasible { budget: cfg.budget });
    }
    extract_taxonomy(&sol, &inst, dict, TaxonomyConfig::snapshot(dict, cfg, max_order))
}

/// Normalize, enumerate, build, solve and extract in one call.
pub fn solve_policy(
    store: &EvaluationRecordStore,
    dict: &TaskDictionary,
    sampler: &SamplerConfig,
    solver: &SolverConfig,
) -> Result<Taxonomy> {
    let affinity = normalize(store, dict, sampler)?;
    solve_affinity(&affinity, dict, sampler.max_order, solver)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyCell {
    pub budget: f64,
    pub max_order: usize,
    /// `None` when the budget admits no feasible taxonomy.
    pub taxonomy: Option<Taxonomy>,
}

/// One taxonomy per `(budget, order)` pair, ordered by order then budget.
pub fn taxonomy_family(
    affinity: &AffinityMatrix,
    dict: &TaskDictionary,
    budgets: &[f64],
    orders: &[usize],
    base: &SolverConfig,
) -> Result<Vec<FamilyCell>> {
    let cells: Vec<(usize, f64)> = orders
        .iter()
        .flat_map(|&o| budgets.iter().map(move |&b| (o, b)))
        .collect();
    cells
        .par_iter()
        .map(|&(max_order, budget)| {
            let cfg = SolverConfig {
                budget,
                ..base.clone()
            };
            let taxonomy = match solve_affinity(affinity, dict, max_order, &cfg) {
                Ok(t) => Some(t),
                Err(Error::Infeasible { .. }) => None,
                Err(e) => return Err(e),
            };
            Ok(FamilyCell {
                budget,
                max_order,
                taxonomy,
            })
        })
        .collect()
}

pub fn family_summary_csv(cells: &[FamilyCell]) -> String {
    let mut out = String::from("budget,max_order,status,objective,sources\n");
    for cell in cells {
        match &cell.taxonomy {
            Some(t) => out.push_str(&format!(
                "{},{},optimal,{},{}\n",
                cell.budget,
                cell.max_order,
                t.objective,
                t.sources.iter().map(TaskId::as_str).collect::<Vec<_>>().join("+")
            )),
            None => out.push_str(&format!("{},{},infeasible,,\n", cell.budget, cell.max_order)),
        }
    }
    out
}

/// Solves for a single out-of-dictionary target against the existing
/// sources. `records` must already be ingested against the dictionary
/// returned by [`novel_task_dictionary`].
pub fn localize_novel_task(
    records: &EvaluationRecordStore,
    local_dict: &TaskDictionary,
    sampler: &SamplerConfig,
    solver: &SolverConfig,
) -> Result<(AffinityMatrix, Taxonomy)> {
    let target = local_dict
        .targets()
        .next()
        .cloned()
        .ok_or(Error::NoTargets)?;
    if local_dict.targets().count() != 1 {
        return Err(Error::InvalidConfig("localization needs exactly one target".into()));
    }
    if records.target(&target).is_none() {
        return Err(Error::MissingTarget(target.to_string()));
    }
    let affinity = normalize_with(records, local_dict, sampler, Coverage::Recorded)?;
    let taxonomy = solve_affinity(&affinity, local_dict, sampler.max_order, solver)?;
    Ok((affinity, taxonomy))
}

/// The existing sources (as source-only tasks) plus `target` as the only,
/// target-only task.
pub fn novel_task_dictionary(dict: &TaskDictionary, target: &TaskId) -> Result<TaskDictionary> {
    if dict.get(target).is_some() {
        return Err(Error::DuplicateTask(target.to_string()));
    }
    let specs = dict
        .specs()
        .into_iter()
        .filter(|s| s.source)
        .map(|mut s| {
            s.target = false;
            s
        })
        .chain(std::iter::once(crate::domain::TaskSpec {
            name: target.to_string(),
            source: false,
            target: true,
        }));
    TaskDictionary::new(specs)
}

/// Budget consumed by choosing `edges` under `cfg`.
pub fn policy_cost<'a>(edges: impl IntoIterator<Item = &'a TransferEdge>, cfg: &SolverConfig) -> f64 {
    match cfg.cost_mode {
        CostMode::Nodes => {
            let nodes: BTreeSet<&TaskId> = edges.into_iter().flat_map(|e| e.sources()).collect();
            nodes.into_iter().map(|s| cfg.cost_of(s)).sum()
        }
        CostMode::Edges => edges.into_iter().map(|e| cfg.edge_cost(e)).sum(),
    }
}

/// Uniform edge per target, accepted when the induced cost fits the budget.
pub fn sample_random_policy(
    affinity: &AffinityMatrix,
    dict: &TaskDictionary,
    max_order: usize,
    cfg: &SolverConfig,
    rng: &mut impl Rng,
) -> Result<Taxonomy> {
    cfg.validate(dict)?;
    let mut options: Vec<(&TaskId, Vec<(&TransferEdge, f64)>)> = Vec::new();
    for t in dict.targets() {
        let row = affinity
            .target(t)
            .ok_or_else(|| Error::MissingTarget(t.to_string()))?;
        let edges: Vec<(&TransferEdge, f64)> = row
            .iter()
            .filter(|e| e.edge.order() <= max_order)
            .map(|e| (&e.edge, e.p))
            .collect();
        if edges.is_empty() {
            return Err(Error::Infeasible { budget: cfg.budget });
        }
        options.push((t, edges));
    }
    options.sort_by(|a, b| a.0.cmp(b.0));

    for _ in 0..RANDOM_POLICY_MAX_ATTEMPTS {
        let picks: Vec<(&TaskId, &TransferEdge, f64)> = options
            .iter()
            .map(|(t, edges)| {
                let (e, p) = edges[rng.gen_range(0..edges.len())];
                (*t, e, p)
            })
            .collect();
        if policy_cost(picks.iter().map(|(_, e, _)| *e), cfg) > cfg.budget + TOLERANCE {
            continue;
        }
        let mut sources: Vec<TaskId> = picks
            .iter()
            .flat_map(|(_, e, _)| e.sources().iter().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        sources.sort();
        let objective = picks.iter().map(|(t, _, p)| cfg.importance_of(t) * p).sum();
        let policy = picks
            .into_iter()
            .map(|(t, e, p)| (t.clone(), PolicyEntry { edge: e.clone(), p }))
            .collect();
        return Ok(Taxonomy {
            sources,
            policy,
            objective,
            config: TaxonomyConfig::snapshot(dict, cfg, max_order),
            node_count: 0,
        });
    }
    Err(Error::SamplingCap(RANDOM_POLICY_MAX_ATTEMPTS))
}

/// RNG for random sample `index`: one ChaCha stream per sample off a shared
/// seed, so results do not depend on scheduling.
pub fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub format_version: u32,
    pub budget: f64,
    pub max_order: usize,
    pub seed: u64,
    pub optimal_objective: f64,
    pub sample_count: usize,
    pub random_objectives: Vec<f64>,
    pub p5: Option<f64>,
    pub p95: Option<f64>,
    pub mean: Option<f64>,
    pub max: Option<f64>,
}

impl SignificanceReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample,objective\n");
        for (i, v) in self.random_objectives.iter().enumerate() {
            out.push_str(&format!("{i},{v}\n"));
        }
        out
    }
}

/// Linear interpolation between closest ranks of a sorted sample.
pub fn percentile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

const PROGRESS_CHUNK: usize = 100;

/// Optimal objective against `samples` random feasible policies.
pub fn significance_test(
    affinity: &AffinityMatrix,
    dict: &TaskDictionary,
    max_order: usize,
    cfg: &SolverConfig,
    samples: usize,
    seed: u64,
) -> Result<SignificanceReport> {
    significance_test_with_progress(affinity, dict, max_order, cfg, samples, seed, |_| {})
}

/// As [`significance_test`], calling `progress` with the number of samples
/// drawn so far after every chunk.
pub fn significance_test_with_progress(
    affinity: &AffinityMatrix,
    dict: &TaskDictionary,
    max_order: usize,
    cfg: &SolverConfig,
    samples: usize,
    seed: u64,
    mut progress: impl FnMut(usize),
) -> Result<SignificanceReport> {
    let optimal = solve_affinity(affinity, dict, max_order, cfg)?;
    let mut random_objectives = Vec::with_capacity(samples);
    let indices: Vec<usize> = (0..samples).collect();
    for chunk in indices.chunks(PROGRESS_CHUNK) {
        let values = chunk
            .par_iter()
            .map(|&i| {
                let mut rng = sample_rng(seed, i);
                sample_random_policy(affinity, dict, max_order, cfg, &mut rng).map(|t| t.objective)
            })
            .collect::<Result<Vec<f64>>>()?;
        random_objectives.extend(values);
        progress(random_objectives.len());
    }
    let mut sorted = random_objectives.clone();
    sorted.sort_by(f64::total_cmp);
    let mean = (!sorted.is_empty()).then(|| sorted.iter().sum::<f64>() / sorted.len() as f64);
    Ok(SignificanceReport {
        format_version: FORMAT_VERSION,
        budget: cfg.budget,
        max_order,
        seed,
        optimal_objective: optimal.objective,
        sample_count: samples,
        p5: percentile(&sorted, 0.05),
        p95: percentile(&sorted, 0.95),
        mean,
        max: sorted.last().copied(),
        random_objectives,
    })
}
