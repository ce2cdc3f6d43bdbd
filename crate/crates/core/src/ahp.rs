//! Ordinal normalization of transfer evaluations.
//!
//! For each target, the candidate transfers play a pairwise tournament on the
//! shared test images. The clipped win-fraction matrix is turned into a
//! positive reciprocal ratio matrix whose Perron eigenvector, normalized to
//! sum to one, is the affinity of each candidate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{
    check_format_version, default_format_version, EvaluationRecordStore, TaskDictionary, TaskId,
    TransferEdge,
};
use crate::error::{Error, Result};
use crate::FORMAT_VERSION;

/// Lower clip bound of tournament entries.
pub const CLIP_LOW: f64 = 0.001;
/// Upper clip bound of tournament entries.
pub const CLIP_HIGH: f64 = 0.999;
/// Default sharpness of the affinity-to-distance transform.
pub const DEFAULT_BETA: f64 = 20.0;

pub const POWER_TOLERANCE: f64 = 1e-12;
pub const POWER_MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TournamentMatrix {
    target: TaskId,
    competitors: Vec<TransferEdge>,
    /// Row-major `n x n` win fractions.
    wins: Vec<f64>,
    /// Row-major `n x n` tie fractions (undefined on the diagonal).
    ties: Vec<f64>,
}

impl TournamentMatrix {
    pub fn target(&self) -> &TaskId {
        &self.target
    }

    pub fn competitors(&self) -> &[TransferEdge] {
        &self.competitors
    }

    pub fn len(&self) -> usize {
        self.competitors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.competitors.is_empty()
    }

    /// Fraction of images on which competitor `i` beat competitor `j`.
    pub fn win(&self, i: usize, j: usize) -> f64 {
        self.wins[i * self.len() + j]
    }

    pub fn tie(&self, i: usize, j: usize) -> f64 {
        self.ties[i * self.len() + j]
    }
}

/// Counts, for every ordered pair of competitors, the fraction of images on
/// which the first scored strictly higher. Ties count for neither side; the
/// diagonal is fixed at 0.5.
pub fn build_tournament(
    store: &EvaluationRecordStore,
    target: &TaskId,
    competitors: &[TransferEdge],
) -> Result<TournamentMatrix> {
    let group = store
        .target(target)
        .ok_or_else(|| Error::MissingTarget(target.to_string()))?;
    let images = group.images().len();
    if images == 0 {
        return Err(Error::EmptyImageSet(target.to_string()));
    }
    let columns = competitors
        .iter()
        .map(|e| {
            if e.target() != target {
                return Err(Error::InvalidEdge {
                    edge: e.to_string(),
                    reason: format!("does not transfer to `{target}`"),
                });
            }
            group
                .scores(e)
                .ok_or_else(|| Error::MissingCompetitor(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = competitors.len();
    let total = images as f64;
    let mut wins = vec![0.5; n * n];
    let mut ties = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let (mut gt, mut lt) = (0usize, 0usize);
            for (a, b) in columns[i].iter().zip(columns[j]) {
                if a > b {
                    gt += 1;
                } else if a < b {
                    lt += 1;
                }
            }
            let tie = (images - gt - lt) as f64 / total;
            wins[i * n + j] = gt as f64 / total;
            wins[j * n + i] = lt as f64 / total;
            ties[i * n + j] = tie;
            ties[j * n + i] = tie;
        }
    }
    Ok(TournamentMatrix {
        target: target.clone(),
        competitors: competitors.to_vec(),
        wins,
        ties,
    })
}

/// Clamps every off-diagonal entry to `[CLIP_LOW, CLIP_HIGH]`.
pub fn clip_smooth(w: &TournamentMatrix) -> TournamentMatrix {
    let n = w.len();
    let mut out = w.clone();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                out.wins[i * n + j] = clip_entry(w.wins[i * n + j]);
            }
        }
    }
    out
}

pub fn clip_entry(x: f64) -> f64 {
    x.clamp(CLIP_LOW, CLIP_HIGH)
}

/// Positive reciprocal matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioMatrix {
    n: usize,
    data: Vec<f64>,
}

impl RatioMatrix {
    /// Builds a ratio matrix from raw rows. Entries must be positive;
    /// reciprocity is not enforced here so that tests can feed arbitrary
    /// positive matrices to the eigen-solver.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Schema("ratio matrix must be square and non-empty".into()));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        if data.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
            return Err(Error::Schema("ratio matrix entries must be positive".into()));
        }
        Ok(RatioMatrix { n, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// `w'[i][j] = w[i][j] / w[j][i]` on a clipped tournament; the diagonal is 1.
pub fn ratio_matrix(w: &TournamentMatrix) -> RatioMatrix {
    let n = w.len();
    let mut data = vec![1.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                data[i * n + j] = w.win(i, j) / w.win(j, i);
            }
        }
    }
    RatioMatrix { n, data }
}

/// Perron eigenvector of a positive matrix by power iteration from the
/// uniform vector, normalized to sum to one.
pub fn principal_eigenvector(m: &RatioMatrix) -> Result<Vec<f64>> {
    power_iteration(m.as_slice(), m.len(), POWER_TOLERANCE, POWER_MAX_ITERATIONS)
}

pub fn power_iteration(
    matrix: &[f64],
    n: usize,
    tolerance: f64,
    max_iterations: usize,
) -> Result<Vec<f64>> {
    assert_eq!(matrix.len(), n * n, "matrix must be n x n");
    let mut v = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iterations {
        for (i, out) in next.iter_mut().enumerate() {
            let row = &matrix[i * n..(i + 1) * n];
            *out = row.iter().zip(&v).map(|(a, x)| a * x).sum();
        }
        let total: f64 = next.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::NonConvergence {
                iterations: 0,
                residual: f64::NAN,
            });
        }
        next.iter_mut().for_each(|x| *x /= total);
        let scale = next.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        residual = next
            .iter()
            .zip(&v)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            / scale;
        std::mem::swap(&mut v, &mut next);
        if residual <= tolerance {
            return Ok(v);
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iterations,
        residual,
    })
}

/// Tournament, clip, ratio and eigenvector for one target's competitors.
pub fn target_affinities(
    store: &EvaluationRecordStore,
    target: &TaskId,
    competitors: &[TransferEdge],
) -> Result<Vec<f64>> {
    let w = build_tournament(store, target, competitors)?;
    principal_eigenvector(&ratio_matrix(&clip_smooth(&w)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffinityEntry {
    pub edge: TransferEdge,
    pub p: f64,
}

/// Per-target normalized transferability of every candidate edge.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffinityMatrix {
    targets: BTreeMap<TaskId, Vec<AffinityEntry>>,
}

#[derive(Serialize, Deserialize)]
struct AffinityFile {
    #[serde(default = "default_format_version")]
    format_version: u32,
    targets: BTreeMap<TaskId, Vec<AffinityLine>>,
}

#[derive(Serialize, Deserialize)]
struct AffinityLine {
    sources: Vec<TaskId>,
    p: f64,
}

const SUM_TOLERANCE: f64 = 1e-9;

impl AffinityMatrix {
    pub fn targets(&self) -> impl Iterator<Item = (&TaskId, &[AffinityEntry])> {
        self.targets.iter().map(|(t, e)| (t, e.as_slice()))
    }

    pub fn target(&self, target: &TaskId) -> Option<&[AffinityEntry]> {
        self.targets.get(target).map(Vec::as_slice)
    }

    pub fn get(&self, edge: &TransferEdge) -> Option<f64> {
        let entries = self.targets.get(edge.target())?;
        entries
            .binary_search_by(|e| e.edge.cmp(edge))
            .ok()
            .map(|i| entries[i].p)
    }

    pub fn edges(&self) -> impl Iterator<Item = &TransferEdge> {
        self.targets.values().flatten().map(|e| &e.edge)
    }

    pub fn edge_count(&self) -> usize {
        self.targets.values().map(Vec::len).sum()
    }

    pub fn max_order(&self) -> usize {
        self.edges().map(TransferEdge::order).max().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Candidate edges of order at most `max_order`, in canonical order.
    pub fn candidate_edges(&self, max_order: usize) -> Vec<TransferEdge> {
        self.edges()
            .filter(|e| e.order() <= max_order)
            .cloned()
            .collect()
    }

    /// Checks every edge against the dictionary and requires an entry for
    /// every target of the dictionary.
    pub fn validate(&self, dict: &TaskDictionary) -> Result<()> {
        for edge in self.edges() {
            edge.validate(dict, None)?;
        }
        if let Some(t) = dict.targets().find(|t| !self.targets.contains_key(*t)) {
            return Err(Error::MissingTarget(t.to_string()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: AffinityFile =
            serde_json::from_str(text).map_err(|e| Error::json("affinity", e))?;
        check_format_version(file.format_version)?;
        let mut rows = Vec::new();
        for (target, lines) in file.targets {
            let mut entries = Vec::with_capacity(lines.len());
            for line in lines {
                entries.push(AffinityEntry {
                    edge: TransferEdge::new(line.sources, target.clone())?,
                    p: line.p,
                });
            }
            rows.push((target, entries));
        }
        Self::from_rows(rows)
    }

    pub fn to_json(&self) -> String {
        let file = AffinityFile {
            format_version: FORMAT_VERSION,
            targets: self
                .targets
                .iter()
                .map(|(t, entries)| {
                    let lines = entries
                        .iter()
                        .map(|e| AffinityLine {
                            sources: e.edge.sources().to_vec(),
                            p: e.p,
                        })
                        .collect();
                    (t.clone(), lines)
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("affinity serializes") + "\n"
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("target,sources,p\n");
        for entry in self.targets.values().flatten() {
            out.push_str(&format!(
                "{},{},{}\n",
                entry.edge.target(),
                entry.edge.joined_sources(),
                entry.p
            ));
        }
        out
    }

    /// Builds a matrix from per-target entries, checking positivity, the
    /// sum-to-one normalization and edge/target consistency.
    pub fn from_rows(rows: impl IntoIterator<Item = (TaskId, Vec<AffinityEntry>)>) -> Result<Self> {
        Self::build(rows, true)
    }

    /// Like [`AffinityMatrix::from_rows`] but accepts any positive scores,
    /// for experiments with externally supplied transfer scores.
    pub fn from_scores(rows: impl IntoIterator<Item = (TaskId, Vec<AffinityEntry>)>) -> Result<Self> {
        Self::build(rows, false)
    }

    fn build(
        rows: impl IntoIterator<Item = (TaskId, Vec<AffinityEntry>)>,
        normalized: bool,
    ) -> Result<Self> {
        let mut targets = BTreeMap::new();
        for (target, mut entries) in rows {
            if entries.is_empty() {
                return Err(Error::MissingTarget(target.to_string()));
            }
            entries.sort_by(|a, b| a.edge.cmp(&b.edge));
            let mut sum = 0.0;
            for (k, e) in entries.iter().enumerate() {
                if e.edge.target() != &target {
                    return Err(Error::Schema(format!(
                        "edge {} listed under target `{target}`",
                        e.edge
                    )));
                }
                if k > 0 && entries[k - 1].edge == e.edge {
                    return Err(Error::Schema(format!("duplicate affinity for {}", e.edge)));
                }
                if !(e.p.is_finite() && e.p > 0.0 && (e.p <= 1.0 || !normalized)) {
                    return Err(Error::Schema(format!("affinity of {} outside (0, 1]", e.edge)));
                }
                sum += e.p;
            }
            if normalized && (sum - 1.0).abs() > SUM_TOLERANCE {
                return Err(Error::Schema(format!(
                    "affinities of target `{target}` sum to {sum}, expected 1"
                )));
            }
            if targets.insert(target.clone(), entries).is_some() {
                return Err(Error::Schema(format!("target `{target}` listed twice")));
            }
        }
        Ok(AffinityMatrix { targets })
    }
}

/// One target's competitors together with their eigenvector.
#[derive(Debug, Clone)]
pub struct TargetEigenvector {
    pub target: TaskId,
    pub competitors: Vec<TransferEdge>,
    pub eigenvector: Vec<f64>,
}

/// Stacks per-target eigenvectors into an affinity matrix. Every target of
/// `dict` must be present.
pub fn assemble_affinity(
    dict: &TaskDictionary,
    per_target: impl IntoIterator<Item = TargetEigenvector>,
) -> Result<AffinityMatrix> {
    let mut rows = Vec::new();
    for tv in per_target {
        if tv.competitors.len() != tv.eigenvector.len() {
            return Err(Error::Schema(format!(
                "target `{}`: {} competitors but {} eigenvector components",
                tv.target,
                tv.competitors.len(),
                tv.eigenvector.len()
            )));
        }
        let entries = tv
            .competitors
            .into_iter()
            .zip(tv.eigenvector)
            .map(|(edge, p)| AffinityEntry { edge, p })
            .collect();
        rows.push((tv.target, entries));
    }
    let matrix = AffinityMatrix::from_rows(rows)?;
    if let Some(t) = dict.targets().find(|t| matrix.target(t).is_none()) {
        return Err(Error::MissingTarget(t.to_string()));
    }
    Ok(matrix)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceConfig {
    pub beta: f64,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        DistanceConfig { beta: DEFAULT_BETA }
    }
}

impl DistanceConfig {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidConfig(format!("beta must be positive, got {beta}")));
        }
        Ok(DistanceConfig { beta })
    }
}

pub fn affinity_distance(p: f64, cfg: &DistanceConfig) -> f64 {
    (-cfg.beta * p).exp()
}

/// Element-wise `exp(-beta * p)` as CSV rows `target,sources,dist`.
pub fn to_distance(p: &AffinityMatrix, cfg: &DistanceConfig) -> Vec<(TransferEdge, f64)> {
    p.targets
        .values()
        .flatten()
        .map(|e| (e.edge.clone(), affinity_distance(e.p, cfg)))
        .collect()
}

pub fn distance_csv(rows: &[(TransferEdge, f64)]) -> String {
    let mut out = String::from("target,sources,dist\n");
    for (edge, d) in rows {
        out.push_str(&format!("{},{},{d}\n", edge.target(), edge.joined_sources()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{EvaluationRecord, TaskSpec};

    fn tid(s: &str) -> TaskId {
        TaskId::from(s)
    }

    fn dict(names: &[&str]) -> TaskDictionary {
        TaskDictionary::new(names.iter().map(|n| TaskSpec {
            name: n.to_string(),
            source: true,
            target: true,
        }))
        .unwrap()
    }

    fn edge(s: &str, t: &str) -> TransferEdge {
        TransferEdge::new([tid(s)], tid(t)).unwrap()
    }

    fn store_from(d: &TaskDictionary, t: &str, columns: &[(&str, &[f64])]) -> EvaluationRecordStore {
        let records = columns.iter().flat_map(|(s, scores)| {
            scores.iter().enumerate().map(move |(i, &score)| EvaluationRecord {
                edge: edge(s, t),
                image_id: format!("{i:04}"),
                score,
            })
        });
        EvaluationRecordStore::ingest(d, records).unwrap()
    }

    #[test]
    fn tournament_direct_count() {
        let d = dict(&["a", "b", "t"]);
        let store = store_from(&d, "t", &[("a", &[3.0, 5.0, 7.0]), ("b", &[4.0, 4.0, 6.0])]);
        let w = build_tournament(&store, &tid("t"), &[edge("a", "t"), edge("b", "t")]).unwrap();
        assert_eq!(w.win(0, 1), 2.0 / 3.0);
        assert_eq!(w.win(1, 0), 1.0 / 3.0);
        assert_eq!(w.win(0, 0), 0.5);
    }

    #[test]
    fn tournament_all_ties() {
        let d = dict(&["a", "b", "t"]);
        let store = store_from(&d, "t", &[("a", &[1.0, 2.0]), ("b", &[1.0, 2.0])]);
        let w = build_tournament(&store, &tid("t"), &[edge("a", "t"), edge("b", "t")]).unwrap();
        assert_eq!((w.win(0, 1), w.win(1, 0)), (0.0, 0.0));
        assert_eq!(w.tie(0, 1), 1.0);
        let r = ratio_matrix(&clip_smooth(&w));
        assert_eq!(r.get(0, 1), 1.0);
    }

    #[test]
    fn tournament_missing_competitor() {
        let d = dict(&["a", "b", "t"]);
        let store = store_from(&d, "t", &[("a", &[1.0])]);
        let err = build_tournament(&store, &tid("t"), &[edge("b", "t")]).unwrap_err();
        assert!(matches!(err, Error::MissingCompetitor(_)));
        let err = build_tournament(&store, &tid("a"), &[edge("b", "a")]).unwrap_err();
        assert!(matches!(err, Error::MissingTarget(_)));
    }

    #[test]
    fn clip_bounds() {
        assert_eq!(CLIP_LOW, 0.001);
        assert_eq!(CLIP_HIGH, 0.999);
        assert_eq!(clip_entry(0.0), 0.001);
        assert_eq!(clip_entry(0.5), 0.5);
        assert_eq!(clip_entry(1.0), 0.999);
    }

    #[test]
    fn ratio_entries() {
        let w = TournamentMatrix {
            target: tid("t"),
            competitors: vec![edge("a", "t"), edge("b", "t"), edge("c", "t")],
            wins: vec![0.5, 0.8, 0.999, 0.2, 0.5, 0.5, 0.001, 0.5, 0.5],
            ties: vec![0.0; 9],
        };
        let r = ratio_matrix(&w);
        assert_eq!(r.get(0, 1), 4.0);
        assert_eq!(r.get(1, 0), 0.25);
        assert_eq!(r.get(1, 2), 1.0);
        assert!((r.get(0, 2) - 999.0).abs() < 1e-9);
        assert!((r.get(0, 2) * r.get(2, 0) - 1.0).abs() < 1e-9);
        for i in 0..3 {
            assert_eq!(r.get(i, i), 1.0);
        }
    }

    #[test]
    fn eigenvector_two_by_two() {
        let m = RatioMatrix::from_rows(&[vec![1.0, 4.0], vec![0.25, 1.0]]).unwrap();
        let v = principal_eigenvector(&m).unwrap();
        assert!((v[0] - 0.8).abs() < 1e-12);
        assert!((v[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn eigenvector_consistent_matrix() {
        let w = [0.5, 0.3, 0.2];
        let rows: Vec<Vec<f64>> = w.iter().map(|a| w.iter().map(|b| a / b).collect()).collect();
        let v = principal_eigenvector(&RatioMatrix::from_rows(&rows).unwrap()).unwrap();
        for (a, b) in v.iter().zip(w) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn power_iteration_reports_non_convergence() {
        let slow = [1.0, 0.0, 0.0, 0.0, 1.0, 1e-9, 0.0, 0.0, 1.0];
        match power_iteration(&slow, 3, 1e-15, 3) {
            Err(Error::NonConvergence { iterations, residual }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn assemble_and_serialize() {
        let d = dict(&["a", "b", "t"]);
        let per_target = d.targets().map(|t| {
            let others: Vec<TransferEdge> = ["a", "b", "t"].iter().map(|s| edge(s, t.as_str())).collect();
            TargetEigenvector {
                target: t.clone(),
                competitors: others,
                eigenvector: vec![0.5, 0.25, 0.25],
            }
        });
        let p = assemble_affinity(&d, per_target).unwrap();
        assert_eq!(p.targets().count(), 3);
        for (_, row) in p.targets() {
            assert!((row.iter().map(|e| e.p).sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let back = AffinityMatrix::from_json(&p.to_json()).unwrap();
        assert_eq!(back, p);
        assert_eq!(p.get(&edge("a", "t")), Some(0.5));
        assert!(p.to_csv().starts_with("target,sources,p\na,a,0.5\n"));
    }

    #[test]
    fn assemble_single_edge_and_missing_target() {
        let d = dict(&["t"]);
        let p = assemble_affinity(
            &d,
            [TargetEigenvector {
                target: tid("t"),
                competitors: vec![edge("t", "t")],
                eigenvector: vec![1.0],
            }],
        )
        .unwrap();
        assert_eq!(p.get(&edge("t", "t")), Some(1.0));

        let d2 = dict(&["s", "t"]);
        let err = assemble_affinity(
            &d2,
            [TargetEigenvector {
                target: tid("t"),
                competitors: vec![edge("s", "t")],
                eigenvector: vec![1.0],
            }],
        )
        .unwrap_err();
        assert!(matches!(err, Error::MissingTarget(_)));
    }

    #[test]
    fn affinity_json_rejects_bad_sums() {
        let text = r#"{"targets": {"t": [{"sources": ["a"], "p": 0.7}]}}"#;
        assert!(matches!(AffinityMatrix::from_json(text), Err(Error::Schema(_))));
    }

    #[test]
    fn distance_transform() {
        let cfg = DistanceConfig::default();
        assert_eq!(cfg.beta, 20.0);
        assert_eq!(affinity_distance(0.0, &cfg), 1.0);
        let far = affinity_distance(1.0, &cfg);
        assert!((far - 2.061_153_622_438_558e-9).abs() < 1e-20);
        assert!(affinity_distance(0.6, &cfg) < affinity_distance(0.4, &cfg));
        assert!(DistanceConfig::new(0.0).is_err());
    }

    #[test]
    fn ordinal_normalization_ignores_monotone_transforms_unlike_linear_rescale() {
        let d = dict(&["a", "b", "c", "t"]);
        let cols: [(&str, Vec<f64>); 3] = [
            ("a", vec![0.1, 0.5, 0.9, 0.3]),
            ("b", vec![0.2, 0.4, 0.95, 0.1]),
            ("c", vec![0.05, 0.6, 0.2, 0.25]),
        ];
        let warp = |x: f64| (8.0 * x).exp() - 3.0;
        let plain: Vec<(&str, &[f64])> = cols.iter().map(|(s, v)| (*s, v.as_slice())).collect();
        let warped_cols: Vec<(&str, Vec<f64>)> =
            cols.iter().map(|(s, v)| (*s, v.iter().map(|&x| warp(x)).collect())).collect();
        let warped: Vec<(&str, &[f64])> = warped_cols.iter().map(|(s, v)| (*s, v.as_slice())).collect();
        let competitors = [edge("a", "t"), edge("b", "t"), edge("c", "t")];
        let w1 = build_tournament(&store_from(&d, "t", &plain), &tid("t"), &competitors).unwrap();
        let w2 = build_tournament(&store_from(&d, "t", &warped), &tid("t"), &competitors).unwrap();
        assert_eq!(w1, w2);

        // Baseline: min-max rescale of mean scores changes under the warp.
        let rescale = |cols: &[(&str, &[f64])]| -> Vec<f64> {
            let means: Vec<f64> = cols.iter().map(|(_, v)| v.iter().sum::<f64>() / v.len() as f64).collect();
            let lo = means.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            means.iter().map(|m| (m - lo) / (hi - lo)).collect()
        };
        let r1 = rescale(&plain);
        let r2 = rescale(&warped);
        assert!(r1.iter().zip(&r2).any(|(a, b)| (a - b).abs() > 1e-3));
    }
}
