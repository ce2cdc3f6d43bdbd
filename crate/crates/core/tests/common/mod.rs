#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use transfer_taxonomy::ahp::{AffinityEntry, AffinityMatrix};
use transfer_taxonomy::bip::{CostMode, SolverConfig, TOLERANCE};
use transfer_taxonomy::domain::{TaskDictionary, TaskId, TaskSpec, TransferEdge};
use transfer_taxonomy::engine::normalize;
use transfer_taxonomy::sampler::SamplerConfig;
use transfer_taxonomy::synth::{gen_synthetic, SyntheticDataset, SyntheticSpec};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn tid(s: &str) -> TaskId {
    TaskId::from(s)
}

pub fn edge(sources: &[&str], target: &str) -> TransferEdge {
    TransferEdge::new(sources.iter().map(|s| tid(s)), tid(target)).unwrap()
}

pub fn dict(specs: &[(&str, bool, bool)]) -> TaskDictionary {
    TaskDictionary::new(specs.iter().map(|(n, s, t)| TaskSpec {
        name: n.to_string(),
        source: *s,
        target: *t,
    }))
    .unwrap()
}

/// 26 tasks, 4 of them source-only.
pub fn full_dictionary() -> TaskDictionary {
    const SOURCE_ONLY: [&str; 4] = ["colorization", "inpainting", "jigsaw", "random_projection"];
    const BOTH: [&str; 22] = [
        "autoencoding", "class_object", "class_scene", "curvature", "denoising", "depth_euclidean",
        "depth_zbuffer", "edge2d", "edge3d", "egomotion", "fixated_pose", "keypoint2d",
        "keypoint3d", "nonfixated_pose", "normal", "point_matching", "reshading", "room_layout",
        "segment25d", "segment2d", "segmentsemantic", "vanishing_point",
    ];
    TaskDictionary::new(
        SOURCE_ONLY
            .iter()
            .map(|n| (n, false))
            .chain(BOTH.iter().map(|n| (n, true)))
            .map(|(n, target)| TaskSpec {
                name: n.to_string(),
                source: true,
                target,
            }),
    )
    .unwrap()
}

/// Consistent positive reciprocal matrix `v_i / v_j` and its weights.
pub fn consistent_matrix(n: usize, rng: &mut impl Rng) -> (Vec<Vec<f64>>, Vec<f64>) {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let v: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let m = (0..n).map(|i| (0..n).map(|j| v[i] / v[j]).collect()).collect();
    (m, v)
}

/// Random positive reciprocal matrix with entries in clip-ratio range.
pub fn random_reciprocal(n: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut m = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let w: f64 = rng.gen_range(0.001..0.999);
            m[i][j] = w / (1.0 - w);
            m[j][i] = (1.0 - w) / w;
        }
    }
    m
}

/// Perron vector from a dense eigen-decomposition: the largest real
/// eigenvalue from the Schur form, then the null vector of `A - λI` from an
/// SVD, normalized to sum to one.
pub fn dense_perron(m: &[Vec<f64>]) -> Vec<f64> {
    let n = m.len();
    let a = DMatrix::from_fn(n, n, |i, j| m[i][j]);
    let lambda = a
        .clone()
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() < 1e-8 * z.re.abs().max(1.0))
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let shifted = &a - DMatrix::identity(n, n) * lambda;
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors");
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .unwrap();
    let row = v_t.row(k);
    let total: f64 = row.iter().sum();
    row.iter().map(|x| x / total).collect()
}

/// Affinity matrix with random rows over arbitrary candidate edges.
pub fn random_affinity(
    dict: &TaskDictionary,
    max_order: usize,
    rng: &mut impl Rng,
) -> AffinityMatrix {
    let sources: Vec<TaskId> = dict.sources().cloned().collect();
    let mut rows = Vec::new();
    for t in dict.targets() {
        let mut edges: Vec<TransferEdge> = Vec::new();
        if dict.is_source(t) {
            edges.push(TransferEdge::self_edge(t.clone()));
        }
        let others: Vec<&TaskId> = sources.iter().filter(|s| *s != t).collect();
        for s in &others {
            edges.push(TransferEdge::new([(*s).clone()], t.clone()).unwrap());
        }
        for k in 2..=max_order.min(others.len()) {
            for _ in 0..3 {
                let mut pick: Vec<TaskId> = Vec::new();
                while pick.len() < k {
                    let s = others[rng.gen_range(0..others.len())].clone();
                    if !pick.contains(&s) {
                        pick.push(s);
                    }
                }
                let e = TransferEdge::new(pick, t.clone()).unwrap();
                if !edges.contains(&e) {
                    edges.push(e);
                }
            }
        }
        let raw: Vec<f64> = edges.iter().map(|_| rng.gen_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        rows.push((
            t.clone(),
            edges
                .into_iter()
                .zip(raw)
                .map(|(edge, p)| AffinityEntry { edge, p: p / total })
                .collect(),
        ));
    }
    AffinityMatrix::from_rows(rows).unwrap()
}

/// Random dictionary with `n` tasks; roles drawn so that at least one
/// source and one target exist.
pub fn random_dictionary(n: usize, rng: &mut impl Rng) -> TaskDictionary {
    loop {
        let specs: Vec<TaskSpec> = (0..n)
            .map(|i| {
                let role = rng.gen_range(0..4);
                TaskSpec {
                    name: format!("t{i}"),
                    source: role != 1,
                    target: role != 2,
                }
            })
            .collect();
        if let Ok(d) = TaskDictionary::new(specs) {
            if d.targets().count() > 0 && d.sources().count() > 0 {
                return d;
            }
        }
    }
}

pub fn random_solver_config(dict: &TaskDictionary, rng: &mut impl Rng) -> SolverConfig {
    let mut cfg = SolverConfig::with_budget(rng.gen_range(0.5..dict.len() as f64 + 0.5));
    for t in dict.tasks() {
        if rng.gen_bool(0.5) {
            cfg.costs.insert(t.id.clone(), rng.gen_range(0.5..2.0));
        }
        if t.is_target && rng.gen_bool(0.5) {
            cfg.importance.insert(t.id.clone(), rng.gen_range(0.5..3.0));
        }
    }
    if rng.gen_bool(0.3) {
        cfg.cost_mode = CostMode::Edges;
    }
    cfg
}

/// Exact optimum by enumerating source subsets: every target takes its best
/// edge whose sources are all selected. Works in node cost mode only.
pub fn node_subset_optimum(
    affinity: &AffinityMatrix,
    dict: &TaskDictionary,
    max_order: usize,
    cfg: &SolverConfig,
) -> Option<f64> {
    assert_eq!(cfg.cost_mode, CostMode::Nodes);
    let sources: Vec<&TaskId> = dict.sources().collect();
    assert!(sources.len() <= 20, "oracle enumerates 2^|S| subsets");
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << sources.len()) {
        let chosen: Vec<&TaskId> = (0..sources.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| sources[i])
            .collect();
        let cost: f64 = chosen.iter().map(|s| cfg.cost_of(s)).sum();
        if cost > cfg.budget + TOLERANCE {
            continue;
        }
        let mut total = 0.0;
        let mut feasible = true;
        for (t, row) in affinity.targets() {
            if !dict.is_target(t) {
                continue;
            }
            let p = row
                .iter()
                .filter(|e| e.edge.order() <= max_order)
                .filter(|e| e.edge.sources().iter().all(|s| chosen.contains(&s)))
                .map(|e| e.p)
                .fold(None, |m: Option<f64>, p| Some(m.map_or(p, |m| m.max(p))));
            match p {
                Some(p) => total += cfg.importance_of(t) * p,
                None => {
                    feasible = false;
                    break;
                }
            }
        }
        if feasible && best.is_none_or(|b| total > b) {
            best = Some(total);
        }
    }
    best
}

/// Synthetic dataset and its affinity at `max_order`.
pub fn synthetic(spec: &SyntheticSpec) -> (SyntheticDataset, AffinityMatrix) {
    let data = gen_synthetic(spec).unwrap();
    let affinity = normalize(&data.records, &data.dict, &SamplerConfig::with_max_order(spec.max_order)).unwrap();
    (data, affinity)
}

pub fn planted_spec(n_tasks: usize, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        planted_hub: Some((seed as usize) % n_tasks),
        ..SyntheticSpec::new(n_tasks, 100, n_tasks, 0.05, seed)
    }
}

pub fn by_target<T: Clone>(rows: &[(TaskId, T)]) -> BTreeMap<TaskId, T> {
    rows.iter().cloned().collect()
}
