//! Synthetic evaluation records from latent task vectors.
//!
//! Every task gets a unit vector. A transfer from sources `S` to target `t`
//! scores `-‖mean(S) - v_t‖` per image, plus Gaussian noise.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{
    EvaluationRecord, EvaluationRecordStore, TaskDictionary, TaskId, TaskSpec, TransferEdge,
};
use crate::error::{Error, Result};
use crate::sampler::combinations;
use crate::FORMAT_VERSION;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_tasks: usize,
    pub n_images: usize,
    pub latent_dim: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Highest edge order written to the record file.
    #[serde(default = "default_max_order")]
    pub max_order: usize,
    /// Index of a task planted as the best single source for every other
    /// target. Needs `latent_dim >= n_tasks`.
    #[serde(default)]
    pub planted_hub: Option<usize>,
    /// The first `source_only` tasks are sources but not targets.
    #[serde(default)]
    pub source_only: usize,
}

fn default_max_order() -> usize {
    2
}

impl SyntheticSpec {
    pub fn new(n_tasks: usize, n_images: usize, latent_dim: usize, noise_sigma: f64, seed: u64) -> Self {
        SyntheticSpec {
            n_tasks,
            n_images,
            latent_dim,
            noise_sigma,
            seed,
            max_order: default_max_order(),
            planted_hub: None,
            source_only: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_tasks < 2 {
            return bad(format!("n_tasks must be at least 2, got {}", self.n_tasks));
        }
        if self.n_images < 1 {
            return bad("n_images must be at least 1".into());
        }
        if self.latent_dim < 1 {
            return bad("latent_dim must be at least 1".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be finite and non-negative, got {}", self.noise_sigma));
        }
        if self.max_order < 1 {
            return bad("max_order must be at least 1".into());
        }
        if self.source_only >= self.n_tasks {
            return bad("at least one task must be a target".into());
        }
        if let Some(h) = self.planted_hub {
            if h >= self.n_tasks {
                return bad(format!("planted hub {h} out of range"));
            }
            if self.latent_dim < self.n_tasks {
                return bad("a planted hub needs latent_dim >= n_tasks".into());
            }
        }
        Ok(())
    }

    pub fn task_name(&self, i: usize) -> String {
        let width = (self.n_tasks - 1).to_string().len().max(2);
        format!("t{i:0width$}")
    }
}

/// Noise-free expected score of one edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedScore {
    pub sources: Vec<TaskId>,
    pub target: TaskId,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub format_version: u32,
    pub spec: SyntheticSpec,
    pub latent: BTreeMap<TaskId, Vec<f64>>,
    pub hub: Option<TaskId>,
    pub expected: Vec<ExpectedScore>,
}

impl PlantedTruth {
    pub fn expected_score(&self, edge: &TransferEdge) -> Option<f64> {
        self.expected
            .iter()
            .find(|e| &e.target == edge.target() && e.sources == edge.sources())
            .map(|e| e.score)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("truth serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::json("truth", e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub dict: TaskDictionary,
    pub records: EvaluationRecordStore,
    pub truth: PlantedTruth,
}

fn normalize_vec(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in v {
        *x /= n;
    }
}

fn gaussian_vec(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn latent_vectors(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = spec.n_tasks;
    let Some(hub) = spec.planted_hub else {
        return (0..n)
            .map(|_| {
                let mut v = gaussian_vec(spec.latent_dim, rng);
                normalize_vec(&mut v);
                v
            })
            .collect();
    };
    // Orthonormal basis q_0..q_{n-1}; the hub takes q_0 and every other task
    // sits at 45 degrees between the hub and its own axis.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v = gaussian_vec(spec.latent_dim, rng);
        for q in &basis {
            let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            for (x, y) in v.iter_mut().zip(q) {
                *x -= dot * y;
            }
        }
        if v.iter().map(|x| x * x).sum::<f64>().sqrt() < 1e-6 {
            continue;
        }
        normalize_vec(&mut v);
        basis.push(v);
    }
    let h = basis[0].clone();
    let mut axes = basis.into_iter().skip(1);
    (0..n)
        .map(|i| {
            if i == hub {
                h.clone()
            } else {
                let u = axes.next().expect("one axis per non-hub task");
                h.iter().zip(&u).map(|(a, b)| (a + b) / 2f64.sqrt()).collect()
            }
        })
        .collect()
}

fn expected(sources: &[usize], target: usize, latent: &[Vec<f64>]) -> f64 {
    let k = sources.len() as f64;
    let d2: f64 = (0..latent[target].len())
        .map(|c| {
            let mean = sources.iter().map(|&s| latent[s][c]).sum::<f64>() / k;
            (mean - latent[target][c]).powi(2)
        })
        .sum();
    -d2.sqrt()
}

/// Dictionary, records and noise-free truth for `spec`. The record file
/// holds every source combination up to `spec.max_order` for every target,
/// plus the self-edge of targets that are also sources.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let latent = latent_vectors(spec, &mut rng);
    let names: Vec<TaskId> = (0..spec.n_tasks).map(|i| TaskId::from(spec.task_name(i).as_str())).collect();
    let dict = TaskDictionary::new((0..spec.n_tasks).map(|i| TaskSpec {
        name: names[i].to_string(),
        source: true,
        target: i >= spec.source_only,
    }))?;
    let noise = Normal::new(0.0, spec.noise_sigma)
        .map_err(|e| Error::InvalidConfig(format!("noise: {e}")))?;
    let images: Vec<String> = (0..spec.n_images).map(|i| format!("img{i:05}")).collect();

    let mut records = Vec::new();
    let mut truth = Vec::new();
    for target in spec.source_only..spec.n_tasks {
        let others: Vec<usize> = (0..spec.n_tasks).filter(|&s| s != target).collect();
        let mut groups: Vec<Vec<usize>> = vec![vec![target]];
        for k in 1..=spec.max_order.min(others.len()) {
            groups.extend(combinations(others.len(), k).into_iter().map(|c| c.into_iter().map(|i| others[i]).collect()));
        }
        for group in groups {
            let edge = TransferEdge::new(group.iter().map(|&s| names[s].clone()), names[target].clone())?;
            let mean = expected(&group, target, &latent);
            for image in &images {
                let score = mean + if spec.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                records.push(EvaluationRecord {
                    edge: edge.clone(),
                    image_id: image.clone(),
                    score,
                });
            }
            truth.push(ExpectedScore {
                sources: edge.sources().to_vec(),
                target: edge.target().clone(),
                score: mean,
            });
        }
    }
    let records = EvaluationRecordStore::ingest(&dict, records)?;
    let truth = PlantedTruth {
        format_version: FORMAT_VERSION,
        spec: spec.clone(),
        latent: names.iter().cloned().zip(latent).collect(),
        hub: spec.planted_hub.map(|h| names[h].clone()),
        expected: truth,
    };
    Ok(SyntheticDataset { dict, records, truth })
}

impl SyntheticDataset {
    /// Writes `dict.json`, `records.ndjson` and `truth.json` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        let write = |name: &str, text: &str| {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(path.display().to_string(), e))
        };
        write("dict.json", &self.dict.to_json())?;
        write("truth.json", &self.truth.to_json())?;
        let path = dir.join("records.ndjson");
        let file = fs::File::create(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut out = BufWriter::new(file);
        self.records
            .write_ndjson(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }
}
