//! Transfer taxonomy: task affinities from pairwise evaluation records and
//! the supervision policy that maximizes them under a labeling budget.

pub mod ahp;
pub mod bip;
pub mod cluster;
pub mod domain;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod sampler;
pub mod service;
pub mod synth;
pub mod taxonomy;

/// Version written into every JSON artifact.
pub const FORMAT_VERSION: u32 = 1;

pub use ahp::{AffinityEntry, AffinityMatrix};
pub use bip::{BipInstance, BipSolution, CostMode, SolveStatus, SolverConfig};
pub use domain::{EvaluationRecord, EvaluationRecordStore, TaskDictionary, TaskId, TaskSpec, TransferEdge};
pub use error::{Error, ErrorCode, Result};
pub use sampler::SamplerConfig;
pub use taxonomy::Taxonomy;
