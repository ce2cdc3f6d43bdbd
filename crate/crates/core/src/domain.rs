//! Tasks, roles, transfer edges and the per-image evaluation record store.
//!
//! Everything here is immutable once validated. Downstream stages assume the
//! invariants checked at construction: task names are unique, every edge
//! references source-capable tasks transferring to a target-capable task, and
//! every edge of one target was evaluated on the same image set.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::FORMAT_VERSION;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(String);

impl TaskId {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::EmptyTaskName);
        }
        Ok(TaskId(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TaskId {
    /// Panics on an empty name; use [`TaskId::new`] for untrusted input.
    fn from(name: &str) -> Self {
        TaskId::new(name).expect("task name must be non-empty")
    }
}

/// One entry of a dictionary file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub source: bool,
    pub target: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task {
    pub id: TaskId,
    pub is_source: bool,
    pub is_target: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskDictionary {
    tasks: Vec<Task>,
    index: HashMap<TaskId, usize>,
}

#[derive(Serialize, Deserialize)]
struct DictionaryFile {
    #[serde(default = "default_format_version")]
    format_version: u32,
    tasks: Vec<TaskSpec>,
}

pub(crate) fn default_format_version() -> u32 {
    FORMAT_VERSION
}

impl TaskDictionary {
    /// Validates a raw task list. Rejects empty lists, duplicate names,
    /// tasks with no role, and dictionaries with no targets or no sources.
    pub fn new(raw: impl IntoIterator<Item = TaskSpec>) -> Result<Self> {
        let mut tasks = Vec::new();
        let mut index = HashMap::new();
        for spec in raw {
            let id = TaskId::new(spec.name)?;
            if !spec.source && !spec.target {
                return Err(Error::TaskWithoutRole(id.0));
            }
            if index.insert(id.clone(), tasks.len()).is_some() {
                return Err(Error::DuplicateTask(id.0));
            }
            tasks.push(Task {
                id,
                is_source: spec.source,
                is_target: spec.target,
            });
        }
        if tasks.is_empty() {
            return Err(Error::EmptyDictionary);
        }
        if !tasks.iter().any(|t| t.is_target) {
            return Err(Error::NoTargets);
        }
        if !tasks.iter().any(|t| t.is_source) {
            return Err(Error::NoSources);
        }
        Ok(TaskDictionary { tasks, index })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: DictionaryFile =
            serde_json::from_str(text).map_err(|e| Error::json("dictionary", e))?;
        check_format_version(file.format_version)?;
        Self::new(file.tasks)
    }

    pub fn to_json(&self) -> String {
        let file = DictionaryFile {
            format_version: FORMAT_VERSION,
            tasks: self.specs(),
        };
        serde_json::to_string_pretty(&file).expect("dictionary serializes") + "\n"
    }

    pub fn specs(&self) -> Vec<TaskSpec> {
        self.tasks
            .iter()
            .map(|t| TaskSpec {
                name: t.id.0.clone(),
                source: t.is_source,
                target: t.is_target,
            })
            .collect()
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn position(&self, id: &TaskId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &TaskId) -> Option<&Task> {
        self.position(id).map(|i| &self.tasks[i])
    }

    pub fn lookup(&self, name: &str) -> Result<&Task> {
        TaskId::new(name)
            .ok()
            .and_then(|id| self.get(&id))
            .ok_or_else(|| Error::UnknownTask {
                name: name.to_string(),
                locator: None,
            })
    }

    pub fn is_source(&self, id: &TaskId) -> bool {
        self.get(id).is_some_and(|t| t.is_source)
    }

    pub fn is_target(&self, id: &TaskId) -> bool {
        self.get(id).is_some_and(|t| t.is_target)
    }

    pub fn sources(&self) -> impl Iterator<Item = &TaskId> {
        self.tasks.iter().filter(|t| t.is_source).map(|t| &t.id)
    }

    pub fn targets(&self) -> impl Iterator<Item = &TaskId> {
        self.tasks.iter().filter(|t| t.is_target).map(|t| &t.id)
    }

    pub fn target_only(&self) -> impl Iterator<Item = &TaskId> {
        self.tasks
            .iter()
            .filter(|t| t.is_target && !t.is_source)
            .map(|t| &t.id)
    }

    pub fn source_only(&self) -> impl Iterator<Item = &TaskId> {
        self.tasks
            .iter()
            .filter(|t| t.is_source && !t.is_target)
            .map(|t| &t.id)
    }

    pub fn both_roles(&self) -> impl Iterator<Item = &TaskId> {
        self.tasks
            .iter()
            .filter(|t| t.is_source && t.is_target)
            .map(|t| &t.id)
    }

    /// Returns a copy with `task` appended as a target-only task.
    pub fn with_target_only(&self, task: TaskId) -> Result<Self> {
        let mut specs = self.specs();
        specs.push(TaskSpec {
            name: task.0,
            source: false,
            target: true,
        });
        Self::new(specs)
    }

    /// Returns a copy where only `keep` retains its target flag; tasks that
    /// lose their only role are dropped.
    pub fn single_target(&self, keep: &TaskId) -> Result<Self> {
        if !self.is_target(keep) {
            return Err(Error::UnknownTask {
                name: keep.0.clone(),
                locator: None,
            });
        }
        Self::new(
            self.specs()
                .into_iter()
                .map(|mut s| {
                    s.target = s.name == keep.0;
                    s
                })
                .filter(|s| s.source || s.target),
        )
    }
}

pub(crate) fn check_format_version(version: u32) -> Result<()> {
    if version != FORMAT_VERSION {
        return Err(Error::Schema(format!(
            "unsupported format_version {version}, expected {FORMAT_VERSION}"
        )));
    }
    Ok(())
}

/// A transfer from a set of source representations to one target.
///
/// Sources are kept sorted and distinct. The only edge whose target also
/// appears among its sources is the full-supervision self-edge `({t}, t)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TransferEdge {
    sources: Vec<TaskId>,
    target: TaskId,
}

impl TransferEdge {
    pub fn new(sources: impl IntoIterator<Item = TaskId>, target: TaskId) -> Result<Self> {
        let mut sources: Vec<TaskId> = sources.into_iter().collect();
        let n = sources.len();
        sources.sort();
        sources.dedup();
        let edge = TransferEdge { sources, target };
        if edge.sources.is_empty() {
            return Err(edge.invalid("no sources"));
        }
        if edge.sources.len() != n {
            return Err(edge.invalid("repeated source"));
        }
        if edge.sources.len() > 1 && edge.sources.contains(&edge.target) {
            return Err(edge.invalid("target appears among the sources of a higher-order edge"));
        }
        Ok(edge)
    }

    pub fn self_edge(target: TaskId) -> Self {
        TransferEdge {
            sources: vec![target.clone()],
            target,
        }
    }

    pub fn sources(&self) -> &[TaskId] {
        &self.sources
    }

    pub fn target(&self) -> &TaskId {
        &self.target
    }

    pub fn order(&self) -> usize {
        self.sources.len()
    }

    pub fn is_self_edge(&self) -> bool {
        self.sources.len() == 1 && self.sources[0] == self.target
    }

    /// Checks roles against a dictionary and the order against `max_order`.
    pub fn validate(&self, dict: &TaskDictionary, max_order: Option<usize>) -> Result<()> {
        for task in self.sources.iter().chain(std::iter::once(&self.target)) {
            if dict.get(task).is_none() {
                return Err(Error::UnknownTask {
                    name: task.0.clone(),
                    locator: Some(format!("edge {self}")),
                });
            }
        }
        if let Some(s) = self.sources.iter().find(|s| !dict.is_source(s)) {
            return Err(self.invalid(&format!("`{s}` is not a source task")));
        }
        if !dict.is_target(&self.target) {
            return Err(self.invalid(&format!("`{}` is not a target task", self.target)));
        }
        if let Some(m) = max_order {
            if self.order() > m {
                return Err(self.invalid(&format!("order exceeds maximum {m}")));
            }
        }
        Ok(())
    }

    fn invalid(&self, reason: &str) -> Error {
        Error::InvalidEdge {
            edge: self.to_string(),
            reason: reason.to_string(),
        }
    }

    pub fn joined_sources(&self) -> String {
        self.sources
            .iter()
            .map(TaskId::as_str)
            .collect::<Vec<_>>()
            .join("+")
    }
}

impl Ord for TransferEdge {
    fn cmp(&self, other: &Self) -> Ordering {
        self.target
            .cmp(&other.target)
            .then(self.order().cmp(&other.order()))
            .then_with(|| self.sources.cmp(&other.sources))
    }
}

impl PartialOrd for TransferEdge {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for TransferEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.joined_sources(), self.target)
    }
}

/// JSON shape of an edge, shared by record, edge-list and affinity files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRepr {
    pub sources: Vec<TaskId>,
    pub target: TaskId,
}

impl From<&TransferEdge> for EdgeRepr {
    fn from(e: &TransferEdge) -> Self {
        EdgeRepr {
            sources: e.sources.clone(),
            target: e.target.clone(),
        }
    }
}

impl TryFrom<EdgeRepr> for TransferEdge {
    type Error = Error;

    fn try_from(r: EdgeRepr) -> Result<Self> {
        TransferEdge::new(r.sources, r.target)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRecord {
    pub edge: TransferEdge,
    pub image_id: String,
    pub score: f64,
}

/// Line format of a record file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordLine {
    pub sources: Vec<String>,
    pub target: String,
    pub image: String,
    pub score: f64,
}

/// Scores of every edge of one target, aligned on a shared sorted image list.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetRecords {
    images: Vec<String>,
    scores: BTreeMap<TransferEdge, Vec<f64>>,
}

impl TargetRecords {
    pub fn images(&self) -> &[String] {
        &self.images
    }

    pub fn edges(&self) -> impl Iterator<Item = &TransferEdge> {
        self.scores.keys()
    }

    /// Scores aligned with [`TargetRecords::images`].
    pub fn scores(&self, edge: &TransferEdge) -> Option<&[f64]> {
        self.scores.get(edge).map(Vec::as_slice)
    }

    pub fn contains(&self, edge: &TransferEdge) -> bool {
        self.scores.contains_key(edge)
    }

    pub fn record_count(&self) -> usize {
        self.images.len() * self.scores.len()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvaluationRecordStore {
    targets: BTreeMap<TaskId, TargetRecords>,
}

impl EvaluationRecordStore {
    /// Groups records by target and edge. Rejects unknown tasks, invalid
    /// edges, non-finite scores, duplicate `(edge, image)` pairs, and edges
    /// whose image set differs from the rest of their target's edges.
    pub fn ingest(
        dict: &TaskDictionary,
        records: impl IntoIterator<Item = EvaluationRecord>,
    ) -> Result<Self> {
        let mut builder = StoreBuilder::new(dict);
        for (i, record) in records.into_iter().enumerate() {
            builder.push(record, Some(format!("record {}", i + 1)))?;
        }
        builder.finish()
    }

    /// Reads newline-delimited JSON records. `negate` flips the sign of every
    /// score, for files holding losses instead of qualities.
    pub fn read_ndjson(dict: &TaskDictionary, reader: impl BufRead, negate: bool) -> Result<Self> {
        let mut builder = StoreBuilder::new(dict);
        for (i, line) in reader.lines().enumerate() {
            let locator = format!("line {}", i + 1);
            let line = line.map_err(|e| Error::io(&locator, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RecordLine =
                serde_json::from_str(&line).map_err(|e| Error::json(&locator, e))?;
            let record = record_from_line(raw, negate, &locator)?;
            builder.push(record, Some(locator))?;
        }
        builder.finish()
    }

    pub fn write_ndjson(&self, mut out: impl Write) -> std::io::Result<()> {
        for group in self.targets.values() {
            for (edge, scores) in &group.scores {
                for (image, &score) in group.images.iter().zip(scores) {
                    let line = RecordLine {
                        sources: edge.sources.iter().map(|s| s.0.clone()).collect(),
                        target: edge.target.0.clone(),
                        image: image.clone(),
                        score,
                    };
                    serde_json::to_writer(&mut out, &line)?;
                    out.write_all(b"\n")?;
                }
            }
        }
        Ok(())
    }

    pub fn target(&self, target: &TaskId) -> Option<&TargetRecords> {
        self.targets.get(target)
    }

    pub fn targets(&self) -> impl Iterator<Item = (&TaskId, &TargetRecords)> {
        self.targets.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn record_count(&self) -> usize {
        self.targets.values().map(TargetRecords::record_count).sum()
    }

    /// Highest edge order with at least one record, 0 when empty.
    pub fn max_order(&self) -> usize {
        self.targets
            .values()
            .flat_map(|g| g.edges().map(TransferEdge::order))
            .max()
            .unwrap_or(0)
    }

    pub fn score(&self, edge: &TransferEdge, image: &str) -> Option<f64> {
        let group = self.targets.get(&edge.target)?;
        let i = group.images.binary_search_by(|x| x.as_str().cmp(image)).ok()?;
        group.scores.get(edge).map(|s| s[i])
    }

    /// Per-image scores of one edge, keyed by image id.
    pub fn series(&self, edge: &TransferEdge) -> Option<BTreeMap<String, f64>> {
        let group = self.targets.get(&edge.target)?;
        let scores = group.scores.get(edge)?;
        Some(group.images.iter().cloned().zip(scores.iter().copied()).collect())
    }
}

fn record_from_line(raw: RecordLine, negate: bool, locator: &str) -> Result<EvaluationRecord> {
    let locate = |e: Error| match e {
        Error::EmptyTaskName => Error::Schema(format!("empty task name at {locator}")),
        other => other,
    };
    let sources = raw
        .sources
        .into_iter()
        .map(TaskId::new)
        .collect::<Result<Vec<_>>>()
        .map_err(locate)?;
    let target = TaskId::new(raw.target).map_err(locate)?;
    let edge = TransferEdge::new(sources, target)?;
    let score = if negate { -raw.score } else { raw.score };
    Ok(EvaluationRecord {
        edge,
        image_id: raw.image,
        score,
    })
}

struct StoreBuilder<'a> {
    dict: &'a TaskDictionary,
    groups: BTreeMap<TaskId, BTreeMap<TransferEdge, BTreeMap<String, f64>>>,
}

impl<'a> StoreBuilder<'a> {
    fn new(dict: &'a TaskDictionary) -> Self {
        StoreBuilder {
            dict,
            groups: BTreeMap::new(),
        }
    }

    fn push(&mut self, record: EvaluationRecord, locator: Option<String>) -> Result<()> {
        if let Err(e) = record.edge.validate(self.dict, None) {
            return Err(match e {
                Error::UnknownTask { name, .. } => Error::UnknownTask { name, locator },
                other => other,
            });
        }
        if !record.score.is_finite() {
            return Err(Error::NonFiniteScore { locator });
        }
        let per_edge = self
            .groups
            .entry(record.edge.target.clone())
            .or_default()
            .entry(record.edge.clone())
            .or_default();
        if per_edge.contains_key(&record.image_id) {
            return Err(Error::DuplicateRecord {
                edge: record.edge.to_string(),
                image: record.image_id,
                locator,
            });
        }
        per_edge.insert(record.image_id, record.score);
        Ok(())
    }

    fn finish(self) -> Result<EvaluationRecordStore> {
        let mut targets = BTreeMap::new();
        for (target, edges) in self.groups {
            let mut iter = edges.iter();
            let (_, first) = iter.next().expect("groups are created with one edge");
            let images: Vec<String> = first.keys().cloned().collect();
            let reference: BTreeSet<&String> = first.keys().collect();
            for (edge, scores) in iter {
                if scores.len() != reference.len() || !scores.keys().all(|k| reference.contains(k))
                {
                    return Err(Error::ImageSetMismatch {
                        target: target.0.clone(),
                        edge: edge.to_string(),
                    });
                }
            }
            let scores = edges
                .into_iter()
                .map(|(edge, by_image)| (edge, by_image.into_values().collect()))
                .collect();
            targets.insert(target, TargetRecords { images, scores });
        }
        Ok(EvaluationRecordStore { targets })
    }
}
