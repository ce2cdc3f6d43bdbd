//! The selected transfer policy and its exports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bip::{BipInstance, BipSolution, CostMode, SolveStatus, SolverConfig, Variable, TOLERANCE};
use crate::domain::{
    check_format_version, default_format_version, TaskDictionary, TaskId, TransferEdge,
};
use crate::error::{Error, Result};
use crate::FORMAT_VERSION;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEntry {
    pub edge: TransferEdge,
    pub p: f64,
}

/// Parameters a taxonomy was solved under, with defaults filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyConfig {
    pub budget: f64,
    pub max_order: usize,
    pub cost_mode: CostMode,
    pub importance: BTreeMap<TaskId, f64>,
    pub costs: BTreeMap<TaskId, f64>,
}

impl TaxonomyConfig {
    pub fn snapshot(dict: &TaskDictionary, cfg: &SolverConfig, max_order: usize) -> Self {
        TaxonomyConfig {
            budget: cfg.budget,
            max_order,
            cost_mode: cfg.cost_mode,
            importance: dict.targets().map(|t| (t.clone(), cfg.importance_of(t))).collect(),
            costs: dict.tasks().iter().map(|t| (t.id.clone(), cfg.cost_of(&t.id))).collect(),
        }
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            budget: self.budget,
            importance: self.importance.clone(),
            costs: self.costs.clone(),
            cost_mode: self.cost_mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Taxonomy {
    /// Tasks trained from scratch, sorted.
    pub sources: Vec<TaskId>,
    /// One entry per target, sorted by target.
    pub policy: BTreeMap<TaskId, PolicyEntry>,
    pub objective: f64,
    pub config: TaxonomyConfig,
    pub node_count: usize,
}

#[derive(Serialize, Deserialize)]
struct TaxonomyFile {
    #[serde(default = "default_format_version")]
    format_version: u32,
    objective: f64,
    sources: Vec<TaskId>,
    policy: Vec<PolicyLine>,
    config: TaxonomyConfig,
    solver: SolverStats,
}

#[derive(Serialize, Deserialize)]
struct PolicyLine {
    target: TaskId,
    sources: Vec<TaskId>,
    order: usize,
    p: f64,
}

#[derive(Serialize, Deserialize)]
struct SolverStats {
    status: SolveStatus,
    node_count: usize,
}

impl Taxonomy {
    /// Budget consumed by this policy under its own cost mode.
    pub fn cost(&self) -> f64 {
        match self.config.cost_mode {
            CostMode::Nodes => self.sources.iter().map(|s| self.config.costs[s]).sum(),
            CostMode::Edges => self
                .policy
                .values()
                .map(|e| e.edge.sources().iter().map(|s| self.config.costs[s]).sum::<f64>())
                .sum(),
        }
    }

    /// Checks the structural invariants: one edge per target, every policy
    /// source selected, and the budget respected.
    pub fn validate(&self, dict: &TaskDictionary) -> Result<()> {
        let selected: BTreeSet<&TaskId> = self.sources.iter().collect();
        for target in dict.targets() {
            let entry = self
                .policy
                .get(target)
                .ok_or_else(|| Error::Structural(format!("target `{target}` has no transfer")))?;
            if entry.edge.target() != target {
                return Err(Error::Structural(format!("policy of `{target}` is {}", entry.edge)));
            }
            if let Some(s) = entry.edge.sources().iter().find(|s| !selected.contains(s)) {
                return Err(Error::Structural(format!(
                    "edge {} uses unselected source `{s}`",
                    entry.edge
                )));
            }
        }
        if self.policy.len() != dict.targets().count() {
            return Err(Error::Structural("policy lists tasks that are not targets".into()));
        }
        if self.cost() > self.config.budget + TOLERANCE {
            return Err(Error::Structural(format!(
                "cost {} exceeds budget {}",
                self.cost(),
                self.config.budget
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = TaxonomyFile {
            format_version: FORMAT_VERSION,
            objective: self.objective,
            sources: self.sources.clone(),
            policy: self
                .policy
                .iter()
                .map(|(t, e)| PolicyLine {
                    target: t.clone(),
                    sources: e.edge.sources().to_vec(),
                    order: e.edge.order(),
                    p: e.p,
                })
                .collect(),
            config: self.config.clone(),
            solver: SolverStats {
                status: SolveStatus::Optimal,
                node_count: self.node_count,
            },
        };
        serde_json::to_string_pretty(&file).expect("taxonomy serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TaxonomyFile =
            serde_json::from_str(text).map_err(|e| Error::json("taxonomy", e))?;
        check_format_version(file.format_version)?;
        let mut policy = BTreeMap::new();
        for line in file.policy {
            if line.order != line.sources.len() {
                return Err(Error::Schema(format!("order mismatch for target `{}`", line.target)));
            }
            let edge = TransferEdge::new(line.sources, line.target.clone())?;
            policy.insert(line.target, PolicyEntry { edge, p: line.p });
        }
        Ok(Taxonomy {
            sources: file.sources,
            policy,
            objective: file.objective,
            config: file.config,
            node_count: file.solver.node_count,
        })
    }

    /// Graphviz rendering: one node per task, fan-in edges from each source
    /// of a chosen transfer to its target. Source-only tasks are dimmed and
    /// fully supervised targets get a double border.
    pub fn to_dot(&self, dict: &TaskDictionary) -> String {
        let selected: BTreeSet<&TaskId> = self.sources.iter().collect();
        let mut out = String::from("digraph taxonomy {\n  rankdir=LR;\n  node [shape=ellipse];\n");
        for task in dict.tasks() {
            let mut attrs = vec![format!("label={}", quote(task.id.as_str()))];
            if !task.is_target {
                attrs.push("color=gray60".into());
                attrs.push("fontcolor=gray60".into());
            }
            if selected.contains(&task.id) {
                attrs.push("style=filled".into());
                attrs.push(if task.is_target { "fillcolor=lightblue".into() } else { "fillcolor=gray90".into() });
            }
            if self.policy.get(&task.id).is_some_and(|e| e.edge.is_self_edge()) {
                attrs.push("peripheries=2".into());
            }
            let _ = writeln!(out, "  {} [{}];", quote(task.id.as_str()), attrs.join(", "));
        }
        for (target, entry) in &self.policy {
            if entry.edge.is_self_edge() {
                continue;
            }
            for s in entry.edge.sources() {
                let _ = writeln!(
                    out,
                    "  {} -> {} [label=\"{}\", tooltip=\"order {} p={}\"];",
                    quote(s.as_str()),
                    quote(target.as_str()),
                    entry.edge.order(),
                    entry.edge.order(),
                    entry.p
                );
            }
        }
        out.push_str("}\n");
        out
    }
}

fn quote(id: &str) -> String {
    format!("\"{}\"", id.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Reads the policy off an optimal BIP solution and validates it.
pub fn extract_taxonomy(
    sol: &BipSolution,
    inst: &BipInstance,
    dict: &TaskDictionary,
    config: TaxonomyConfig,
) -> Result<Taxonomy> {
    if sol.status != SolveStatus::Optimal {
        return Err(Error::Infeasible {
            budget: config.budget,
        });
    }
    if let Some(r) = inst.first_violation(&sol.x) {
        return Err(Error::Structural(format!("row {r} violated")));
    }
    let mut sources = Vec::new();
    let mut policy = BTreeMap::new();
    for (var, &on) in inst.variables().iter().zip(&sol.x) {
        if !on {
            continue;
        }
        match var {
            Variable::Node { task } => sources.push(task.clone()),
            Variable::Edge { edge, p } => {
                let edge = TransferEdge::try_from(edge.clone())?;
                let target = edge.target().clone();
                if policy.insert(target.clone(), PolicyEntry { edge, p: *p }).is_some() {
                    return Err(Error::Structural(format!("target `{target}` has two transfers")));
                }
            }
        }
    }
    sources.sort();
    let taxonomy = Taxonomy {
        sources,
        policy,
        objective: sol.objective,
        config,
        node_count: sol.node_count,
    };
    taxonomy.validate(dict)?;
    Ok(taxonomy)
}
