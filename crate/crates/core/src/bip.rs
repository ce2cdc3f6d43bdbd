//! Binary integer program for taxonomy selection.
//!
//! Variables are one binary per candidate edge followed by one per task.
//! Rows are all of the form `a . x <= b`:
//!
//! * one row per edge forcing its sources to be selected when it is,
//! * two rows per target encoding "exactly one incoming edge",
//! * one budget row over label costs.
//!
//! [`solve`] is an exact best-first branch-and-bound. Each node runs bound
//! propagation over the rows and is bounded by the LP relaxation of a
//! multiple-choice knapsack: one option per target, where each option is
//! charged the label cost of its not-yet-selected sources split evenly across
//! the targets that could share them. When the budget sits on sources only,
//! a second bound from per-source marginal gains is also taken and the
//! smaller one used. [`brute_force`] enumerates every assignment and exists
//! to cross-check the solver.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::ahp::AffinityMatrix;
use crate::domain::{
    check_format_version, default_format_version, EdgeRepr, TaskDictionary, TaskId, TransferEdge,
};
use crate::error::{Error, Result};
use crate::FORMAT_VERSION;

/// Absolute tolerance for objective comparisons and row checks.
pub const TOLERANCE: f64 = 1e-9;
/// Largest instance [`brute_force`] accepts.
pub const BRUTE_FORCE_MAX_VARIABLES: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostMode {
    /// Label costs are paid once per selected source task.
    #[default]
    Nodes,
    /// Label costs are paid per selected edge (sum over its sources).
    Edges,
}

impl std::str::FromStr for CostMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nodes" => Ok(CostMode::Nodes),
            "edges" => Ok(CostMode::Edges),
            other => Err(Error::InvalidConfig(format!("unknown cost mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub budget: f64,
    /// Per-target importance; missing targets weigh 1.
    #[serde(default)]
    pub importance: BTreeMap<TaskId, f64>,
    /// Per-task label cost; missing tasks cost 1.
    #[serde(default)]
    pub costs: BTreeMap<TaskId, f64>,
    #[serde(default)]
    pub cost_mode: CostMode,
}

impl SolverConfig {
    pub fn with_budget(budget: f64) -> Self {
        SolverConfig {
            budget,
            importance: BTreeMap::new(),
            costs: BTreeMap::new(),
            cost_mode: CostMode::Nodes,
        }
    }

    pub fn importance_of(&self, target: &TaskId) -> f64 {
        self.importance.get(target).copied().unwrap_or(1.0)
    }

    pub fn cost_of(&self, task: &TaskId) -> f64 {
        self.costs.get(task).copied().unwrap_or(1.0)
    }

    /// Label cost of one edge under [`CostMode::Edges`].
    pub fn edge_cost(&self, edge: &TransferEdge) -> f64 {
        edge.sources().iter().map(|s| self.cost_of(s)).sum()
    }

    pub fn validate(&self, dict: &TaskDictionary) -> Result<()> {
        if !(self.budget.is_finite() && self.budget > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "budget must be positive, got {}",
                self.budget
            )));
        }
        for (task, &r) in &self.importance {
            if !dict.is_target(task) {
                return Err(Error::UnknownTask {
                    name: task.to_string(),
                    locator: Some("importance".into()),
                });
            }
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::InvalidConfig(format!("importance of `{task}` must be positive")));
            }
        }
        for (task, &l) in &self.costs {
            if dict.get(task).is_none() {
                return Err(Error::UnknownTask {
                    name: task.to_string(),
                    locator: Some("costs".into()),
                });
            }
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidConfig(format!("label cost of `{task}` must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Variable {
    Edge {
        #[serde(flatten)]
        edge: EdgeRepr,
        p: f64,
    },
    Node {
        task: TaskId,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowTag {
    #[serde(rename = "constraint-I")]
    SourcesSelected,
    #[serde(rename = "constraint-II-lower")]
    OneTransferLower,
    #[serde(rename = "constraint-II-upper")]
    OneTransferUpper,
    #[serde(rename = "budget")]
    Budget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub tag: RowTag,
    /// Sparse `(variable index, coefficient)` pairs.
    pub coefs: Vec<(usize, f64)>,
    pub b: f64,
}

impl Row {
    pub fn activity(&self, x: &[bool]) -> f64 {
        self.coefs.iter().filter(|(k, _)| x[*k]).map(|(_, a)| a).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipInstance {
    #[serde(default = "default_format_version")]
    format_version: u32,
    variables: Vec<Variable>,
    c: Vec<f64>,
    rows: Vec<Row>,
}

impl BipInstance {
    /// Assembles an instance from raw parts, checking dimensions and indices.
    pub fn from_parts(variables: Vec<Variable>, c: Vec<f64>, rows: Vec<Row>) -> Result<Self> {
        let inst = BipInstance {
            format_version: FORMAT_VERSION,
            variables,
            c,
            rows,
        };
        inst.check_shape()?;
        Ok(inst)
    }

    fn check_shape(&self) -> Result<()> {
        check_format_version(self.format_version)?;
        let n = self.variables.len();
        if self.c.len() != n {
            return Err(Error::Schema(format!(
                "objective has {} entries for {n} variables",
                self.c.len()
            )));
        }
        if self.c.iter().any(|c| !c.is_finite()) {
            return Err(Error::Schema("objective entries must be finite".into()));
        }
        for row in &self.rows {
            if !row.b.is_finite() || row.coefs.iter().any(|(k, a)| *k >= n || !a.is_finite()) {
                return Err(Error::Schema("row references an unknown variable or is not finite".into()));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let inst: BipInstance =
            serde_json::from_str(text).map_err(|e| Error::json("instance", e))?;
        inst.check_shape()?;
        Ok(inst)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes") + "\n"
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn objective(&self, x: &[bool]) -> f64 {
        self.c.iter().zip(x).filter(|(_, &on)| on).map(|(c, _)| c).sum()
    }

    /// Index of the first row violated by `x`, if any.
    pub fn first_violation(&self, x: &[bool]) -> Option<usize> {
        self.rows
            .iter()
            .position(|row| row.activity(x) > row.b + TOLERANCE)
    }

    pub fn is_feasible(&self, x: &[bool]) -> bool {
        x.len() == self.len() && self.first_violation(x).is_none()
    }
}

/// Builds the instance over `edges` (deduplicated and sorted canonically),
/// followed by one node variable per dictionary task.
pub fn build_instance(
    affinity: &AffinityMatrix,
    dict: &TaskDictionary,
    edges: &[TransferEdge],
    cfg: &SolverConfig,
) -> Result<BipInstance> {
    cfg.validate(dict)?;
    if dict.targets().next().is_none() {
        return Err(Error::NoTargets);
    }
    let mut edges = edges.to_vec();
    edges.sort();
    edges.dedup();

    let mut variables = Vec::with_capacity(edges.len() + dict.len());
    let mut c = Vec::with_capacity(edges.len() + dict.len());
    for edge in &edges {
        edge.validate(dict, None)?;
        let p = affinity
            .get(edge)
            .ok_or_else(|| Error::MissingAffinity(edge.to_string()))?;
        c.push(cfg.importance_of(edge.target()) * p);
        variables.push(Variable::Edge {
            edge: edge.into(),
            p,
        });
    }
    let node_base = edges.len();
    for task in dict.tasks() {
        variables.push(Variable::Node {
            task: task.id.clone(),
        });
        c.push(0.0);
    }
    let node_of = |t: &TaskId| node_base + dict.position(t).expect("validated edge");

    let mut rows = Vec::new();
    for (i, edge) in edges.iter().enumerate() {
        let mut coefs = vec![(i, edge.order() as f64)];
        coefs.extend(edge.sources().iter().map(|s| (node_of(s), -1.0)));
        rows.push(Row {
            tag: RowTag::SourcesSelected,
            coefs,
            b: 0.0,
        });
    }
    for target in dict.targets() {
        let members: Vec<usize> = edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.target() == target)
            .map(|(i, _)| i)
            .collect();
        rows.push(Row {
            tag: RowTag::OneTransferUpper,
            coefs: members.iter().map(|&i| (i, 1.0)).collect(),
            b: 1.0,
        });
        rows.push(Row {
            tag: RowTag::OneTransferLower,
            coefs: members.iter().map(|&i| (i, -1.0)).collect(),
            b: -1.0,
        });
    }
    let budget_coefs = match cfg.cost_mode {
        CostMode::Nodes => dict
            .tasks()
            .iter()
            .enumerate()
            .map(|(k, t)| (node_base + k, cfg.cost_of(&t.id)))
            .collect(),
        CostMode::Edges => edges
            .iter()
            .enumerate()
            .map(|(i, e)| (i, cfg.edge_cost(e)))
            .collect(),
    };
    rows.push(Row {
        tag: RowTag::Budget,
        coefs: budget_coefs,
        b: cfg.budget,
    });
    BipInstance::from_parts(variables, c, rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BipSolution {
    pub x: Vec<bool>,
    pub objective: f64,
    pub status: SolveStatus,
    pub node_count: usize,
}

impl BipSolution {
    fn infeasible(n: usize, node_count: usize) -> Self {
        BipSolution {
            x: vec![false; n],
            objective: 0.0,
            status: SolveStatus::Infeasible,
            node_count,
        }
    }
}

/// Row structure recognised from tags, used for bounding only. Feasibility is
/// always decided on the raw rows.
struct Structure {
    /// Member variables of each one-transfer group and whether it is mandatory.
    groups: Vec<(Vec<usize>, bool)>,
    group_of: Vec<Option<usize>>,
    /// Variables that must be 1 whenever the key variable is 1.
    requires: Vec<Vec<usize>>,
    /// Nonnegative budget coefficients, when a usable budget row exists.
    budget: Option<(Vec<f64>, f64)>,
    /// Per variable, the rows it appears in.
    var_rows: Vec<Vec<(usize, f64)>>,
    /// Static branching order: node variables first, then edges, by index.
    branch_order: Vec<usize>,
    prefer_one: Vec<bool>,
    /// Budget on sources only, with every rewarded variable in a group: the
    /// marginal-gain bound applies.
    gain_bound: bool,
}

impl Structure {
    fn new(inst: &BipInstance) -> Self {
        let n = inst.len();
        let mut var_rows = vec![Vec::new(); n];
        for (r, row) in inst.rows.iter().enumerate() {
            for &(k, a) in &row.coefs {
                var_rows[k].push((r, a));
            }
        }

        let index_set = |row: &Row| {
            let mut v: Vec<usize> = row.coefs.iter().filter(|(_, a)| *a != 0.0).map(|(k, _)| *k).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let lowers: Vec<Vec<usize>> = inst
            .rows
            .iter()
            .filter(|r| {
                r.tag == RowTag::OneTransferLower
                    && r.b == -1.0
                    && r.coefs.iter().all(|(_, a)| *a == -1.0 || *a == 0.0)
            })
            .map(index_set)
            .collect();
        let mut groups = Vec::new();
        let mut group_of = vec![None; n];
        for row in &inst.rows {
            let unit = row.coefs.iter().all(|(_, a)| *a == 1.0 || *a == 0.0);
            if row.tag != RowTag::OneTransferUpper || row.b != 1.0 || !unit {
                continue;
            }
            let members = index_set(row);
            if members.iter().any(|&k| group_of[k].is_some()) {
                continue;
            }
            let mandatory = lowers.contains(&members);
            for &k in &members {
                group_of[k] = Some(groups.len());
            }
            groups.push((members, mandatory));
        }

        let mut requires = vec![Vec::new(); n];
        for row in &inst.rows {
            if row.tag != RowTag::SourcesSelected || row.b != 0.0 {
                continue;
            }
            let pos: Vec<&(usize, f64)> = row.coefs.iter().filter(|(_, a)| *a > 0.0).collect();
            let neg: Vec<usize> = row.coefs.iter().filter(|(_, a)| *a < 0.0).map(|(k, _)| *k).collect();
            if let [&(edge, a)] = pos.as_slice() {
                let total_neg: f64 = row.coefs.iter().filter(|(_, a)| *a < 0.0).map(|(_, a)| -a).sum();
                // The edge forces every source only if it outweighs all of them.
                if (a - total_neg).abs() <= TOLERANCE && row.coefs.iter().all(|(_, c)| *c > 0.0 || *c == -1.0) {
                    requires[edge].extend(neg);
                }
            }
        }

        let budget = inst
            .rows
            .iter()
            .find(|r| r.tag == RowTag::Budget)
            .filter(|r| r.coefs.iter().all(|(_, a)| *a >= 0.0))
            .map(|r| {
                let mut coef = vec![0.0; n];
                for &(k, a) in &r.coefs {
                    coef[k] += a;
                }
                (coef, r.b)
            });

        let is_node: Vec<bool> = inst
            .variables
            .iter()
            .map(|v| matches!(v, Variable::Node { .. }))
            .collect();
        let mut branch_order: Vec<usize> = (0..n).filter(|&k| is_node[k]).collect();
        branch_order.extend((0..n).filter(|&k| !is_node[k]));

        let gain_bound = budget.as_ref().is_some_and(|(coef, _)| {
            (0..n).all(|k| {
                inst.c[k] >= 0.0
                    && match group_of[k] {
                        Some(_) => coef[k] == 0.0,
                        None => inst.c[k] == 0.0,
                    }
            })
        });

        Structure {
            groups,
            group_of,
            requires,
            budget,
            var_rows,
            branch_order,
            prefer_one: is_node.iter().map(|node| !node).collect(),
            gain_bound,
        }
    }
}

type Assignment = Vec<Option<bool>>;

/// Bound propagation to a fixpoint. Returns `false` on a provably violated row.
/// Only the rows in `start` are examined at first; callers pass every row at
/// the root and the rows of the newly fixed variable below it.
fn propagate(inst: &BipInstance, st: &Structure, fixed: &mut Assignment, start: &[usize]) -> bool {
    let mut dirty: Vec<bool> = vec![false; inst.rows.len()];
    let mut queue: Vec<usize> = start.to_vec();
    for &r in start {
        dirty[r] = true;
    }
    while let Some(r) = queue.pop() {
        dirty[r] = false;
        let row = &inst.rows[r];
        let mut min_act = 0.0;
        for &(k, a) in &row.coefs {
            match fixed[k] {
                Some(true) => min_act += a,
                Some(false) => {}
                None => min_act += a.min(0.0),
            }
        }
        if min_act > row.b + TOLERANCE {
            return false;
        }
        for &(k, a) in &row.coefs {
            if fixed[k].is_some() || a == 0.0 {
                continue;
            }
            if min_act + a.abs() > row.b + TOLERANCE {
                fixed[k] = Some(a < 0.0);
                for &(other, _) in &st.var_rows[k] {
                    if !dirty[other] {
                        dirty[other] = true;
                        queue.push(other);
                    }
                }
            }
        }
    }
    true
}

/// Upper bound on the objective of any completion of `fixed`, or `None` when
/// the relaxation is already infeasible.
fn bound(inst: &BipInstance, st: &Structure, fixed: &Assignment) -> Option<f64> {
    let shared = share_bound(inst, st, fixed)?;
    if st.gain_bound {
        Some(shared.min(gain_bound(inst, st, fixed)))
    } else {
        Some(shared)
    }
}

/// Multiple-choice knapsack relaxation with source costs split across the
/// groups that could use them.
fn share_bound(inst: &BipInstance, st: &Structure, fixed: &Assignment) -> Option<f64> {
    let n = inst.len();
    let mut value = 0.0;
    for k in 0..n {
        match fixed[k] {
            Some(true) => value += inst.c[k],
            None if st.group_of[k].is_none() => value += inst.c[k].max(0.0),
            _ => {}
        }
    }

    // Free options of every group without a selected member; `usize::MAX`
    // stands for "no edge" in groups that may stay empty.
    let mut open: Vec<Vec<usize>> = Vec::new();
    for (members, mandatory) in &st.groups {
        if members.iter().any(|&k| fixed[k] == Some(true)) {
            continue;
        }
        let mut options: Vec<usize> = members.iter().copied().filter(|&k| fixed[k].is_none()).collect();
        if options.is_empty() && *mandatory {
            return None;
        }
        if !mandatory {
            options.push(usize::MAX);
        }
        open.push(options);
    }

    let mut remaining = f64::INFINITY;
    let mut shares = vec![0.0; n];
    if let Some((coef, b)) = &st.budget {
        remaining = b - (0..n).filter(|&k| fixed[k] == Some(true)).map(|k| coef[k]).sum::<f64>();
        // How many open groups could charge each free budget variable.
        let mut users = vec![0usize; n];
        // Last group that counted each variable, to count it once per group.
        let mut stamp = vec![usize::MAX; n];
        for (gi, g) in open.iter().enumerate() {
            for &e in g.iter().filter(|&&e| e != usize::MAX) {
                for &k in st.requires[e].iter().chain(std::iter::once(&e)) {
                    if fixed[k].is_none() && coef[k] > 0.0 && stamp[k] != gi {
                        stamp[k] = gi;
                        users[k] += 1;
                    }
                }
            }
        }
        for g in &open {
            for &e in g.iter().filter(|&&e| e != usize::MAX) {
                let mut share = 0.0;
                for (i, &k) in st.requires[e].iter().chain(std::iter::once(&e)).enumerate() {
                    let repeated = st.requires[e][..i.min(st.requires[e].len())].contains(&k);
                    if fixed[k].is_none() && coef[k] > 0.0 && !repeated {
                        share += coef[k] / users[k] as f64;
                    }
                }
                shares[e] = share;
            }
        }
    }

    let mut base_share = 0.0;
    let mut steps: Vec<(f64, f64)> = Vec::new();
    for g in &open {
        let mut options: Vec<(f64, f64)> = g
            .iter()
            .map(|&e| {
                if e == usize::MAX {
                    (0.0, 0.0)
                } else {
                    (shares[e], inst.c[e])
                }
            })
            .collect();
        if options.is_empty() {
            return None;
        }
        options.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
        let (mut s0, mut v0) = options[0];
        base_share += s0;
        value += v0;
        // Upper concave hull of (share, value), walked by decreasing slope.
        loop {
            let mut best: Option<(f64, f64, f64)> = None;
            for &(s, v) in &options {
                if v <= v0 || s < s0 {
                    continue;
                }
                let slope = if s - s0 <= 0.0 { f64::INFINITY } else { (v - v0) / (s - s0) };
                let better = match best {
                    None => true,
                    Some((bs, _, bslope)) => slope > bslope || (slope == bslope && s > bs),
                };
                if better {
                    best = Some((s, v, slope));
                }
            }
            match best {
                Some((s, v, _)) => {
                    steps.push((s - s0, v - v0));
                    s0 = s;
                    v0 = v;
                }
                None => break,
            }
        }
    }
    if base_share > remaining + TOLERANCE {
        return None;
    }
    let mut left = remaining - base_share;
    steps.sort_by(|a, b| {
        let sa = if a.0 <= 0.0 { f64::INFINITY } else { a.1 / a.0 };
        let sb = if b.0 <= 0.0 { f64::INFINITY } else { b.1 / b.0 };
        sb.total_cmp(&sa)
    });
    for (ds, dv) in steps {
        if ds <= left {
            left -= ds;
            value += dv;
        } else {
            if left > 0.0 {
                value += dv * left / ds;
            }
            break;
        }
    }
    Some(value)
}

/// Each group keeps the value of its best option whose sources are all
/// selected. Adding a set of sources can raise a group only through an
/// option with a missing source in that set, so crediting every missing
/// source of an option with the option's full gain over-counts the true
/// improvement. The best group gains per source then go through a
/// fractional knapsack over the remaining budget.
fn gain_bound(inst: &BipInstance, st: &Structure, fixed: &Assignment) -> f64 {
    gain_bound_with_gains(inst, st, fixed).0
}

/// The gain bound, plus the per-variable gains it was built from.
fn gain_bound_with_gains(inst: &BipInstance, st: &Structure, fixed: &Assignment) -> (f64, Vec<f64>) {
    let (coef, b) = st.budget.as_ref().expect("gain bound needs a budget row");
    let n = inst.len();
    let mut remaining = *b;
    for k in 0..n {
        if fixed[k] == Some(true) {
            remaining -= coef[k];
        }
    }
    let mut value = 0.0;
    let mut gain = vec![0.0; n];
    let mut best_here = vec![0.0f64; n];
    let mut touched: Vec<usize> = Vec::new();
    for (members, _) in &st.groups {
        if let Some(&k) = members.iter().find(|&&k| fixed[k] == Some(true)) {
            value += inst.c[k];
            continue;
        }
        let usable = |e: usize| fixed[e].is_none() && st.requires[e].iter().all(|&k| fixed[k] != Some(false));
        let current = members
            .iter()
            .copied()
            .filter(|&e| usable(e) && st.requires[e].iter().all(|&k| fixed[k] == Some(true)))
            .map(|e| inst.c[e])
            .fold(0.0, f64::max);
        value += current;
        for &e in members.iter().filter(|&&e| usable(e)) {
            let up = inst.c[e] - current;
            if up <= 0.0 {
                continue;
            }
            for &k in st.requires[e].iter().filter(|&&k| fixed[k].is_none()) {
                if best_here[k] == 0.0 {
                    touched.push(k);
                }
                best_here[k] = best_here[k].max(up);
            }
        }
        for k in touched.drain(..) {
            gain[k] += best_here[k];
            best_here[k] = 0.0;
        }
    }
    let mut items: Vec<(f64, f64)> = Vec::new();
    for k in (0..n).filter(|&k| gain[k] > 0.0) {
        if coef[k] > 0.0 {
            items.push((coef[k], gain[k]));
        } else {
            value += gain[k];
        }
    }
    items.sort_by(|a, b| (b.1 * a.0).total_cmp(&(a.1 * b.0)));
    let mut left = remaining.max(0.0);
    for (w, g) in items {
        if w <= left {
            left -= w;
            value += g;
        } else {
            value += g * left / w;
            break;
        }
    }
    (value, gain)
}

struct SearchNode {
    bound: f64,
    depth: usize,
    seq: usize,
    fixed: Assignment,
}

impl PartialEq for SearchNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for SearchNode {}

impl PartialOrd for SearchNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SearchNode {
    // Highest bound first, then deepest, then earliest created.
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

/// Exact best-first branch-and-bound.
///
/// When the gain bound applies, the free variable with the largest credited
/// gain is branched on next (lowest index among equals). Otherwise node
/// variables are branched before edge variables, each in index order. Edges
/// try 1 before 0; nodes try 0 before 1. An incumbent is
/// only replaced by a strictly better objective (by more than [`TOLERANCE`]).
pub fn solve(inst: &BipInstance) -> BipSolution {
    let n = inst.len();
    let st = Structure::new(inst);
    let mut root: Assignment = vec![None; n];
    let all_rows: Vec<usize> = (0..inst.rows.len()).collect();
    if !propagate(inst, &st, &mut root, &all_rows) {
        return BipSolution::infeasible(n, 1);
    }
    let Some(root_bound) = bound(inst, &st, &root) else {
        return BipSolution::infeasible(n, 1);
    };

    let mut heap = BinaryHeap::new();
    let mut seq = 0usize;
    heap.push(SearchNode {
        bound: root_bound,
        depth: 0,
        seq,
        fixed: root,
    });
    let mut incumbent: Option<(f64, Vec<bool>)> = None;
    let mut node_count = 0usize;

    while let Some(node) = heap.pop() {
        if let Some((best, _)) = &incumbent {
            if node.bound <= best + TOLERANCE {
                break;
            }
        }
        node_count += 1;
        let pick = if st.gain_bound {
            let (_, gains) = gain_bound_with_gains(inst, &st, &node.fixed);
            let mut best: Option<usize> = None;
            for k in 0..n {
                if node.fixed[k].is_none() && gains[k] > 0.0 && best.is_none_or(|b| gains[k] > gains[b]) {
                    best = Some(k);
                }
            }
            best.or_else(|| st.branch_order.iter().copied().find(|&k| node.fixed[k].is_none()))
        } else {
            st.branch_order.iter().copied().find(|&k| node.fixed[k].is_none())
        };
        let Some(var) = pick else {
            let x: Vec<bool> = node.fixed.iter().map(|v| v.expect("leaf")).collect();
            if inst.is_feasible(&x) {
                let obj = inst.objective(&x);
                let improves = incumbent.as_ref().is_none_or(|(best, _)| obj > best + TOLERANCE);
                if improves {
                    incumbent = Some((obj, x));
                }
            }
            continue;
        };
        let first = st.prefer_one[var];
        for value in [first, !first] {
            let mut child = node.fixed.clone();
            child[var] = Some(value);
            let touched: Vec<usize> = st.var_rows[var].iter().map(|&(r, _)| r).collect();
            if !propagate(inst, &st, &mut child, &touched) {
                continue;
            }
            let Some(b) = bound(inst, &st, &child) else {
                continue;
            };
            if incumbent.as_ref().is_some_and(|(best, _)| b <= best + TOLERANCE) {
                continue;
            }
            seq += 1;
            heap.push(SearchNode {
                bound: b,
                depth: node.depth + 1,
                seq,
                fixed: child,
            });
        }
    }

    match incumbent {
        Some((objective, x)) => BipSolution {
            x,
            objective,
            status: SolveStatus::Optimal,
            node_count,
        },
        None => BipSolution::infeasible(n, node_count),
    }
}

/// Exhaustive enumeration of all `2^n` assignments in Gray-code order.
pub fn brute_force(inst: &BipInstance) -> Result<BipSolution> {
    let n = inst.len();
    if n > BRUTE_FORCE_MAX_VARIABLES {
        return Err(Error::TooLarge(n));
    }
    let mut var_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (r, row) in inst.rows.iter().enumerate() {
        for &(k, a) in &row.coefs {
            var_rows[k].push((r, a));
        }
    }
    let mut activity = vec![0.0; inst.rows.len()];
    let mut violated = inst.rows.iter().filter(|r| 0.0 > r.b + TOLERANCE).count();
    let mut bits: u32 = 0;
    let mut value = 0.0;
    let mut best: Option<(f64, u32)> = if violated == 0 { Some((0.0, 0)) } else { None };

    for step in 1u64..(1u64 << n) {
        let k = step.trailing_zeros() as usize;
        bits ^= 1 << k;
        let sign = if bits & (1 << k) != 0 { 1.0 } else { -1.0 };
        value += sign * inst.c[k];
        for &(r, a) in &var_rows[k] {
            let before = activity[r] > inst.rows[r].b + TOLERANCE;
            activity[r] += sign * a;
            let after = activity[r] > inst.rows[r].b + TOLERANCE;
            match (before, after) {
                (false, true) => violated += 1,
                (true, false) => violated -= 1,
                _ => {}
            }
        }
        if violated == 0 && best.is_none_or(|(b, _)| value > b + TOLERANCE) {
            best = Some((value, bits));
        }
    }

    Ok(match best {
        Some((_, bits)) => {
            let x: Vec<bool> = (0..n).map(|k| bits & (1 << k) != 0).collect();
            BipSolution {
                objective: inst.objective(&x),
                x,
                status: SolveStatus::Optimal,
                node_count: 1 << n,
            }
        }
        None => BipSolution::infeasible(n, 1 << n),
    })
}
