//! Regression trees on boosting residuals, cost-complexity pruning and extraction of
//! the leaf with the largest absolute mean as a rule feature.

mod rule;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use rule::{apply_rule, simplify, Condition, ConditionValue, Relation, RuleFeature};

use crate::data::{ColumnInfo, ColumnKind, VerticalMatrix};
use crate::error::{EblrError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// Minimum split gain as a fraction of the root sum of squares.
    pub eta: f64,
    pub min_leaf: usize,
    pub max_depth: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig { eta: 0.001, min_leaf: 5, max_depth: 8 }
    }
}

impl TreeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(EblrError::Config(format!("eta must be a nonnegative real, got {}", self.eta)));
        }
        if self.min_leaf == 0 || self.max_depth == 0 {
            return Err(EblrError::Config("min_leaf and max_depth must be positive".into()));
        }
        Ok(())
    }
}

/// Rows with `x <= threshold` go left.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub column: ColumnInfo,
    pub threshold: f64,
}

impl Split {
    /// Conditions describing the left and right children.
    fn conditions(&self) -> (Condition, Condition) {
        let c = &self.column;
        match &c.kind {
            ColumnKind::Numeric => (Condition::le(&c.name, self.threshold), Condition::gt(&c.name, self.threshold)),
            ColumnKind::Binary => (Condition::eq(&c.name, "0"), Condition::eq(&c.name, "1")),
            ColumnKind::OneHot { level } => (Condition::ne(&c.source, level), Condition::eq(&c.source, level)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub split: Option<Split>,
    pub children: Option<(usize, usize)>,
    pub parent: Option<usize>,
    pub mean: f64,
    pub count: usize,
    /// Sum of squared deviations from `mean` over the node's training rows.
    pub sse: f64,
    /// Reduction in SSE achieved by the node's split; zero for leaves.
    pub gain: f64,
    pub depth: usize,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub const ROOT: usize = 0;

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn root(&self) -> &Node {
        &self.nodes[Self::ROOT]
    }

    /// Leaf ids, left to right.
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![Self::ROOT];
        while let Some(id) = stack.pop() {
            match self.nodes[id].children {
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => out.push(id),
            }
        }
        out
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().len()
    }

    pub fn sample_share(&self, id: usize) -> f64 {
        self.nodes[id].count as f64 / self.root().count as f64
    }

    /// Simplified conjunction of the splits on the path from the root to `id`.
    pub fn path_conditions(&self, id: usize) -> Vec<Condition> {
        let mut out = Vec::new();
        let mut child = id;
        while let Some(parent) = self.nodes[child].parent {
            let p = &self.nodes[parent];
            let (left, right) = p.split.as_ref().expect("internal node has a split").conditions();
            let (l, _) = p.children.expect("internal node has children");
            out.push(if l == child { left } else { right });
            child = parent;
        }
        out.reverse();
        simplify(&out)
    }

    /// Leaf id reached by each row of `m`.
    pub fn route(&self, m: &VerticalMatrix) -> Result<Vec<usize>> {
        let cols = self
            .nodes
            .iter()
            .map(|n| match &n.split {
                Some(s) => m.column(&s.column.name).map(Some).ok_or_else(|| EblrError::MissingColumn(s.column.name.clone())),
                None => Ok(None),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((0..m.n_rows())
            .map(|i| {
                let mut id = Self::ROOT;
                while let (Some((l, r)), Some(split)) = (self.nodes[id].children, &self.nodes[id].split) {
                    let x = cols[id].expect("split column resolved")[i];
                    id = if x <= split.threshold { l } else { r };
                }
                id
            })
            .collect())
    }
}

struct Candidate {
    column: usize,
    threshold: f64,
    gain: f64,
}

/// Best split of `rows` on one column: the largest SSE reduction over midpoints between
/// consecutive distinct values, the lowest threshold winning ties.
fn best_split_on_column(x: &[f64], e: &[f64], rows: &[usize], min_leaf: usize, column: usize) -> Option<Candidate> {
    let n = rows.len();
    let mean = rows.iter().map(|&i| e[i]).sum::<f64>() / n as f64;
    let mut sorted: Vec<(f64, f64)> = rows.iter().map(|&i| (x[i], e[i] - mean)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = sorted.iter().map(|p| p.1).sum();
    let base = total * total / n as f64;
    let mut best: Option<Candidate> = None;
    let mut left = 0.0;
    for k in 1..n {
        left += sorted[k - 1].1;
        let (a, b) = (sorted[k - 1].0, sorted[k].0);
        if k < min_leaf || n - k < min_leaf || a == b {
            continue;
        }
        let right = total - left;
        let gain = left * left / k as f64 + right * right / (n - k) as f64 - base;
        if best.as_ref().is_none_or(|c| gain > c.gain) {
            let mid = a + (b - a) / 2.0;
            let threshold = if mid < b { mid } else { a };
            best = Some(Candidate { column, threshold, gain });
        }
    }
    best
}

fn node_stats(e: &[f64], rows: &[usize]) -> (f64, f64) {
    let mean = rows.iter().map(|&i| e[i]).sum::<f64>() / rows.len() as f64;
    let sse = rows.iter().map(|&i| (e[i] - mean).powi(2)).sum();
    (mean, sse)
}

struct Grown {
    gain: f64,
    id: usize,
}

impl PartialEq for Grown {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Grown {}

impl PartialOrd for Grown {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Grown {
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain.total_cmp(&other.gain).then(other.id.cmp(&self.id))
    }
}

/// Grows a tree on `residuals` over every column of `m`, best split first, then prunes
/// with `cfg.eta`. Returns a single leaf when no split reduces the squared error.
pub fn fit_tree(m: &VerticalMatrix, residuals: &[f64], cfg: &TreeConfig) -> Result<RegressionTree> {
    let tree = grow_tree(m, residuals, cfg)?;
    Ok(prune(&tree, cfg.eta))
}

/// Unpruned growth.
pub fn grow_tree(m: &VerticalMatrix, residuals: &[f64], cfg: &TreeConfig) -> Result<RegressionTree> {
    cfg.validate()?;
    if residuals.len() != m.n_rows() {
        return Err(EblrError::Integrity(format!(
            "{} residuals for a matrix of {} rows",
            residuals.len(),
            m.n_rows()
        )));
    }
    if residuals.is_empty() {
        return Err(EblrError::Fit("cannot grow a tree on zero rows".into()));
    }
    let all: Vec<usize> = (0..m.n_rows()).collect();
    let (mean, sse) = node_stats(residuals, &all);
    let root = Node { split: None, children: None, parent: None, mean, count: all.len(), sse, gain: 0.0, depth: 0 };
    let mut nodes = vec![root];
    let mut members = vec![all];
    let mut best = vec![find_split(m, residuals, &members[0], &nodes[0], cfg)];
    let mut heap = BinaryHeap::new();
    if let Some(c) = &best[0] {
        heap.push(Grown { gain: c.gain, id: 0 });
    }
    while let Some(Grown { id, .. }) = heap.pop() {
        let cand = best[id].take().expect("queued nodes carry a split");
        let col = m.column_at(cand.column);
        let rows = std::mem::take(&mut members[id]);
        let (l_rows, r_rows): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| col[i] <= cand.threshold);
        let depth = nodes[id].depth + 1;
        let mut child_ids = [0; 2];
        for (slot, child_rows) in [l_rows, r_rows].into_iter().enumerate() {
            let (mean, sse) = node_stats(residuals, &child_rows);
            let child = Node { split: None, children: None, parent: Some(id), mean, count: child_rows.len(), sse, gain: 0.0, depth };
            let cid = nodes.len();
            let next = find_split(m, residuals, &child_rows, &child, cfg);
            if let Some(c) = &next {
                heap.push(Grown { gain: c.gain, id: cid });
            }
            nodes.push(child);
            members.push(child_rows);
            best.push(next);
            child_ids[slot] = cid;
        }
        let node = &mut nodes[id];
        node.split = Some(Split { column: m.columns()[cand.column].clone(), threshold: cand.threshold });
        node.children = Some((child_ids[0], child_ids[1]));
        node.gain = cand.gain;
    }
    // Renumber in preorder, the layout pruning produces.
    Ok(prune(&RegressionTree { nodes }, f64::NEG_INFINITY))
}

fn find_split(m: &VerticalMatrix, e: &[f64], rows: &[usize], node: &Node, cfg: &TreeConfig) -> Option<Candidate> {
    if node.depth >= cfg.max_depth || rows.len() < 2 * cfg.min_leaf || node.sse <= 0.0 {
        return None;
    }
    let per_column: Vec<Option<Candidate>> = (0..m.n_cols())
        .into_par_iter()
        .map(|j| best_split_on_column(m.column_at(j), e, rows, cfg.min_leaf, j))
        .collect();
    let best = per_column
        .into_iter()
        .flatten()
        .fold(None::<Candidate>, |acc, c| match acc {
            Some(a) if a.gain >= c.gain => Some(a),
            _ => Some(c),
        })?;
    (best.gain > 1e-10 * node.sse).then_some(best)
}

/// Bottom-up collapse of every split whose gain is at most `eta` times the root SSE.
/// A split is only considered once both of its children are leaves.
pub fn prune(tree: &RegressionTree, eta: f64) -> RegressionTree {
    let limit = if eta == f64::NEG_INFINITY { eta } else { eta * tree.root().sse };
    let mut out = Vec::with_capacity(tree.nodes.len());
    copy_pruned(tree, RegressionTree::ROOT, None, limit, &mut out);
    RegressionTree { nodes: out }
}

fn copy_pruned(tree: &RegressionTree, id: usize, parent: Option<usize>, limit: f64, out: &mut Vec<Node>) -> usize {
    let new_id = out.len();
    let src = &tree.nodes[id];
    out.push(Node { children: None, split: None, gain: 0.0, parent, ..src.clone() });
    if let Some((l, r)) = src.children {
        let nl = copy_pruned(tree, l, Some(new_id), limit, out);
        let nr = copy_pruned(tree, r, Some(new_id), limit, out);
        if out[nl].is_leaf() && out[nr].is_leaf() && src.gain <= limit {
            out.truncate(new_id + 1);
        } else {
            let node = &mut out[new_id];
            node.children = Some((nl, nr));
            node.split = src.split.clone();
            node.gain = src.gain;
        }
    }
    new_id
}

/// Leaf with the largest absolute mean; ties go to the larger leaf, then the left-most.
pub fn worst_leaf(tree: &RegressionTree) -> Option<usize> {
    let leaves = tree.leaves();
    if leaves.len() < 2 {
        return None;
    }
    leaves.into_iter().reduce(|best, id| {
        let (b, c) = (&tree.nodes[best], &tree.nodes[id]);
        match c.mean.abs().total_cmp(&b.mean.abs()).then(c.count.cmp(&b.count)) {
            Ordering::Greater => id,
            _ => best,
        }
    })
}

/// Rule for the worst leaf, or `None` when the tree never split.
pub fn select_worst_leaf(tree: &RegressionTree, iteration: usize) -> Option<RuleFeature> {
    let id = worst_leaf(tree)?;
    let node = &tree.nodes[id];
    Some(RuleFeature {
        conditions: tree.path_conditions(id),
        source_iteration: iteration,
        leaf_mean: node.mean,
        leaf_share: tree.sample_share(id),
    })
}

pub fn tree_predict(tree: &RegressionTree, m: &VerticalMatrix) -> Result<Vec<f64>> {
    Ok(tree.route(m)?.into_iter().map(|id| tree.nodes[id].mean).collect())
}
