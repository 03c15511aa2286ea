#![allow(dead_code)]

use eblr_core::data::{ColumnInfo, VerticalMatrix};
use eblr_core::tree::{grow_tree, RegressionTree, TreeConfig};
use eblr_core::{fit_lasso, fit_ols, LassoConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Up to 12 rows and 3 columns with few distinct covariate values, so duplicate values
/// and ties in x are common while residuals stay continuous.
pub fn small_tree_instance(rng: &mut ChaCha8Rng) -> (VerticalMatrix, Vec<f64>) {
    let n = rng.random_range(2..=12);
    let p = rng.random_range(1..=3);
    let cols: Vec<Vec<f64>> = (0..p)
        .map(|_| {
            let levels = rng.random_range(2..=5);
            (0..n).map(|_| rng.random_range(0..levels) as f64 * 1.5 - 2.0).collect()
        })
        .collect();
    let e: Vec<f64> = (0..n).map(|_| normal(rng) * 3.0).collect();
    let info = (0..p).map(|j| ColumnInfo::numeric(format!("c{j}"))).collect();
    (VerticalMatrix::from_columns(info, cols, vec![0.0; n]).unwrap(), e)
}

fn sse(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (sum, n) = values.clone().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    let mean = sum / n as f64;
    values.map(|v| (v - mean).powi(2)).sum()
}

/// Exhaustive search over every column and every threshold between two consecutive
/// distinct values, scoring each by the directly computed child SSE.
pub fn brute_force_split(m: &VerticalMatrix, e: &[f64], rows: &[usize], min_leaf: usize) -> Option<(usize, f64, f64)> {
    let mut best: Option<(usize, f64, f64)> = None;
    for j in 0..m.n_cols() {
        let x = m.column_at(j);
        let mut values: Vec<f64> = rows.iter().map(|&i| x[i]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let left: Vec<f64> = rows.iter().filter(|&&i| x[i] <= t).map(|&i| e[i]).collect();
            let right: Vec<f64> = rows.iter().filter(|&&i| x[i] > t).map(|&i| e[i]).collect();
            if left.len() < min_leaf || right.len() < min_leaf {
                continue;
            }
            let total = sse(left.iter().copied()) + sse(right.iter().copied());
            if best.is_none_or(|b| total < b.2) {
                best = Some((j, t, total));
            }
        }
    }
    best
}

/// Training rows reaching every node, found by walking each row down from the root.
pub fn node_rows(tree: &RegressionTree, m: &VerticalMatrix) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); tree.nodes().len()];
    for i in 0..m.n_rows() {
        let mut id = RegressionTree::ROOT;
        loop {
            out[id].push(i);
            let node = tree.node(id);
            match (&node.split, node.children) {
                (Some(s), Some((l, r))) => {
                    id = if m.column(&s.column.name).unwrap()[i] <= s.threshold { l } else { r };
                }
                _ => break,
            }
        }
    }
    out
}

/// Checks every node of an unpruned tree against the exhaustive oracle: internal nodes
/// must use an SSE-optimal split, leaves must be unsplittable.
pub fn check_against_brute_force(m: &VerticalMatrix, e: &[f64], cfg: &TreeConfig) -> Result<(), String> {
    let cfg = TreeConfig { eta: 0.0, ..cfg.clone() };
    let tree = grow_tree(m, e, &cfg).map_err(|err| err.to_string())?;
    let rows = node_rows(&tree, m);
    for (id, node) in tree.nodes().iter().enumerate() {
        let r = &rows[id];
        if r.len() != node.count {
            return Err(format!("node {id}: {} rows routed, count {}", r.len(), node.count));
        }
        let node_sse = sse(r.iter().map(|&i| e[i]));
        let oracle = if node.depth < cfg.max_depth { brute_force_split(m, e, r, cfg.min_leaf) } else { None };
        let useful = oracle.filter(|b| node_sse - b.2 > 1e-9 * (1.0 + node_sse));
        match (&node.split, useful) {
            (Some(split), Some(best)) => {
                let x = m.column(&split.column.name).unwrap();
                let chosen = sse(r.iter().filter(|&&i| x[i] <= split.threshold).map(|&i| e[i]))
                    + sse(r.iter().filter(|&&i| x[i] > split.threshold).map(|&i| e[i]));
                if (chosen - best.2).abs() > 1e-9 * (1.0 + best.2) {
                    return Err(format!("node {id}: chosen SSE {chosen}, brute force {best:?}"));
                }
            }
            (None, Some(best)) => return Err(format!("node {id}: left unsplit but {best:?} reduces SSE {node_sse}")),
            (Some(split), None) => {
                if oracle.is_none() {
                    return Err(format!("node {id}: split {split:?} where none is legal"));
                }
            }
            (None, None) => {}
        }
    }
    Ok(())
}

/// Random design with n well above p, so the centered design has full column rank.
pub fn full_rank_instance(rng: &mut ChaCha8Rng) -> VerticalMatrix {
    let n = rng.random_range(20..=60);
    let p = rng.random_range(1..=5);
    let cols: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| normal(rng) * rng.random_range(0.5..4.0)).collect()).collect();
    let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-5.0..5.0)).collect();
    let y = (0..n).map(|i| 2.0 + (0..p).map(|j| beta[j] * cols[j][i]).sum::<f64>() + normal(rng)).collect();
    let info = (0..p).map(|j| ColumnInfo::numeric(format!("x{j}"))).collect();
    VerticalMatrix::from_columns(info, cols, y).unwrap()
}

/// Largest absolute difference between LASSO(0) and OLS coefficients and intercepts.
pub fn lasso_ols_gap(m: &VerticalMatrix) -> f64 {
    let ols = fit_ols(m).unwrap();
    let lasso = fit_lasso(m, &LassoConfig::fixed(0.0)).unwrap();
    ols.coefficients
        .iter()
        .zip(&lasso.coefficients)
        .map(|(a, b)| (a - b).abs())
        .fold((ols.intercept - lasso.intercept).abs(), f64::max)
}

pub fn random_vectors(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let n = rng.random_range(1..=50);
    let y = (0..n).map(|_| normal(rng) * 10.0 + 3.0).collect();
    let f = (0..n).map(|_| normal(rng) * 10.0).collect();
    (y, f)
}
