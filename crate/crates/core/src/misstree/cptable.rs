use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::dataset::TreeDataset;
use super::fit::{fit_tree, RegressionTree};
use super::TreeParams;

/// One row of the complexity table. Informational only: the fitted tree
/// is not pruned back to any row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CpRow {
    pub cp: f64,
    pub nsplit: usize,
    /// Training deviance of the pruned tree over the root deviance.
    pub rel_error: f64,
    /// Cross-validated error over the root deviance.
    pub xerror: Option<f64>,
    pub xstd: Option<f64>,
}

/// Pruning threshold per row: splits with complexity above it are kept.
fn thresholds(tree: &RegressionTree, params: &TreeParams) -> Vec<(f64, Option<f64>)> {
    let mut c: Vec<f64> = tree
        .nodes
        .iter()
        .filter(|n| !n.is_leaf())
        .map(|n| n.complexity)
        .collect();
    c.sort_by(|a, b| b.total_cmp(a));
    c.dedup();
    let mut rows: Vec<(f64, Option<f64>)> = c.into_iter().map(|v| (v, Some(v))).collect();
    // last row: the full tree
    rows.push((params.cp, None));
    rows
}

fn pruned_shape(tree: &RegressionTree, keep_above: Option<f64>) -> (usize, f64) {
    let mut splits = 0;
    let mut deviance = 0.0;
    let mut stack = vec![0];
    while let Some(k) = stack.pop() {
        let node = &tree.nodes[k];
        match &node.split {
            Some(s) if keep_above.is_none_or(|t| node.complexity > t) => {
                splits += 1;
                stack.push(s.left);
                stack.push(s.right);
            }
            _ => deviance += node.deviance,
        }
    }
    (splits, deviance)
}

pub fn cp_table(tree: &RegressionTree, train: &TreeDataset, params: &TreeParams) -> Vec<CpRow> {
    let root_dev = tree.root().deviance;
    let rows = thresholds(tree, params);
    let xval = cross_validate(train, params, &rows, root_dev);
    rows.iter()
        .enumerate()
        .map(|(k, &(cp, keep))| {
            let (nsplit, dev) = pruned_shape(tree, keep);
            CpRow {
                cp,
                nsplit,
                rel_error: if root_dev > 0.0 { dev / root_dev } else { 1.0 },
                xerror: xval.as_ref().map(|x| x[k].0),
                xstd: xval.as_ref().map(|x| x[k].1),
            }
        })
        .collect()
}

/// `(xerror, xstd)` per row, evaluating fold trees at the geometric mean
/// of neighbouring cp values.
fn cross_validate(
    train: &TreeDataset,
    params: &TreeParams,
    rows: &[(f64, Option<f64>)],
    root_dev: f64,
) -> Option<Vec<(f64, f64)>> {
    let n = train.len();
    let k = params.cv_folds;
    if k < 2 || n < k || root_dev <= 0.0 {
        return None;
    }
    let eval_cp: Vec<f64> = (0..rows.len())
        .map(|i| {
            if i == 0 {
                f64::INFINITY
            } else {
                (rows[i].0 * rows[i - 1].0).sqrt()
            }
        })
        .collect();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(1)));
    let mut fold = vec![0; n];
    for (pos, &i) in idx.iter().enumerate() {
        fold[i] = pos % k;
    }
    let mut sq_err = vec![vec![0.0; n]; rows.len()];
    for f in 0..k {
        let fit_rows: Vec<usize> = (0..n).filter(|&i| fold[i] != f).collect();
        let held: Vec<usize> = (0..n).filter(|&i| fold[i] == f).collect();
        let fold_tree = fit_tree(&train.subset(&fit_rows), params);
        for &i in &held {
            let values = train.row_values(i);
            for (r, &cp) in eval_cp.iter().enumerate() {
                let pred = if cp.is_finite() {
                    fold_tree.predict_row_pruned(&values, cp.max(f64::MIN_POSITIVE))
                } else {
                    fold_tree.root().prediction
                };
                sq_err[r][i] = (pred - train.target[i]).powi(2);
            }
        }
    }
    Some(
        sq_err
            .iter()
            .map(|e| {
                let total: f64 = e.iter().sum();
                let mean = total / n as f64;
                let spread: f64 = e.iter().map(|v| (v - mean).powi(2)).sum::<f64>().sqrt();
                (total / root_dev, spread / root_dev)
            })
            .collect(),
    )
}
