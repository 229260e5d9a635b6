//! Missingness-structure trees: a sum-of-squares regression tree with
//! surrogate splits predicting each row's OPM from the provider's own
//! columns, its test RMSE, and predictor importance.

mod cptable;
mod dataset;
mod fit;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ProviderId, RegistryTable};

pub use cptable::{cp_table, CpRow};
pub use dataset::{
    prepare_tree_dataset, split_train_test, ExcludedFeature, ExclusionReason, Feature,
    FeatureInfo, FeatureKind, TreeDataset, MAX_CATEGORICAL_LEVELS,
};
pub use fit::{
    evaluate_rmse, fit_tree, predict, Direction, Node, NodeSplit, RegressionTree, Split,
    SplitRule, Surrogate,
};

#[derive(Debug, Error, PartialEq)]
pub enum MissTreeError {
    #[error("provider contributes no columns to this table")]
    NoProviderColumns,
    #[error("provider contributed no observations to this table")]
    EmptyProviderIndex,
    #[error("no provider column qualifies as a predictor")]
    NoUsableFeatures,
    #[error("need at least 2 rows for a train/test split, got {0}")]
    TooFewRows(usize),
    #[error("invalid tree parameter: {0}")]
    InvalidParams(String),
}

fn d_min_split() -> usize {
    20
}
fn d_min_bucket() -> usize {
    7
}
fn d_cp() -> f64 {
    0.01
}
fn d_max_surrogates() -> usize {
    5
}
fn d_true() -> bool {
    true
}
fn d_cv_folds() -> usize {
    10
}
fn d_max_depth() -> usize {
    30
}
fn d_train_fraction() -> f64 {
    0.7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeParams {
    #[serde(default = "d_min_split")]
    pub min_split: usize,
    #[serde(default = "d_min_bucket")]
    pub min_bucket: usize,
    #[serde(default = "d_cp")]
    pub cp: f64,
    #[serde(default = "d_max_surrogates")]
    pub max_surrogates: usize,
    /// Route rows no split can place in the majority direction.
    #[serde(default = "d_true")]
    pub surrogate_fallback: bool,
    /// Folds for the complexity table's cross-validated error; below 2 disables it.
    #[serde(default = "d_cv_folds")]
    pub cv_folds: usize,
    /// The root has depth 0.
    #[serde(default = "d_max_depth")]
    pub max_depth: usize,
    #[serde(default = "d_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            min_split: d_min_split(),
            min_bucket: d_min_bucket(),
            cp: d_cp(),
            max_surrogates: d_max_surrogates(),
            surrogate_fallback: true,
            cv_folds: d_cv_folds(),
            max_depth: d_max_depth(),
            train_fraction: d_train_fraction(),
            seed: 0,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<(), MissTreeError> {
        let bad = |m: &str| Err(MissTreeError::InvalidParams(m.to_string()));
        if self.min_bucket > self.min_split {
            return bad("min_bucket must not exceed min_split");
        }
        if !(self.cp > 0.0 && self.cp < 1.0) {
            return bad("cp must lie in (0, 1)");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train_fraction must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceEntry {
    pub feature: String,
    /// Improvement as primary splitter plus adjusted-agreement-weighted
    /// improvement as surrogate.
    pub raw: f64,
    /// Percentage of the largest raw importance.
    pub adjusted: f64,
    pub important: bool,
}

/// Adjusted importance above this percentage marks a predictor as important.
pub const IMPORTANT_ABOVE: f64 = 50.0;

/// Predictors with positive importance, most important first.
pub fn importance(tree: &RegressionTree) -> Vec<ImportanceEntry> {
    let mut raw = vec![0.0; tree.features.len()];
    for node in &tree.nodes {
        if let Some(s) = &node.split {
            raw[s.primary.feature] += s.improvement;
            for sur in &s.surrogates {
                raw[sur.split.feature] += sur.adjusted_agreement * s.improvement;
            }
        }
    }
    let max = raw.iter().copied().fold(0.0, f64::max);
    let mut out: Vec<(usize, ImportanceEntry)> = raw
        .iter()
        .enumerate()
        .filter(|(_, &r)| r > 0.0)
        .map(|(f, &r)| {
            // the top feature is exactly 100 regardless of rounding
            let adjusted = if r == max { 100.0 } else { 100.0 * r / max };
            (
                f,
                ImportanceEntry {
                    feature: tree.features[f].name.clone(),
                    raw: r,
                    adjusted,
                    important: adjusted > IMPORTANT_ABOVE,
                },
            )
        })
        .collect();
    out.sort_by(|a, b| b.1.raw.total_cmp(&a.1.raw).then(a.0.cmp(&b.0)));
    out.into_iter().map(|(_, e)| e).collect()
}

/// Everything computed for one (table, provider) pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeAnalysis {
    pub table: String,
    pub provider: ProviderId,
    pub n_rows: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub excluded: Vec<ExcludedFeature>,
    pub tree: RegressionTree,
    pub test_rmse: f64,
    pub importance: Vec<ImportanceEntry>,
    pub cp_table: Vec<CpRow>,
}

/// Dataset preparation, seeded split, fit on the training part and
/// evaluation on the held-out part.
pub fn analyze(
    table: &RegistryTable,
    provider: ProviderId,
    params: &TreeParams,
) -> Result<TreeAnalysis, MissTreeError> {
    params.validate()?;
    let data = prepare_tree_dataset(table, provider)?;
    let (train_idx, test_idx) = split_train_test(data.len(), params)?;
    let train = data.subset(&train_idx);
    let test = data.subset(&test_idx);
    let tree = fit_tree(&train, params);
    let test_rmse = evaluate_rmse(&tree, &test).expect("test part is never empty");
    let cp_table = cp_table(&tree, &train, params);
    Ok(TreeAnalysis {
        table: table.name().to_string(),
        provider,
        n_rows: data.len(),
        n_train: train.len(),
        n_test: test.len(),
        excluded: data.excluded,
        importance: importance(&tree),
        tree,
        test_rmse,
        cp_table,
    })
}

/// Nested, self-describing form of a tree: every node carries its id, size,
/// prediction and, for internal nodes, the split with surrogates and both
/// children.
pub fn tree_to_json(tree: &RegressionTree) -> serde_json::Value {
    node_json(tree, 0)
}

fn split_json(tree: &RegressionTree, split: &Split) -> serde_json::Value {
    let info = &tree.features[split.feature];
    match &split.rule {
        SplitRule::Numeric {
            threshold,
            less_goes_left,
        } => serde_json::json!({
            "variable": info.name,
            "kind": "numeric",
            "threshold": threshold,
            "left": if *less_goes_left { "<" } else { ">=" },
        }),
        SplitRule::Categorical { left, right } => {
            let names = |codes: &[u32]| -> Vec<&str> {
                codes.iter().map(|&c| info.levels[c as usize].as_str()).collect()
            };
            serde_json::json!({
                "variable": info.name,
                "kind": "categorical",
                "left_levels": names(left),
                "right_levels": names(right),
            })
        }
    }
}

fn node_json(tree: &RegressionTree, k: usize) -> serde_json::Value {
    let node = &tree.nodes[k];
    let mut v = serde_json::json!({
        "id": node.id,
        "n": node.n,
        "prediction": node.prediction,
        "deviance": node.deviance,
    });
    if let Some(s) = &node.split {
        let surrogates: Vec<_> = s
            .surrogates
            .iter()
            .map(|sur| {
                let mut j = split_json(tree, &sur.split);
                j["agreement"] = sur.agreement.into();
                j["adjusted_agreement"] = sur.adjusted_agreement.into();
                j
            })
            .collect();
        v["complexity"] = node.complexity.into();
        v["split"] = split_json(tree, &s.primary);
        v["improvement"] = s.improvement.into();
        v["majority_direction"] = serde_json::to_value(s.majority).expect("plain enum");
        v["surrogates"] = surrogates.into();
        v["left"] = node_json(tree, s.left);
        v["right"] = node_json(tree, s.right);
    }
    v
}
