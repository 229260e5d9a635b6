use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{MissTreeError, TreeParams};
use crate::missingness::ProviderMissingness;
use crate::model::{Cell, Column, ProviderId, RegistryTable};

/// Non-numeric columns with more distinct observed values are not used as predictors.
pub const MAX_CATEGORICAL_LEVELS: usize = 250;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureInfo {
    pub name: String,
    pub kind: FeatureKind,
    /// Level names of a categorical feature, indexed by code. Empty for numeric features.
    pub levels: Vec<String>,
}

/// A predictor column in dense form.
///
/// Missing values are NaN. Categorical values are level codes stored as
/// `f64`. Sentinel codes of numeric columns are treated as missing, those
/// of categorical columns are ordinary levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub info: FeatureInfo,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    FewerThanTwoValues,
    TooManyLevels,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExcludedFeature {
    pub name: String,
    pub reason: ExclusionReason,
}

/// Predictors and OPM targets over the provider's observation index.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeDataset {
    pub features: Vec<Feature>,
    pub target: Vec<f64>,
    /// Table row of every dataset row.
    pub rows: Vec<usize>,
    pub excluded: Vec<ExcludedFeature>,
}

impl TreeDataset {
    /// Builds a dataset from dense columns; mostly useful for tests.
    pub fn new(features: Vec<Feature>, target: Vec<f64>) -> Self {
        assert!(features.iter().all(|f| f.values.len() == target.len()));
        let rows = (0..target.len()).collect();
        Self {
            features,
            target,
            rows,
            excluded: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn infos(&self) -> Vec<FeatureInfo> {
        self.features.iter().map(|f| f.info.clone()).collect()
    }

    pub fn row_values(&self, i: usize) -> Vec<f64> {
        self.features.iter().map(|f| f.values[i]).collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            features: self
                .features
                .iter()
                .map(|f| Feature {
                    info: f.info.clone(),
                    values: idx.iter().map(|&i| f.values[i]).collect(),
                })
                .collect(),
            target: idx.iter().map(|&i| self.target[i]).collect(),
            rows: idx.iter().map(|&i| self.rows[i]).collect(),
            excluded: self.excluded.clone(),
        }
    }
}

impl Feature {
    pub fn numeric(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            info: FeatureInfo {
                name: name.into(),
                kind: FeatureKind::Numeric,
                levels: Vec::new(),
            },
            values,
        }
    }

    /// Categorical feature from level names; `None` is missing.
    pub fn categorical(name: impl Into<String>, values: &[Option<&str>]) -> Self {
        let mut levels: Vec<String> = Vec::new();
        let codes = values
            .iter()
            .map(|v| match v {
                None => f64::NAN,
                Some(s) => match levels.iter().position(|l| l == s) {
                    Some(p) => p as f64,
                    None => {
                        levels.push(s.to_string());
                        (levels.len() - 1) as f64
                    }
                },
            })
            .collect();
        Self {
            info: FeatureInfo {
                name: name.into(),
                kind: FeatureKind::Categorical,
                levels,
            },
            values: codes,
        }
    }

    fn from_column(col: &Column, rows: &[usize]) -> Self {
        let name = col.name().to_string();
        if col.value_type().is_numeric() {
            let values = rows
                .iter()
                .map(|&i| col.cell(i).as_f64().unwrap_or(f64::NAN))
                .collect();
            return Feature::numeric(name, values);
        }
        let n_levels = col.levels().len();
        let mut levels = col.levels().to_vec();
        levels.extend(col.meta().sentinels.iter().cloned());
        let values = rows
            .iter()
            .map(|&i| match col.cell(i) {
                Cell::Level(l) => l as f64,
                Cell::Sentinel(s) => (n_levels + s as usize) as f64,
                _ => f64::NAN,
            })
            .collect();
        Feature {
            info: FeatureInfo {
                name,
                kind: FeatureKind::Categorical,
                levels,
            },
            values,
        }
    }
}

/// Rows are `I_X(provider)`, the target is each row's OPM, and predictors
/// are the provider's columns with at least two distinct observed values
/// (at most 250 for non-numeric columns).
pub fn prepare_tree_dataset(
    table: &RegistryTable,
    provider: ProviderId,
) -> Result<TreeDataset, MissTreeError> {
    let pm = ProviderMissingness::new(table, provider);
    if pm.columns().is_empty() {
        return Err(MissTreeError::NoProviderColumns);
    }
    let rows = pm.rows().rows.clone();
    if rows.is_empty() {
        return Err(MissTreeError::EmptyProviderIndex);
    }
    let target = rows
        .iter()
        .map(|&i| pm.opm(i).expect("row is in the provider index"))
        .collect();

    let mut features = Vec::new();
    let mut excluded = Vec::new();
    for &j in &pm.columns().indices {
        let col = table.column(j);
        let distinct = col.select_rows(&rows).distinct_observed();
        let reason = if distinct < 2 {
            Some(ExclusionReason::FewerThanTwoValues)
        } else if !col.value_type().is_numeric() && distinct > MAX_CATEGORICAL_LEVELS {
            Some(ExclusionReason::TooManyLevels)
        } else {
            None
        };
        match reason {
            Some(reason) => excluded.push(ExcludedFeature {
                name: col.name().to_string(),
                reason,
            }),
            None => features.push(Feature::from_column(col, &rows)),
        }
    }
    if features.is_empty() {
        return Err(MissTreeError::NoUsableFeatures);
    }
    Ok(TreeDataset {
        features,
        target,
        rows,
        excluded,
    })
}

/// Simple random 70/30-style split: `round(train_fraction * n)` training
/// rows. Both index lists are returned in ascending order.
pub fn split_train_test(
    n: usize,
    params: &TreeParams,
) -> Result<(Vec<usize>, Vec<usize>), MissTreeError> {
    if n < 2 {
        return Err(MissTreeError::TooFewRows(n));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    idx.shuffle(&mut rng);
    let n_train = ((params.train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}
