//! Cross-provider analysis of multi-sourced variables: how far one
//! provider's column could fill another's gaps, and how well the two agree
//! where both are observed.
//!
//! Values are compared within rows. Categorical pairs use uncorrected
//! Cramér's V, numeric pairs (relative dates included) the absolute Pearson
//! correlation. Numeric sentinel codes do not take part in correlations.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::ingest::{Bundle, MultiSourceGroup};
use crate::missingness::usable_cases_over;
use crate::model::{provider_observation_set, Cell, Column, ProviderId, RegistryTable};

/// Associations at or above this value count as high agreement.
pub const HIGH_AGREEMENT: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Measure {
    CramersV,
    AbsPearson,
}

impl Measure {
    pub fn as_str(self) -> &'static str {
        match self {
            Measure::CramersV => "cramers_v",
            Measure::AbsPearson => "abs_pearson",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NotComputableReason {
    ConstantData,
    NoOverlap,
    TypeMismatch,
}

impl NotComputableReason {
    pub fn as_str(self) -> &'static str {
        match self {
            NotComputableReason::ConstantData => "constant_data",
            NotComputableReason::NoOverlap => "no_overlap",
            NotComputableReason::TypeMismatch => "type_mismatch",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Association {
    Computed { measure: Measure, value: f64 },
    NotComputable(NotComputableReason),
}

impl Association {
    pub fn value(&self) -> Option<f64> {
        match self {
            Association::Computed { value, .. } => Some(*value),
            Association::NotComputable(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize)]
pub enum UsableCasesError {
    #[error("target column has no missing values among its provider's rows")]
    NoMissingTarget,
    #[error("the two columns are never observed in the same row")]
    NoSharedRows,
}

impl UsableCasesError {
    pub fn as_str(self) -> &'static str {
        match self {
            UsableCasesError::NoMissingTarget => "no_missing_target",
            UsableCasesError::NoSharedRows => "no_shared_rows",
        }
    }
}

/// Cramér's V of a contingency table. Rows and columns with a zero margin
/// are dropped first; `None` when fewer than two rows or columns remain.
pub fn cramers_v(table: &[Vec<u64>]) -> Option<f64> {
    let rows: Vec<&Vec<u64>> = table.iter().filter(|r| r.iter().sum::<u64>() > 0).collect();
    let n_cols = table.iter().map(Vec::len).max().unwrap_or(0);
    let col_sums: Vec<u64> = (0..n_cols)
        .map(|j| rows.iter().map(|r| r.get(j).copied().unwrap_or(0)).sum())
        .collect();
    let cols: Vec<usize> = (0..n_cols).filter(|&j| col_sums[j] > 0).collect();
    if rows.len() < 2 || cols.len() < 2 {
        return None;
    }
    let n: u64 = col_sums.iter().sum();
    let n = n as f64;
    let mut chi2 = 0.0;
    for r in &rows {
        let row_sum = r.iter().sum::<u64>() as f64;
        for &j in &cols {
            let expected = row_sum * col_sums[j] as f64 / n;
            let observed = r.get(j).copied().unwrap_or(0) as f64;
            chi2 += (observed - expected).powi(2) / expected;
        }
    }
    let k = rows.len().min(cols.len()) as f64 - 1.0;
    Some((chi2 / (n * k)).sqrt().clamp(0.0, 1.0))
}

/// Absolute Pearson correlation; `None` when either side has zero variance
/// or fewer than two pairs are given.
pub fn abs_pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxx += da * da;
        syy += db * db;
        sxy += da * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).abs().min(1.0))
}

/// Category code of a categorical cell; sentinels follow the level codes.
fn category(col: &Column, cell: Cell) -> Option<u32> {
    match cell {
        Cell::Level(l) => Some(l),
        Cell::Sentinel(s) => Some(col.levels().len() as u32 + s as u32),
        _ => None,
    }
}

/// Association of two columns of one table over the rows where both are
/// observed. Checks run in the order type mismatch, no overlap, constant data.
pub fn association(a: &Column, b: &Column) -> Association {
    use NotComputableReason::*;
    let numeric = a.value_type().is_numeric();
    if numeric != b.value_type().is_numeric() {
        return Association::NotComputable(TypeMismatch);
    }
    let n = a.len().min(b.len());
    if numeric {
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for i in 0..n {
            if let (Some(u), Some(v)) = (a.cell(i).as_f64(), b.cell(i).as_f64()) {
                x.push(u);
                y.push(v);
            }
        }
        if x.is_empty() {
            return Association::NotComputable(NoOverlap);
        }
        return match abs_pearson(&x, &y) {
            Some(value) => Association::Computed {
                measure: Measure::AbsPearson,
                value,
            },
            None => Association::NotComputable(ConstantData),
        };
    }
    let mut counts: HashMap<(u32, u32), u64> = HashMap::new();
    let mut pairs = 0u64;
    for i in 0..n {
        if let (Some(u), Some(v)) = (category(a, a.cell(i)), category(b, b.cell(i))) {
            *counts.entry((u, v)).or_default() += 1;
            pairs += 1;
        }
    }
    if pairs == 0 {
        return Association::NotComputable(NoOverlap);
    }
    let mut row_codes: Vec<u32> = counts.keys().map(|k| k.0).collect();
    let mut col_codes: Vec<u32> = counts.keys().map(|k| k.1).collect();
    row_codes.sort_unstable();
    row_codes.dedup();
    col_codes.sort_unstable();
    col_codes.dedup();
    let mut table = vec![vec![0u64; col_codes.len()]; row_codes.len()];
    for (&(u, v), &c) in &counts {
        let r = row_codes.binary_search(&u).expect("present");
        let s = col_codes.binary_search(&v).expect("present");
        table[r][s] = c;
    }
    match cramers_v(&table) {
        Some(value) => Association::Computed {
            measure: Measure::CramersV,
            value,
        },
        None => Association::NotComputable(ConstantData),
    }
}

/// Share of the target's missing cells, over the target provider's rows,
/// in which the source column is observed.
pub fn cross_provider_usable_cases(
    table: &RegistryTable,
    target: usize,
    source: usize,
) -> Result<f64, UsableCasesError> {
    let t = table.column(target);
    let s = table.column(source);
    let rows = provider_observation_set(table, t.provider());
    let u = usable_cases_over(table, target, source, &rows.rows)
        .ok_or(UsableCasesError::NoMissingTarget)?;
    let shared = (0..table.n_rows()).any(|i| t.cell(i).is_observed() && s.cell(i).is_observed());
    if !shared {
        return Err(UsableCasesError::NoSharedRows);
    }
    Ok(u)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssociationPair {
    pub table: String,
    pub group: String,
    pub provider_a: ProviderId,
    pub provider_b: ProviderId,
    pub column_a: String,
    pub column_b: String,
    pub association: Association,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UsablePair {
    pub table: String,
    pub group: String,
    pub target_provider: ProviderId,
    pub source_provider: ProviderId,
    pub target_column: String,
    pub source_column: String,
    pub usable_cases: Result<f64, UsableCasesError>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ConsistencySummary {
    pub groups: usize,
    pub association_pairs: usize,
    pub computed: usize,
    pub constant_data: usize,
    pub no_overlap: usize,
    pub type_mismatch: usize,
    /// Computed associations of at least [`HIGH_AGREEMENT`].
    pub high_agreement: usize,
    pub usable_pairs: usize,
    pub usable_defined: usize,
    pub usable_no_missing_target: usize,
    pub usable_no_shared_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub associations: Vec<AssociationPair>,
    pub usable: Vec<UsablePair>,
    pub summary: ConsistencySummary,
}

/// Pairs are emitted in group order, then by provider pair. Groups whose
/// table is not in the bundle are skipped.
pub fn consistency_report(bundle: &Bundle, groups: &[MultiSourceGroup]) -> ConsistencyReport {
    let mut report = ConsistencyReport {
        associations: Vec::new(),
        usable: Vec::new(),
        summary: ConsistencySummary::default(),
    };
    for g in groups {
        let Some(table) = bundle.table(&g.table) else {
            continue;
        };
        report.summary.groups += 1;
        let m = &g.members;
        for (i, a) in m.iter().enumerate() {
            for b in &m[i + 1..] {
                report.associations.push(AssociationPair {
                    table: g.table.clone(),
                    group: g.key.clone(),
                    provider_a: a.provider,
                    provider_b: b.provider,
                    column_a: a.name.clone(),
                    column_b: b.name.clone(),
                    association: association(table.column(a.column), table.column(b.column)),
                });
            }
        }
        for t in m {
            for s in m {
                if t.provider == s.provider {
                    continue;
                }
                report.usable.push(UsablePair {
                    table: g.table.clone(),
                    group: g.key.clone(),
                    target_provider: t.provider,
                    source_provider: s.provider,
                    target_column: t.name.clone(),
                    source_column: s.name.clone(),
                    usable_cases: cross_provider_usable_cases(table, t.column, s.column),
                });
            }
        }
    }
    let s = &mut report.summary;
    s.association_pairs = report.associations.len();
    for p in &report.associations {
        match p.association {
            Association::Computed { value, .. } => {
                s.computed += 1;
                s.high_agreement += (value >= HIGH_AGREEMENT) as usize;
            }
            Association::NotComputable(NotComputableReason::ConstantData) => s.constant_data += 1,
            Association::NotComputable(NotComputableReason::NoOverlap) => s.no_overlap += 1,
            Association::NotComputable(NotComputableReason::TypeMismatch) => s.type_mismatch += 1,
        }
    }
    s.usable_pairs = report.usable.len();
    for p in &report.usable {
        match p.usable_cases {
            Ok(_) => s.usable_defined += 1,
            Err(UsableCasesError::NoMissingTarget) => s.usable_no_missing_target += 1,
            Err(UsableCasesError::NoSharedRows) => s.usable_no_shared_rows += 1,
        }
    }
    report
}
