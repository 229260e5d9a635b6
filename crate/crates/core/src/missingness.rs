//! Provider-adjusted missing-data statistics.
//!
//! Every count ranges over `I_X(DP)`, the rows in which the column's provider
//! reported anything, rather than over all `n_X` rows. Sentinel codes count
//! as observed.
//!
//! Influx and outflux sum over every column `k` of the provider, `j` itself
//! included. The self-term contributes nothing to the numerators but its
//! `R`/`M` is part of the denominators.

use serde::Serialize;
use thiserror::Error;

use crate::model::{
    observation_set_for, provider_column_set, ProviderColumnSet, ProviderId,
    ProviderObservationSet, RegistryTable,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MissError {
    #[error("column `{column}`: its provider contributed no observations to this table")]
    EmptyProviderIndex { column: String },
    #[error("provider contributes no columns to this table")]
    NoProviderColumns,
    #[error("row {row} is not contributed by the provider")]
    RowOutsideProviderIndex { row: usize },
    #[error("column `{column}` has no missing values; usable cases are undefined")]
    NoMissingTarget { column: String },
    #[error("columns `{target}` and `{source_column}` belong to different providers")]
    ProviderMismatch {
        target: String,
        source_column: String,
    },
}

/// Precomputed missingness layout of one provider's share of a table.
#[derive(Debug, Clone)]
pub struct ProviderMissingness<'a> {
    table: &'a RegistryTable,
    columns: ProviderColumnSet,
    rows: ProviderObservationSet,
    /// Per row of the table: missing cells among the provider's columns.
    missing_per_row: Vec<u32>,
}

impl<'a> ProviderMissingness<'a> {
    pub fn new(table: &'a RegistryTable, dp: ProviderId) -> Self {
        let columns = provider_column_set(table, dp);
        let rows = observation_set_for(table, &columns);
        let mut missing_per_row = vec![0u32; table.n_rows()];
        for &j in &columns.indices {
            for (m, c) in missing_per_row.iter_mut().zip(table.column(j).cells()) {
                *m += c.is_missing() as u32;
            }
        }
        Self {
            table,
            columns,
            rows,
            missing_per_row,
        }
    }

    pub fn columns(&self) -> &ProviderColumnSet {
        &self.columns
    }

    pub fn rows(&self) -> &ProviderObservationSet {
        &self.rows
    }

    /// `(M, R)` of column `j` over the provider's rows.
    pub fn counts(&self, j: usize) -> (usize, usize) {
        let col = self.table.column(j);
        let missing = self.rows.rows.iter().filter(|&&i| col.is_missing(i)).count();
        (missing, self.rows.len() - missing)
    }

    pub fn opm(&self, row: usize) -> Result<f64, MissError> {
        if self.columns.is_empty() {
            return Err(MissError::NoProviderColumns);
        }
        if !self.rows.contains(row) {
            return Err(MissError::RowOutsideProviderIndex { row });
        }
        Ok(self.missing_per_row[row] as f64 / self.columns.len() as f64)
    }

    /// Influx and outflux of every provider column, in column order.
    pub fn flux(&self) -> Vec<Flux> {
        let p = self.columns.len() as u64;
        let mut total_missing = 0u64;
        let mut total_observed = 0u64;
        for &i in &self.rows.rows {
            total_missing += self.missing_per_row[i] as u64;
            total_observed += p - self.missing_per_row[i] as u64;
        }
        self.columns
            .indices
            .iter()
            .map(|&j| {
                let col = self.table.column(j);
                let mut into = 0u64;
                let mut out = 0u64;
                for &i in &self.rows.rows {
                    let miss_here = self.missing_per_row[i] as u64;
                    if col.is_missing(i) {
                        into += p - miss_here;
                    } else {
                        out += miss_here;
                    }
                }
                Flux {
                    column: j,
                    influx: ratio(into, total_observed),
                    outflux: ratio(out, total_missing),
                }
            })
            .collect()
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flux {
    pub column: usize,
    /// `None` when no provider column has an observed value.
    pub influx: Option<f64>,
    /// `None` when no provider column has a missing value.
    pub outflux: Option<f64>,
}

pub fn count_missing(table: &RegistryTable, column: usize) -> (usize, usize) {
    ProviderMissingness::new(table, table.column(column).provider()).counts(column)
}

pub fn proportion_missing(table: &RegistryTable, column: usize) -> Result<f64, MissError> {
    let (m, r) = count_missing(table, column);
    if m + r == 0 {
        return Err(MissError::EmptyProviderIndex {
            column: table.column(column).name().to_string(),
        });
    }
    Ok(m as f64 / (m + r) as f64)
}

/// Share of the provider's columns that are missing in one of its rows.
pub fn opm(table: &RegistryTable, provider: ProviderId, row: usize) -> Result<f64, MissError> {
    ProviderMissingness::new(table, provider).opm(row)
}

/// Share of the missing cells of `target` for which `source` is observed,
/// for two columns of the same provider.
pub fn usable_cases(table: &RegistryTable, target: usize, source: usize) -> Result<f64, MissError> {
    let t = table.column(target);
    let s = table.column(source);
    if t.provider() != s.provider() {
        return Err(MissError::ProviderMismatch {
            target: t.name().to_string(),
            source_column: s.name().to_string(),
        });
    }
    let rows = crate::model::provider_observation_set(table, t.provider());
    usable_cases_over(table, target, source, &rows.rows)
        .ok_or_else(|| MissError::NoMissingTarget {
            column: t.name().to_string(),
        })
}

/// `#{i in rows: target missing and source observed} / #{i in rows: target missing}`.
pub(crate) fn usable_cases_over(
    table: &RegistryTable,
    target: usize,
    source: usize,
    rows: &[usize],
) -> Option<f64> {
    let t = table.column(target);
    let s = table.column(source);
    let mut missing = 0u64;
    let mut usable = 0u64;
    for &i in rows {
        if t.is_missing(i) {
            missing += 1;
            usable += s.cell(i).is_observed() as u64;
        }
    }
    ratio(usable, missing)
}

pub fn influx(table: &RegistryTable, column: usize) -> Option<f64> {
    flux_of(table, column).influx
}

pub fn outflux(table: &RegistryTable, column: usize) -> Option<f64> {
    flux_of(table, column).outflux
}

fn flux_of(table: &RegistryTable, column: usize) -> Flux {
    let pm = ProviderMissingness::new(table, table.column(column).provider());
    pm.flux()
        .into_iter()
        .find(|f| f.column == column)
        .expect("column belongs to its provider")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnMissingness {
    pub table: String,
    pub column: String,
    pub provider: ProviderId,
    /// `|I_X(DP)|`
    pub denom: usize,
    pub missing: usize,
    pub observed: usize,
    /// `None` when the provider contributed no rows.
    pub pm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnFlux {
    pub table: String,
    pub column: String,
    pub provider: ProviderId,
    pub influx: Option<f64>,
    pub outflux: Option<f64>,
}

/// Per-column missingness for every provider of the table, in column order.
pub fn miss_report(table: &RegistryTable) -> Vec<ColumnMissingness> {
    let mut out: Vec<ColumnMissingness> = table
        .providers()
        .into_iter()
        .flat_map(|dp| {
            let pm = ProviderMissingness::new(table, dp);
            pm.columns
                .indices
                .iter()
                .map(|&j| {
                    let (missing, observed) = pm.counts(j);
                    let denom = missing + observed;
                    ColumnMissingness {
                        table: table.name().to_string(),
                        column: table.column(j).name().to_string(),
                        provider: dp,
                        denom,
                        missing,
                        observed,
                        pm: ratio(missing as u64, denom as u64),
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    out.sort_by_key(|m| table.column_index(&m.column));
    out
}

/// Influx/outflux coordinates for every column of the table, in column order.
pub fn flux_report(table: &RegistryTable) -> Vec<ColumnFlux> {
    let mut out: Vec<(usize, ColumnFlux)> = Vec::with_capacity(table.n_cols());
    for dp in table.providers() {
        for f in ProviderMissingness::new(table, dp).flux() {
            out.push((
                f.column,
                ColumnFlux {
                    table: table.name().to_string(),
                    column: table.column(f.column).name().to_string(),
                    provider: dp,
                    influx: f.influx,
                    outflux: f.outflux,
                },
            ));
        }
    }
    out.sort_by_key(|(j, _)| *j);
    out.into_iter().map(|(_, f)| f).collect()
}
