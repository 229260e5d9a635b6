//! Direct, cell-by-cell evaluation of the provider-adjusted missingness
//! statistics, used as an oracle for the library implementation.

use rand::Rng;
use regida_core::missingness::{
    count_missing, flux_report, influx, miss_report, opm, outflux, proportion_missing,
    usable_cases, MissError,
};
use regida_core::model::{ColumnMeta, ProviderId, RegistryTable, ValueType};

pub const PROVIDERS: u16 = 3;

/// Row-major cells: `None` is missing, `Some(true)` a sentinel code,
/// `Some(false)` an ordinary value.
#[derive(Debug, Clone)]
pub struct Layout {
    pub providers: Vec<u16>,
    pub cells: Vec<Vec<Option<bool>>>,
}

impl Layout {
    /// Up to `max_rows` rows and `max_cols` columns over three providers,
    /// with a per-table density so that empty, sparse and complete
    /// providers all occur.
    pub fn random<R: Rng>(rng: &mut R, max_rows: usize, max_cols: usize) -> Self {
        let k = rng.random_range(1..=max_cols);
        let n = rng.random_range(0..=max_rows);
        let density: f64 = match rng.random_range(0..4) {
            0 => 1.0,
            1 => 0.0,
            _ => rng.random(),
        };
        let providers = (0..k).map(|_| rng.random_range(0..PROVIDERS)).collect();
        let cells = (0..n)
            .map(|_| {
                (0..k)
                    .map(|_| (rng.random::<f64>() < density).then(|| rng.random::<f64>() < 0.1))
                    .collect()
            })
            .collect();
        Self { providers, cells }
    }

    pub fn n_rows(&self) -> usize {
        self.cells.len()
    }

    pub fn observed(&self, i: usize, j: usize) -> bool {
        self.cells[i][j].is_some()
    }

    pub fn table(&self) -> RegistryTable {
        let metas = self
            .providers
            .iter()
            .enumerate()
            .map(|(j, &p)| {
                ColumnMeta::new(format!("c{j}"), ProviderId(p), ValueType::Categorical)
                    .with_sentinels(["-9"])
            })
            .collect();
        let rows: Vec<Vec<&str>> = self
            .cells
            .iter()
            .map(|r| {
                r.iter()
                    .map(|c| match c {
                        None => "",
                        Some(true) => "-9",
                        Some(false) => "v",
                    })
                    .collect()
            })
            .collect();
        RegistryTable::from_text_rows("T", metas, &rows).expect("valid layout")
    }

    pub fn cols_of(&self, p: u16) -> Vec<usize> {
        (0..self.providers.len()).filter(|&j| self.providers[j] == p).collect()
    }

    /// `I_X(p)`: rows with at least one observed column of `p`.
    pub fn rows_of(&self, p: u16) -> Vec<usize> {
        let cols = self.cols_of(p);
        (0..self.n_rows())
            .filter(|&i| cols.iter().any(|&j| self.observed(i, j)))
            .collect()
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn same(actual: Option<f64>, expected: Option<f64>) -> bool {
    match (actual, expected) {
        (Some(a), Some(e)) => (a - e).abs() <= 1e-12,
        (None, None) => true,
        _ => false,
    }
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

/// Compares M, R, PM, OPM, U, influx and outflux of every column and row
/// with their definitions.
pub fn check_statistics(l: &Layout) -> Result<(), String> {
    let table = l.table();
    for p in 0..PROVIDERS {
        let cols = l.cols_of(p);
        let rows = l.rows_of(p);
        let missing = |j: usize| rows.iter().filter(|&&i| !l.observed(i, j)).count();
        let total_obs: usize = cols.iter().map(|&k| rows.len() - missing(k)).sum();
        let total_mis: usize = cols.iter().map(|&k| missing(k)).sum();

        for &j in &cols {
            let m = missing(j);
            ensure!(count_missing(&table, j) == (m, rows.len() - m), "M/R of column {j}");
            match proportion_missing(&table, j) {
                Ok(pm) => ensure!(same(Some(pm), ratio(m, rows.len())), "PM of column {j}"),
                Err(MissError::EmptyProviderIndex { .. }) => {
                    ensure!(rows.is_empty(), "PM of column {j} undefined")
                }
                Err(e) => return Err(format!("PM of column {j}: {e}")),
            }

            let mut into = 0;
            let mut out = 0;
            for &i in &rows {
                for &k in &cols {
                    into += (!l.observed(i, j) && l.observed(i, k)) as usize;
                    out += (l.observed(i, j) && !l.observed(i, k)) as usize;
                }
            }
            ensure!(same(influx(&table, j), ratio(into, total_obs)), "influx of column {j}");
            ensure!(same(outflux(&table, j), ratio(out, total_mis)), "outflux of column {j}");

            for &s in &cols {
                let usable = rows
                    .iter()
                    .filter(|&&i| !l.observed(i, j) && l.observed(i, s))
                    .count();
                match usable_cases(&table, j, s) {
                    Ok(u) => ensure!(same(Some(u), ratio(usable, m)), "U({j}, {s})"),
                    Err(MissError::NoMissingTarget { .. }) => ensure!(m == 0, "U({j}, {s}) undefined"),
                    Err(e) => return Err(format!("U({j}, {s}): {e}")),
                }
            }
        }

        for i in 0..l.n_rows() {
            let r = opm(&table, ProviderId(p), i);
            if cols.is_empty() {
                ensure!(r == Err(MissError::NoProviderColumns), "OPM of row {i}, provider {p}");
            } else if !rows.contains(&i) {
                ensure!(
                    r == Err(MissError::RowOutsideProviderIndex { row: i }),
                    "OPM of row {i} outside the provider index"
                );
            } else {
                let miss = cols.iter().filter(|&&k| !l.observed(i, k)).count();
                ensure!(same(r.ok(),ratio(miss, cols.len())), "OPM of row {i}, provider {p}");
            }
        }
    }
    Ok(())
}

/// Complete columns have influx 0 and, when the provider has any missing
/// cell, outflux 1; a provider without missing cells has undefined outflux.
pub fn check_flux_identities(l: &Layout) -> Result<(), String> {
    let table = l.table();
    for f in flux_report(&table) {
        let j = table.column_index(&f.column).expect("reported column exists");
        let p = l.providers[j];
        let rows = l.rows_of(p);
        let complete = rows.iter().all(|&i| l.observed(i, j));
        let any_missing = l
            .cols_of(p)
            .iter()
            .any(|&k| rows.iter().any(|&i| !l.observed(i, k)));
        if complete && !rows.is_empty() {
            ensure!(f.influx == Some(0.0), "influx of complete column {j}: {:?}", f.influx);
            if any_missing {
                ensure!(f.outflux == Some(1.0), "outflux of complete column {j}: {:?}", f.outflux);
            }
        }
        if !any_missing {
            ensure!(f.outflux.is_none(), "outflux of column {j} should be undefined");
        }
        for v in [f.influx, f.outflux].into_iter().flatten() {
            ensure!((0.0..=1.0).contains(&v), "flux of column {j} out of range: {v}");
        }
    }
    let miss = miss_report(&table);
    ensure!(miss.len() == table.n_cols(), "missingness report covers every column");
    Ok(())
}
