//! In-memory registry tables with cell-level missingness and provider attribution.
//!
//! A [`RegistryTable`] is column-major and immutable once built. Every column
//! belongs to exactly one data provider; the two index sets that every
//! provider-adjusted statistic is defined over are computed by
//! [`provider_column_set`] and [`provider_observation_set`].

use std::borrow::Cow;
use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("provider set must not be empty")]
    EmptyProviderSet,
    #[error("provider `{0}` declared more than once")]
    DuplicateProvider(String),
    #[error("table `{table}`: duplicate column `{column}`")]
    DuplicateColumn { table: String, column: String },
    #[error("table `{table}`: column `{column}` has {found} cells, expected {expected}")]
    RaggedColumn {
        table: String,
        column: String,
        expected: usize,
        found: usize,
    },
    #[error("column `{column}`: sentinel values must be non-empty strings")]
    EmptySentinel { column: String },
}

/// Index of a provider within the run's [`ProviderSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProviderId(pub u16);

impl ProviderId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// The finite, ordered set of data providers for one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderSet {
    names: Vec<String>,
}

impl ProviderSet {
    pub fn new<I, S>(names: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(ModelError::EmptyProviderSet);
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(ModelError::DuplicateProvider(n.clone()));
            }
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ProviderId> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| ProviderId(i as u16))
    }

    pub fn name(&self, id: ProviderId) -> &str {
        &self.names[id.index()]
    }

    pub fn contains(&self, id: ProviderId) -> bool {
        id.index() < self.names.len()
    }

    pub fn ids(&self) -> impl Iterator<Item = ProviderId> + '_ {
        (0..self.names.len()).map(|i| ProviderId(i as u16))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

impl Default for ProviderSet {
    fn default() -> Self {
        Self {
            names: vec!["ET".into(), "DSO".into(), "IQTIG".into()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueType {
    Numeric,
    Categorical,
    RelativeDate,
    Identifier,
}

impl ValueType {
    /// Numeric and relative-date columns carry ordered numbers.
    pub fn is_numeric(self) -> bool {
        matches!(self, ValueType::Numeric | ValueType::RelativeDate)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ValueType::Numeric => "numeric",
            ValueType::Categorical => "categorical",
            ValueType::RelativeDate => "relative_date",
            ValueType::Identifier => "identifier",
        }
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMeta {
    pub name: String,
    pub provider: ProviderId,
    pub value_type: ValueType,
    /// Literal codes such as "not tested" that are observed values, not missing ones.
    pub sentinels: Vec<String>,
    pub multisource_key: Option<String>,
}

impl ColumnMeta {
    pub fn new(name: impl Into<String>, provider: ProviderId, value_type: ValueType) -> Self {
        Self {
            name: name.into(),
            provider,
            value_type,
            sentinels: Vec::new(),
            multisource_key: None,
        }
    }

    pub fn with_sentinels<I, S>(mut self, sentinels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.sentinels = sentinels.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_key(mut self, key: impl Into<String>) -> Self {
        self.multisource_key = Some(key.into());
        self
    }
}

/// One table cell.
///
/// `Level` indexes the owning column's level dictionary, `Sentinel` indexes
/// [`ColumnMeta::sentinels`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Missing,
    Sentinel(u16),
    Number(f64),
    Day(i64),
    Level(u32),
}

impl Cell {
    pub fn is_missing(self) -> bool {
        matches!(self, Cell::Missing)
    }

    pub fn is_observed(self) -> bool {
        !self.is_missing()
    }

    /// Numeric view of the cell; sentinels and levels have none.
    pub fn as_f64(self) -> Option<f64> {
        match self {
            Cell::Number(x) => Some(x),
            Cell::Day(d) => Some(d as f64),
            _ => None,
        }
    }

    pub fn as_day(self) -> Option<i64> {
        match self {
            Cell::Day(d) => Some(d),
            _ => None,
        }
    }
}

/// A raw text cell that does not parse as the declared type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellParseFailure {
    /// Zero-based data row.
    pub row: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    meta: ColumnMeta,
    cells: Vec<Cell>,
    levels: Vec<String>,
}

impl Column {
    /// Types raw text cells according to `meta.value_type`.
    ///
    /// The empty string is the only implicit missing marker; declared
    /// sentinels become [`Cell::Sentinel`]; anything else must parse.
    pub fn parse<'a, I>(meta: ColumnMeta, raw: I) -> Result<Self, CellParseFailure>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut builder = ColumnBuilder::new(meta);
        for (row, text) in raw.into_iter().enumerate() {
            builder.push(text).map_err(|_| CellParseFailure {
                row,
                text: text.to_string(),
            })?;
        }
        Ok(builder.finish())
    }

    pub fn meta(&self) -> &ColumnMeta {
        &self.meta
    }

    pub fn name(&self) -> &str {
        &self.meta.name
    }

    pub fn provider(&self) -> ProviderId {
        self.meta.provider
    }

    pub fn value_type(&self) -> ValueType {
        self.meta.value_type
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell(&self, row: usize) -> Cell {
        self.cells[row]
    }

    pub fn is_missing(&self, row: usize) -> bool {
        self.cells[row].is_missing()
    }

    pub fn levels(&self) -> &[String] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Text form of a cell, as it would appear in a CSV export.
    pub fn text(&self, row: usize) -> Cow<'_, str> {
        match self.cells[row] {
            Cell::Missing => Cow::Borrowed(""),
            Cell::Sentinel(s) => Cow::Borrowed(self.meta.sentinels[s as usize].as_str()),
            Cell::Number(x) => Cow::Owned(x.to_string()),
            Cell::Day(d) => Cow::Owned(d.to_string()),
            Cell::Level(c) => Cow::Borrowed(self.levels[c as usize].as_str()),
        }
    }

    /// Number of distinct observed values, sentinels included.
    pub fn distinct_observed(&self) -> usize {
        let mut seen: HashSet<DistinctKey> = HashSet::new();
        for &c in &self.cells {
            match c {
                Cell::Missing => {}
                Cell::Sentinel(s) => {
                    seen.insert(DistinctKey::Sentinel(s));
                }
                Cell::Number(x) => {
                    // -0.0 and 0.0 compare equal
                    let x = if x == 0.0 { 0.0 } else { x };
                    seen.insert(DistinctKey::Bits(x.to_bits()));
                }
                Cell::Day(d) => {
                    seen.insert(DistinctKey::Bits(d as u64));
                }
                Cell::Level(l) => {
                    seen.insert(DistinctKey::Level(l));
                }
            }
        }
        seen.len()
    }

    /// Keeps the given rows, in the given order. Level dictionaries are kept whole.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            meta: self.meta.clone(),
            cells: rows.iter().map(|&r| self.cells[r]).collect(),
            levels: self.levels.clone(),
        }
    }
}

/// Incremental typed column construction, one text cell at a time.
#[derive(Debug)]
pub struct ColumnBuilder {
    meta: ColumnMeta,
    cells: Vec<Cell>,
    levels: Vec<String>,
    level_index: HashMap<String, u32>,
}

impl ColumnBuilder {
    pub fn new(meta: ColumnMeta) -> Self {
        Self {
            meta,
            cells: Vec::new(),
            levels: Vec::new(),
            level_index: HashMap::new(),
        }
    }

    /// Appends one cell. On a parse failure nothing is appended.
    #[allow(clippy::result_unit_err)]
    pub fn push(&mut self, text: &str) -> Result<(), ()> {
        let cell = if text.is_empty() {
            Cell::Missing
        } else if let Some(s) = self.meta.sentinels.iter().position(|s| s == text) {
            Cell::Sentinel(s as u16)
        } else {
            match self.meta.value_type {
                ValueType::Numeric => {
                    let x: f64 = text.parse().map_err(|_| ())?;
                    if !x.is_finite() {
                        return Err(());
                    }
                    Cell::Number(x)
                }
                ValueType::RelativeDate => Cell::Day(text.parse().map_err(|_| ())?),
                ValueType::Categorical | ValueType::Identifier => {
                    Cell::Level(self.intern(text))
                }
            }
        };
        self.cells.push(cell);
        Ok(())
    }

    fn intern(&mut self, text: &str) -> u32 {
        if let Some(&c) = self.level_index.get(text) {
            return c;
        }
        let c = self.levels.len() as u32;
        self.levels.push(text.to_string());
        self.level_index.insert(text.to_string(), c);
        c
    }

    pub fn meta(&self) -> &ColumnMeta {
        &self.meta
    }

    pub fn finish(self) -> Column {
        Column {
            meta: self.meta,
            cells: self.cells,
            levels: self.levels,
        }
    }
}

#[derive(Hash, PartialEq, Eq)]
enum DistinctKey {
    Sentinel(u16),
    Bits(u64),
    Level(u32),
}

/// A loaded table: `n_rows` records over an ordered list of typed columns.
#[derive(Debug, Clone, PartialEq)]
pub struct RegistryTable {
    name: String,
    columns: Vec<Column>,
    n_rows: usize,
}

impl RegistryTable {
    pub fn new(name: impl Into<String>, columns: Vec<Column>) -> Result<Self, ModelError> {
        let name = name.into();
        let n_rows = columns.first().map_or(0, Column::len);
        let mut names = HashSet::new();
        for c in &columns {
            if !names.insert(c.name()) {
                return Err(ModelError::DuplicateColumn {
                    table: name,
                    column: c.name().to_string(),
                });
            }
            if c.len() != n_rows {
                return Err(ModelError::RaggedColumn {
                    table: name,
                    column: c.name().to_string(),
                    expected: n_rows,
                    found: c.len(),
                });
            }
            if c.meta.sentinels.iter().any(String::is_empty) {
                return Err(ModelError::EmptySentinel {
                    column: c.name().to_string(),
                });
            }
        }
        Ok(Self {
            name,
            columns,
            n_rows,
        })
    }

    /// Convenience constructor from row-major text cells.
    pub fn from_text_rows(
        name: impl Into<String>,
        metas: Vec<ColumnMeta>,
        rows: &[Vec<&str>],
    ) -> Result<Self, TextTableError> {
        let name = name.into();
        let mut columns = Vec::with_capacity(metas.len());
        for (j, meta) in metas.into_iter().enumerate() {
            let column_name = meta.name.clone();
            let col = Column::parse(meta, rows.iter().map(|r| r[j])).map_err(|f| {
                TextTableError::Cell {
                    column: column_name,
                    failure: f,
                }
            })?;
            columns.push(col);
        }
        Ok(Self::new(name, columns)?)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, j: usize) -> &Column {
        &self.columns[j]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name() == name)
    }

    pub fn column_by_name(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name() == name)
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell {
        self.columns[col].cell(row)
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.columns[col].is_missing(row)
    }

    /// Providers that contribute at least one column, in id order.
    pub fn providers(&self) -> Vec<ProviderId> {
        let mut ids: Vec<ProviderId> = self.columns.iter().map(Column::provider).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            columns: self.columns.iter().map(|c| c.select_rows(rows)).collect(),
            n_rows: rows.len(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TextTableError {
    #[error("column `{column}`, row {}: cannot parse `{}`", failure.row + 1, failure.text)]
    Cell {
        column: String,
        failure: CellParseFailure,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Column positions contributed by one provider: `C_X(DP)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderColumnSet {
    pub provider: ProviderId,
    pub indices: Vec<usize>,
}

impl ProviderColumnSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.indices.binary_search(&j).is_ok()
    }
}

/// Rows in which a provider reported at least one non-missing cell: `I_X(DP)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderObservationSet {
    pub provider: ProviderId,
    pub rows: Vec<usize>,
    mask: Vec<bool>,
}

impl ProviderObservationSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn contains(&self, row: usize) -> bool {
        self.mask.get(row).copied().unwrap_or(false)
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }
}

pub fn provider_column_set(table: &RegistryTable, dp: ProviderId) -> ProviderColumnSet {
    let indices = table
        .columns()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.provider() == dp)
        .map(|(j, _)| j)
        .collect();
    ProviderColumnSet {
        provider: dp,
        indices,
    }
}

pub fn provider_observation_set(table: &RegistryTable, dp: ProviderId) -> ProviderObservationSet {
    let cols = provider_column_set(table, dp);
    observation_set_for(table, &cols)
}

pub(crate) fn observation_set_for(
    table: &RegistryTable,
    cols: &ProviderColumnSet,
) -> ProviderObservationSet {
    let mut mask = vec![false; table.n_rows()];
    for &j in &cols.indices {
        for (m, c) in mask.iter_mut().zip(table.column(j).cells()) {
            *m |= c.is_observed();
        }
    }
    let rows = mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(i, _)| i)
        .collect();
    ProviderObservationSet {
        provider: cols.provider,
        rows,
        mask,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ET: ProviderId = ProviderId(0);
    const DSO: ProviderId = ProviderId(1);
    const IQTIG: ProviderId = ProviderId(2);

    fn num(name: &str, p: ProviderId) -> ColumnMeta {
        ColumnMeta::new(name, p, ValueType::Numeric)
    }

    #[test]
    fn column_set_picks_provider_columns() {
        let t = RegistryTable::from_text_rows(
            "T",
            vec![num("A", ET), num("B", DSO), num("C", ET)],
            &[vec!["1", "2", "3"]],
        )
        .unwrap();
        assert_eq!(provider_column_set(&t, ET).indices, vec![0, 2]);
        assert!(provider_column_set(&t, IQTIG).is_empty());
    }

    #[test]
    fn column_set_total_case() {
        let metas = (0..5).map(|j| num(&format!("c{j}"), ET)).collect();
        let t = RegistryTable::from_text_rows("T", metas, &[vec!["1"; 5]]).unwrap();
        assert_eq!(provider_column_set(&t, ET).indices, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn observation_set_skips_rows_without_provider_values() {
        let t = RegistryTable::from_text_rows(
            "T",
            vec![num("A", ET), num("B", ET), num("C", DSO)],
            &[
                vec!["1", "", "5"],
                vec!["", "2", "5"],
                vec!["", "", "5"],
                vec!["3", "4", ""],
            ],
        )
        .unwrap();
        let set = provider_observation_set(&t, ET);
        assert_eq!(set.rows, vec![0, 1, 3]);
        assert!(!set.contains(2));
        assert!(provider_observation_set(&t, IQTIG).is_empty());
    }

    #[test]
    fn sentinel_counts_as_observed() {
        let meta = ColumnMeta::new("V", ET, ValueType::Categorical).with_sentinels(["not tested"]);
        let t = RegistryTable::from_text_rows(
            "T",
            vec![meta],
            &[vec![""], vec!["not tested"], vec![""]],
        )
        .unwrap();
        assert_eq!(t.cell(1, 0), Cell::Sentinel(0));
        assert_eq!(provider_observation_set(&t, ET).rows, vec![1]);
    }

    #[test]
    fn sentinel_in_numeric_column_is_not_parsed() {
        let meta = ColumnMeta::new("V", ET, ValueType::Numeric).with_sentinels(["unknown"]);
        let col = Column::parse(meta, ["1.5", "unknown", ""]).unwrap();
        assert_eq!(col.cells(), &[Cell::Number(1.5), Cell::Sentinel(0), Cell::Missing]);
        assert_eq!(col.text(1), "unknown");
    }

    #[test]
    fn unparseable_cell_is_an_error() {
        let err = Column::parse(num("V", ET), ["1", "abc"]).unwrap_err();
        assert_eq!(
            err,
            CellParseFailure {
                row: 1,
                text: "abc".into()
            }
        );
        assert!(Column::parse(num("V", ET), ["NaN"]).is_err());
        let date = ColumnMeta::new("D", ET, ValueType::RelativeDate);
        assert!(Column::parse(date.clone(), ["1.5"]).is_err());
        assert_eq!(
            Column::parse(date, ["-30"]).unwrap().cell(0),
            Cell::Day(-30)
        );
    }

    #[test]
    fn duplicate_and_ragged_columns_rejected() {
        let a = Column::parse(num("A", ET), ["1"]).unwrap();
        let b = Column::parse(num("A", DSO), ["1"]).unwrap();
        assert!(matches!(
            RegistryTable::new("T", vec![a.clone(), b]),
            Err(ModelError::DuplicateColumn { .. })
        ));
        let c = Column::parse(num("C", DSO), ["1", "2"]).unwrap();
        assert!(matches!(
            RegistryTable::new("T", vec![a, c]),
            Err(ModelError::RaggedColumn { .. })
        ));
    }

    #[test]
    fn provider_set_rejects_duplicates() {
        assert_eq!(
            ProviderSet::new(["ET", "ET"]),
            Err(ModelError::DuplicateProvider("ET".into()))
        );
        assert_eq!(
            ProviderSet::new(Vec::<String>::new()),
            Err(ModelError::EmptyProviderSet)
        );
        let ps = ProviderSet::default();
        assert_eq!(ps.id("IQTIG"), Some(IQTIG));
        assert_eq!(ps.name(DSO), "DSO");
    }
}
