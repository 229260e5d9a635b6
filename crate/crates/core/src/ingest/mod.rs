//! Loading CSV export bundles described by a [`SchemaConfig`].
//!
//! Tables are RFC 4180 CSV with a mandatory header row. The header must hold
//! exactly the declared columns (in any order); loaded columns follow the
//! declaration order of the config.

mod cohort;
mod config;
mod groups;

use std::collections::{HashMap, HashSet};
use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::model::{ColumnBuilder, ModelError, ProviderSet, RegistryTable};

pub use cohort::apply_cohort_filter;
pub use config::{
    CohortFilter, ColumnDecl, Comparator, Condition, Dependent, SchemaConfig, TableDecl,
};
pub use groups::{discover_multisource_groups, GroupMember, MultiSourceGroup};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read `{}`: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("cannot parse config `{}`: {message}", path.display())]
    ConfigParse { path: PathBuf, message: String },
    #[error("invalid config at `{field}`: {message}")]
    InvalidConfig { field: String, message: String },
    #[error("table `{table}`: file `{}` not found", path.display())]
    FileMissing { table: String, path: PathBuf },
    #[error("table `{table}`: header mismatch (missing: {missing:?}, unexpected: {unexpected:?})")]
    HeaderMismatch {
        table: String,
        missing: Vec<String>,
        unexpected: Vec<String>,
    },
    #[error("table `{table}`, row {row}, column `{column}`: cannot parse `{text}` as {expected}")]
    CellParse {
        table: String,
        /// One-based data row (the header is not counted).
        row: usize,
        column: String,
        text: String,
        expected: &'static str,
    },
    #[error("table `{table}`: duplicate column `{column}`")]
    DuplicateColumn { table: String, column: String },
    #[error("duplicate table `{0}`")]
    DuplicateTable(String),
    #[error("table `{table}`: malformed CSV: {message}")]
    Csv { table: String, message: String },
    #[error("table `{table}`: group `{key}` has two columns from provider `{provider}`")]
    ConflictingGroup {
        table: String,
        key: String,
        provider: String,
    },
    #[error("table `{table}`: filter column `{column}` does not exist")]
    UnknownFilterColumn { table: String, column: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl IngestError {
    /// Config problems as opposed to problems with the data files.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            IngestError::ConfigParse { .. }
                | IngestError::InvalidConfig { .. }
                | IngestError::DuplicateTable(_)
                | IngestError::ConflictingGroup { .. }
                | IngestError::UnknownFilterColumn { .. }
        )
    }
}

/// All tables of one export, with the run's provider set.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub providers: ProviderSet,
    pub tables: Vec<RegistryTable>,
}

impl Bundle {
    pub fn table(&self, name: &str) -> Option<&RegistryTable> {
        self.tables.iter().find(|t| t.name() == name)
    }
}

/// Loads every declared table. Row order of each file is preserved.
pub fn load_bundle(config: &SchemaConfig) -> Result<Bundle, IngestError> {
    config.validate()?;
    let providers = config.provider_set()?;
    let tables = config
        .tables
        .iter()
        .map(|decl| load_table(config, decl))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Bundle { providers, tables })
}

/// [`load_bundle`] followed by the configured cohort filter.
pub fn load_cohort(config: &SchemaConfig) -> Result<Bundle, IngestError> {
    let bundle = load_bundle(config)?;
    apply_cohort_filter(bundle, config.cohort.as_ref())
}

pub fn load_table(config: &SchemaConfig, decl: &TableDecl) -> Result<RegistryTable, IngestError> {
    let path = config.resolve(&decl.file);
    if !path.is_file() {
        return Err(IngestError::FileMissing {
            table: decl.name.clone(),
            path,
        });
    }
    let csv_err = |e: csv::Error| IngestError::Csv {
        table: decl.name.clone(),
        message: e.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(&path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => IngestError::Io {
                path: path.clone(),
                source: io::Error::other(e.to_string()),
            },
            _ => csv_err(e),
        })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();

    let mut position: HashMap<&str, usize> = HashMap::new();
    for (i, h) in header.iter().enumerate() {
        if position.insert(h.as_str(), i).is_some() {
            return Err(IngestError::DuplicateColumn {
                table: decl.name.clone(),
                column: h.clone(),
            });
        }
    }
    let declared: HashSet<&str> = decl.columns.iter().map(|c| c.name.as_str()).collect();
    let missing: Vec<String> = decl
        .columns
        .iter()
        .filter(|c| !position.contains_key(c.name.as_str()))
        .map(|c| c.name.clone())
        .collect();
    let unexpected: Vec<String> = header
        .iter()
        .filter(|h| !declared.contains(h.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() || !unexpected.is_empty() {
        return Err(IngestError::HeaderMismatch {
            table: decl.name.clone(),
            missing,
            unexpected,
        });
    }

    let metas = config.column_metas(decl)?;
    let sources: Vec<usize> = metas.iter().map(|m| position[m.name.as_str()]).collect();
    let mut builders: Vec<ColumnBuilder> = metas.into_iter().map(ColumnBuilder::new).collect();
    let mut record = csv::StringRecord::new();
    let mut row = 0usize;
    while reader.read_record(&mut record).map_err(csv_err)? {
        row += 1;
        for (b, &src) in builders.iter_mut().zip(&sources) {
            let text = &record[src];
            if b.push(text).is_err() {
                return Err(IngestError::CellParse {
                    table: decl.name.clone(),
                    row,
                    column: header[src].clone(),
                    text: text.to_string(),
                    expected: b.meta().value_type.as_str(),
                });
            }
        }
    }
    let columns = builders.into_iter().map(ColumnBuilder::finish).collect();
    Ok(RegistryTable::new(decl.name.clone(), columns)?)
}

/// Writes a table as CSV with its loaded columns as header.
pub fn write_table_csv<W: io::Write>(table: &RegistryTable, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(table.columns().iter().map(|c| c.name()))?;
    for i in 0..table.n_rows() {
        let cells: Vec<_> = table.columns().iter().map(|c| c.text(i)).collect();
        w.write_record(cells.iter().map(|s| s.as_ref()))?;
    }
    w.flush()?;
    Ok(())
}
