//! Synthetic multi-provider registry bundles with a ground-truth ledger.
//!
//! All draws come from one ChaCha8 stream seeded from the config, consumed
//! in a fixed order (tables in config order, then survival tables), so a
//! bundle is reproducible byte for byte with this implementation.

mod config;
mod generate;
mod preset;
mod survival;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::ingest::{Bundle, ColumnDecl, IngestError, SchemaConfig, TableDecl};
use crate::model::{Column, RegistryTable};

pub use config::{
    Mechanism, SurvivalSpec, SynthColumn, SynthConfig, SynthGroup, SynthGroupMember, SynthTable,
    ValueSpec,
};
pub use generate::{ColumnTruth, GroupTruth};
pub use preset::registry_like;
pub use survival::RecipientTruth;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config at `{field}`: {message}")]
    InvalidConfig { field: String, message: String },
    #[error("cannot parse synth config: {0}")]
    Parse(String),
    #[error("cannot write `{}`: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("cannot write CSV for table `{table}`: {message}")]
    Csv { table: String, message: String },
}

/// One generated table; empty strings are missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedTable {
    pub name: String,
    pub columns: Vec<ColumnDecl>,
    /// Column-major cell text.
    pub cells: Vec<Vec<String>>,
}

impl GeneratedTable {
    pub fn n_rows(&self) -> usize {
        self.cells.first().map_or(0, Vec::len)
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        for i in 0..self.n_rows() {
            w.write_record(self.cells.iter().map(|c| c[i].as_str()))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruthLedger {
    pub seed: u64,
    pub n_recipients: usize,
    pub columns: Vec<ColumnTruth>,
    pub groups: Vec<GroupTruth>,
    pub recipients: Vec<RecipientTruth>,
}

/// Generates tables one at a time, handing each to `sink`, and returns the
/// schema describing them together with the ledger.
pub fn generate_with<F>(
    config: &SynthConfig,
    mut sink: F,
) -> Result<(SchemaConfig, GroundTruthLedger), SynthError>
where
    F: FnMut(GeneratedTable) -> Result<(), SynthError>,
{
    config.validate()?;
    let seed = config.seed()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ledger = GroundTruthLedger {
        seed,
        n_recipients: config.n_recipients,
        columns: Vec::new(),
        groups: Vec::new(),
        recipients: Vec::new(),
    };
    let mut decls = Vec::new();
    for table in &config.tables {
        let (generated, columns, groups) = generate::generate_table(config, table, &mut rng);
        ledger.columns.extend(columns);
        ledger.groups.extend(groups);
        decls.push(table_decl(&generated));
        sink(generated)?;
    }
    let mut eventtime = None;
    if let Some(spec) = &config.survival {
        let (tables, truths) = survival::generate_survival(spec, config.n_recipients, &mut rng);
        ledger.recipients = truths;
        for t in tables {
            for (d, values) in t.columns.iter().zip(&t.cells) {
                ledger.columns.push(ColumnTruth {
                    table: t.name.clone(),
                    column: d.name.clone(),
                    provider: d.provider.clone(),
                    mechanism: Mechanism::None,
                    n_rows: values.len(),
                    n_missing: values.iter().filter(|v| v.is_empty()).count(),
                });
            }
            decls.push(table_decl(&t));
            sink(t)?;
        }
        eventtime = Some(survival::eventtime_config(spec));
    }
    let schema = SchemaConfig {
        providers: config.providers.clone(),
        tables: decls,
        cohort: config.cohort.clone(),
        eventtime,
        tree: None,
        base_dir: PathBuf::new(),
    };
    Ok((schema, ledger))
}

fn table_decl(t: &GeneratedTable) -> TableDecl {
    TableDecl {
        name: t.name.clone(),
        file: PathBuf::from(format!("{}.csv", t.name)),
        columns: t.columns.clone(),
    }
}

/// A bundle held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthBundle {
    pub schema: SchemaConfig,
    pub tables: Vec<GeneratedTable>,
    pub ledger: GroundTruthLedger,
}

impl SynthBundle {
    pub fn table(&self, name: &str) -> Option<&GeneratedTable> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Types the generated text exactly as ingest would after a CSV round trip.
    pub fn load(&self) -> Result<Bundle, IngestError> {
        let providers = self.schema.provider_set()?;
        let mut tables = Vec::new();
        for (decl, t) in self.schema.tables.iter().zip(&self.tables) {
            let metas = self.schema.column_metas(decl)?;
            let columns = metas
                .into_iter()
                .zip(&t.cells)
                .map(|(meta, cells)| {
                    let name = meta.name.clone();
                    let expected = meta.value_type.as_str();
                    Column::parse(meta, cells.iter().map(String::as_str)).map_err(|f| {
                        IngestError::CellParse {
                            table: t.name.clone(),
                            row: f.row + 1,
                            column: name,
                            text: f.text,
                            expected,
                        }
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            tables.push(RegistryTable::new(t.name.clone(), columns)?);
        }
        Ok(Bundle { providers, tables })
    }
}

pub fn generate(config: &SynthConfig) -> Result<SynthBundle, SynthError> {
    let mut tables = Vec::new();
    let (schema, ledger) = generate_with(config, |t| {
        tables.push(t);
        Ok(())
    })?;
    Ok(SynthBundle {
        schema,
        tables,
        ledger,
    })
}

/// Files written by [`write_bundle`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WrittenBundle {
    pub schema: PathBuf,
    pub ledger: PathBuf,
    /// `(table, file, rows)`.
    pub tables: Vec<(String, PathBuf, usize)>,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SynthError + '_ {
    move |source| SynthError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), SynthError> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Writes `<table>.csv` for every table, `schema.toml` and `ledger.json`
/// into `dir`, creating it if needed. Tables are generated and written one
/// at a time.
pub fn write_bundle(config: &SynthConfig, dir: &Path) -> Result<WrittenBundle, SynthError> {
    config.validate()?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    let (schema, ledger) = generate_with(config, |t| {
        let path = dir.join(format!("{}.csv", t.name));
        let mut buf = Vec::new();
        t.write_csv(&mut buf).map_err(|e| SynthError::Csv {
            table: t.name.clone(),
            message: e.to_string(),
        })?;
        write_atomic(&path, &buf)?;
        written.push((t.name.clone(), path, t.n_rows()));
        Ok(())
    })?;
    let schema_path = dir.join("schema.toml");
    write_atomic(&schema_path, schema.to_toml_string().as_bytes())?;
    let ledger_path = dir.join("ledger.json");
    let json = serde_json::to_string_pretty(&ledger).expect("ledger serializes");
    write_atomic(&ledger_path, json.as_bytes())?;
    Ok(WrittenBundle {
        schema: schema_path,
        ledger: ledger_path,
        tables: written,
    })
}
