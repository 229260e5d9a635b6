use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::eventtime::EventTimeConfig;
use crate::misstree::TreeParams;
use crate::model::{ColumnMeta, ProviderSet, ValueType};

fn default_providers() -> Vec<String> {
    ProviderSet::default().names().to_vec()
}

/// Declarative description of an export bundle.
///
/// Stored as TOML. Relative table paths resolve against the directory of
/// the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaConfig {
    #[serde(default = "default_providers")]
    pub providers: Vec<String>,
    pub tables: Vec<TableDecl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cohort: Option<CohortFilter>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eventtime: Option<EventTimeConfig>,
    /// Regression-tree parameters; defaults apply when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<TreeParams>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableDecl {
    pub name: String,
    pub file: PathBuf,
    pub columns: Vec<ColumnDecl>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnDecl {
    pub name: String,
    pub provider: String,
    #[serde(rename = "type")]
    pub value_type: ValueType,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sentinels: Vec<String>,
    /// Multi-source group key shared with the other providers' copies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    /// Excluded columns must be present in the file but are not loaded.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub exclude: bool,
}

impl ColumnDecl {
    pub fn new(name: impl Into<String>, provider: impl Into<String>, value_type: ValueType) -> Self {
        Self {
            name: name.into(),
            provider: provider.into(),
            value_type,
            sentinels: Vec::new(),
            group: None,
            exclude: false,
        }
    }
}

/// Row filter: conjunctions of `column op literal` plus key propagation
/// from the anchor table to dependent tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortFilter {
    pub anchor_table: String,
    /// Identifier column of the anchor table used for propagation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor_key: Option<String>,
    #[serde(default)]
    pub conditions: Vec<Condition>,
    #[serde(default)]
    pub dependents: Vec<Dependent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Condition {
    /// Defaults to the anchor table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<String>,
    pub column: String,
    pub op: Comparator,
    pub value: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dependent {
    pub table: String,
    pub key: String,
}

impl SchemaConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::from_toml_str(&text).map_err(|e| match e {
            IngestError::ConfigParse { message, .. } => IngestError::ConfigParse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })?;
        config.base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        Ok(config)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, IngestError> {
        let config: Self = toml::from_str(text).map_err(|e| IngestError::ConfigParse {
            path: PathBuf::new(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema config serializes")
    }

    pub fn provider_set(&self) -> Result<ProviderSet, IngestError> {
        ProviderSet::new(self.providers.iter().cloned()).map_err(|e| IngestError::InvalidConfig {
            field: "providers".into(),
            message: e.to_string(),
        })
    }

    pub fn table(&self, name: &str) -> Option<&TableDecl> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn resolve(&self, file: &Path) -> PathBuf {
        if file.is_absolute() {
            file.to_path_buf()
        } else {
            self.base_dir.join(file)
        }
    }

    /// Structural checks that do not need the data files.
    pub fn validate(&self) -> Result<(), IngestError> {
        let providers = self.provider_set()?;
        let mut table_names = HashSet::new();
        for (t, table) in self.tables.iter().enumerate() {
            if !table_names.insert(table.name.as_str()) {
                return Err(IngestError::DuplicateTable(table.name.clone()));
            }
            let mut column_names = HashSet::new();
            for (c, col) in table.columns.iter().enumerate() {
                if !column_names.insert(col.name.as_str()) {
                    return Err(IngestError::DuplicateColumn {
                        table: table.name.clone(),
                        column: col.name.clone(),
                    });
                }
                if providers.id(&col.provider).is_none() {
                    return Err(IngestError::InvalidConfig {
                        field: format!("tables[{t}].columns[{c}].provider"),
                        message: format!("unknown provider `{}`", col.provider),
                    });
                }
                if col.sentinels.iter().any(String::is_empty) {
                    return Err(IngestError::InvalidConfig {
                        field: format!("tables[{t}].columns[{c}].sentinels"),
                        message: "sentinels must be non-empty strings".into(),
                    });
                }
            }
        }
        super::groups::discover_multisource_groups(self)?;
        if let Some(tree) = &self.tree {
            tree.validate().map_err(|e| IngestError::InvalidConfig {
                field: "tree".into(),
                message: e.to_string(),
            })?;
        }
        if let Some(cohort) = &self.cohort {
            if self.table(&cohort.anchor_table).is_none() {
                return Err(IngestError::InvalidConfig {
                    field: "cohort.anchor_table".into(),
                    message: format!("unknown table `{}`", cohort.anchor_table),
                });
            }
            for (i, d) in cohort.dependents.iter().enumerate() {
                if self.table(&d.table).is_none() {
                    return Err(IngestError::InvalidConfig {
                        field: format!("cohort.dependents[{i}].table"),
                        message: format!("unknown table `{}`", d.table),
                    });
                }
            }
            if !cohort.dependents.is_empty() && cohort.anchor_key.is_none() {
                return Err(IngestError::InvalidConfig {
                    field: "cohort.anchor_key".into(),
                    message: "dependents require an anchor key".into(),
                });
            }
        }
        Ok(())
    }

    /// Loaded (non-excluded) column metadata for one table, in declaration order.
    pub(crate) fn column_metas(&self, table: &TableDecl) -> Result<Vec<ColumnMeta>, IngestError> {
        let providers = self.provider_set()?;
        Ok(table
            .columns
            .iter()
            .filter(|c| !c.exclude)
            .map(|c| ColumnMeta {
                name: c.name.clone(),
                provider: providers.id(&c.provider).expect("validated provider"),
                value_type: c.value_type,
                sentinels: c.sentinels.clone(),
                multisource_key: c.group.clone(),
            })
            .collect())
    }
}
