use std::collections::BTreeMap;

use serde::Serialize;

use super::{IngestError, SchemaConfig};
use crate::model::ProviderId;

/// Columns of one table that store the same quantity, one per provider.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MultiSourceGroup {
    pub table: String,
    pub key: String,
    /// Sorted by provider; at most one member per provider.
    pub members: Vec<GroupMember>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupMember {
    pub provider: ProviderId,
    /// Position in the loaded table.
    pub column: usize,
    pub name: String,
}

/// Groups declared through `group` keys or, when no column in the whole
/// config carries a key, inferred from `<prefix>_<PROVIDER>` column names.
pub fn discover_multisource_groups(
    config: &SchemaConfig,
) -> Result<Vec<MultiSourceGroup>, IngestError> {
    let providers = config.provider_set()?;
    let keyed = config
        .tables
        .iter()
        .flat_map(|t| &t.columns)
        .any(|c| !c.exclude && c.group.is_some());

    let mut groups = Vec::new();
    for table in &config.tables {
        let mut by_key: BTreeMap<String, Vec<GroupMember>> = BTreeMap::new();
        let loaded = table.columns.iter().filter(|c| !c.exclude);
        for (idx, col) in loaded.enumerate() {
            let Some(provider) = providers.id(&col.provider) else {
                continue;
            };
            let key = if keyed {
                col.group.clone()
            } else {
                col.name
                    .rsplit_once('_')
                    .filter(|(prefix, suffix)| !prefix.is_empty() && *suffix == col.provider)
                    .map(|(prefix, _)| prefix.to_string())
            };
            if let Some(key) = key {
                by_key.entry(key).or_default().push(GroupMember {
                    provider,
                    column: idx,
                    name: col.name.clone(),
                });
            }
        }
        for (key, mut members) in by_key {
            members.sort_by_key(|m| m.provider);
            if let Some(w) = members.windows(2).find(|w| w[0].provider == w[1].provider) {
                return Err(IngestError::ConflictingGroup {
                    table: table.name.clone(),
                    key,
                    provider: providers.name(w[0].provider).to_string(),
                });
            }
            if members.len() < 2 {
                if keyed {
                    return Err(IngestError::InvalidConfig {
                        field: format!("tables.{}.columns.{}.group", table.name, members[0].name),
                        message: format!("group `{key}` needs columns from at least two providers"),
                    });
                }
                continue;
            }
            groups.push(MultiSourceGroup {
                table: table.name.clone(),
                key,
                members,
            });
        }
    }
    Ok(groups)
}
