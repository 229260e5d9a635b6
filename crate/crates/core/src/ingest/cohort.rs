use std::collections::HashSet;

use super::{Bundle, CohortFilter, Comparator, Condition, IngestError};
use crate::model::{Cell, Column, RegistryTable};

/// Applies the configured row filter.
///
/// Conditions drop rows from the table they name (the anchor table when
/// unnamed). A missing cell never satisfies a condition. Dependent tables
/// then keep only rows whose key occurs among the surviving anchor keys.
pub fn apply_cohort_filter(bundle: Bundle, filter: Option<&CohortFilter>) -> Result<Bundle, IngestError> {
    let Some(filter) = filter else {
        return Ok(bundle);
    };
    let Bundle {
        providers,
        mut tables,
    } = bundle;

    let find = |tables: &[RegistryTable], name: &str| {
        tables
            .iter()
            .position(|t| t.name() == name)
            .ok_or_else(|| IngestError::InvalidConfig {
                field: "cohort".into(),
                message: format!("unknown table `{name}`"),
            })
    };

    let mut by_table: Vec<(usize, Vec<&Condition>)> = Vec::new();
    for cond in &filter.conditions {
        let name = cond.table.as_deref().unwrap_or(&filter.anchor_table);
        let t = find(&tables, name)?;
        match by_table.iter_mut().find(|(i, _)| *i == t) {
            Some((_, v)) => v.push(cond),
            None => by_table.push((t, vec![cond])),
        }
    }
    for (t, conds) in by_table {
        let table = &tables[t];
        let mut predicates = Vec::with_capacity(conds.len());
        for c in conds {
            let col = table.column_by_name(&c.column).ok_or_else(|| {
                IngestError::UnknownFilterColumn {
                    table: table.name().to_string(),
                    column: c.column.clone(),
                }
            })?;
            predicates.push(Predicate::compile(col, c)?);
        }
        let keep: Vec<usize> = (0..table.n_rows())
            .filter(|&i| predicates.iter().all(|p| p.test(i)))
            .collect();
        tables[t] = table.select_rows(&keep);
    }

    if !filter.dependents.is_empty() {
        let anchor = &tables[find(&tables, &filter.anchor_table)?];
        let key_name = filter.anchor_key.as_deref().unwrap_or_default();
        let key_col = anchor.column_by_name(key_name).ok_or_else(|| {
            IngestError::UnknownFilterColumn {
                table: anchor.name().to_string(),
                column: key_name.to_string(),
            }
        })?;
        let keys: HashSet<String> = (0..anchor.n_rows())
            .filter(|&i| key_col.cell(i).is_observed())
            .map(|i| key_col.text(i).into_owned())
            .collect();
        for dep in &filter.dependents {
            let t = find(&tables, &dep.table)?;
            let table = &tables[t];
            let col = table.column_by_name(&dep.key).ok_or_else(|| {
                IngestError::UnknownFilterColumn {
                    table: table.name().to_string(),
                    column: dep.key.clone(),
                }
            })?;
            let keep: Vec<usize> = (0..table.n_rows())
                .filter(|&i| col.cell(i).is_observed() && keys.contains(col.text(i).as_ref()))
                .collect();
            tables[t] = table.select_rows(&keep);
        }
    }
    Ok(Bundle { providers, tables })
}

struct Predicate<'a> {
    column: &'a Column,
    op: Comparator,
    literal: Literal,
}

enum Literal {
    Number(f64),
    Text(String),
}

impl<'a> Predicate<'a> {
    fn compile(column: &'a Column, cond: &Condition) -> Result<Self, IngestError> {
        let literal = if column.value_type().is_numeric() {
            match cond.value.parse::<f64>() {
                Ok(x) => Literal::Number(x),
                // a numeric column can still be compared with a sentinel code
                Err(_) if matches!(cond.op, Comparator::Eq | Comparator::Ne) => {
                    Literal::Text(cond.value.clone())
                }
                Err(_) => {
                    return Err(IngestError::InvalidConfig {
                        field: format!("cohort.conditions.{}", cond.column),
                        message: format!("`{}` is not a number", cond.value),
                    })
                }
            }
        } else {
            if !matches!(cond.op, Comparator::Eq | Comparator::Ne) {
                return Err(IngestError::InvalidConfig {
                    field: format!("cohort.conditions.{}", cond.column),
                    message: "ordering comparators need a numeric column".into(),
                });
            }
            Literal::Text(cond.value.clone())
        };
        Ok(Self {
            column,
            op: cond.op,
            literal,
        })
    }

    fn test(&self, row: usize) -> bool {
        let cell = self.column.cell(row);
        if cell.is_missing() {
            return false;
        }
        match &self.literal {
            Literal::Number(x) => match cell {
                Cell::Number(_) | Cell::Day(_) => {
                    let v = cell.as_f64().expect("numeric cell");
                    match self.op {
                        Comparator::Eq => v == *x,
                        Comparator::Ne => v != *x,
                        Comparator::Lt => v < *x,
                        Comparator::Le => v <= *x,
                        Comparator::Gt => v > *x,
                        Comparator::Ge => v >= *x,
                    }
                }
                // sentinel codes are not numbers
                _ => matches!(self.op, Comparator::Ne),
            },
            Literal::Text(s) => {
                let equal = self.column.text(row) == s.as_str();
                match self.op {
                    Comparator::Eq => equal,
                    _ => !equal,
                }
            }
        }
    }
}
