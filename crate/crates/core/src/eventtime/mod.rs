//! Event-time derivation from multiple provider sources and Kaplan-Meier
//! estimation under the three outcome definitions.

mod dates;
mod km;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Bundle;
use crate::model::{Cell, Column, RegistryTable};

pub use dates::{
    apply_plausibility, assemble_outcome, derive_death_dates, derive_gfd, derive_lfud, Day,
    Disposition, OutcomeDefinition, RecipientDates, SurvivalRecord, HORIZON_3Y_DAYS,
    IMPLAUSIBLE_AFTER_DAYS, RECODE_WINDOW_DAYS,
};
pub use km::{kaplan_meier, KmCurve, KmPoint};

#[derive(Debug, Error, PartialEq)]
pub enum EventTimeError {
    #[error("cohort is empty")]
    EmptyCohort,
    #[error("record `{id}` has invalid time {time}")]
    InvalidTime { id: String, time: f64 },
    #[error("event-time mapping is not configured")]
    NotConfigured,
    #[error("event-time mapping refers to unknown table `{0}`")]
    UnknownTable(String),
    #[error("table `{table}`: event-time column `{column}` does not exist")]
    UnknownColumn { table: String, column: String },
    #[error("table `{table}`: column `{column}` must be a relative_date column")]
    NotADateColumn { table: String, column: String },
}

fn default_horizon() -> Day {
    HORIZON_3Y_DAYS
}

/// Where the date sources live in the bundle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventTimeConfig {
    pub transplant_table: String,
    pub transplant_recipient_id: String,
    pub tx_date: String,
    /// Reported last follow-up date.
    pub reported_lfud: String,
    pub et_failure_date: String,
    pub recipient_table: String,
    pub recipient_id: String,
    pub et_death_date: String,
    pub followup_table: String,
    /// Recipient identifier columns of the follow-up table; the first observed one is used.
    pub followup_recipient_ids: Vec<String>,
    /// Follow-up date columns of every reporting provider.
    pub followup_dates: Vec<String>,
    pub iqtig_death_date: String,
    pub iqtig_failure_date: String,
    #[serde(default = "default_horizon")]
    pub horizon_days: Day,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CohortDisposition {
    Included,
    ExcludedImplausible,
    ExcludedMissingDates,
}

impl CohortDisposition {
    pub fn as_str(self) -> &'static str {
        match self {
            CohortDisposition::Included => "included",
            CohortDisposition::ExcludedImplausible => "excluded_implausible",
            CohortDisposition::ExcludedMissingDates => "excluded_missing_dates",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortRow {
    pub recipient_id: String,
    pub definition: OutcomeDefinition,
    pub record: Option<SurvivalRecord>,
    pub disposition: CohortDisposition,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct EventTimeDiagnostics {
    pub recipients: usize,
    /// Transplantation rows beyond the first one of a recipient.
    pub duplicate_transplant_rows: usize,
    pub excluded_implausible: usize,
    pub recoded_dates: usize,
    pub nulled_dates: usize,
    /// Retained recipients whose latest follow-up date lies after their earliest death date.
    pub lfud_after_death: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventTimeResult {
    /// Cleaned dates of retained recipients, in transplantation-table order.
    pub retained: Vec<RecipientDates>,
    pub rows: Vec<CohortRow>,
    pub diagnostics: EventTimeDiagnostics,
}

impl EventTimeResult {
    pub fn records(&self, definition: OutcomeDefinition) -> Vec<SurvivalRecord> {
        self.rows
            .iter()
            .filter(|r| r.definition == definition)
            .filter_map(|r| r.record.clone())
            .collect()
    }
}

fn table<'a>(bundle: &'a Bundle, name: &str) -> Result<&'a RegistryTable, EventTimeError> {
    bundle
        .table(name)
        .ok_or_else(|| EventTimeError::UnknownTable(name.to_string()))
}

fn column<'a>(t: &'a RegistryTable, name: &str) -> Result<&'a Column, EventTimeError> {
    t.column_by_name(name).ok_or_else(|| EventTimeError::UnknownColumn {
        table: t.name().to_string(),
        column: name.to_string(),
    })
}

fn date_column<'a>(t: &'a RegistryTable, name: &str) -> Result<&'a Column, EventTimeError> {
    let c = column(t, name)?;
    if c.value_type() != crate::model::ValueType::RelativeDate {
        return Err(EventTimeError::NotADateColumn {
            table: t.name().to_string(),
            column: name.to_string(),
        });
    }
    Ok(c)
}

fn id_text(c: &Column, row: usize) -> Option<String> {
    match c.cell(row) {
        Cell::Missing => None,
        _ => Some(c.text(row).into_owned()),
    }
}

#[derive(Default)]
struct FollowUp {
    dates: Vec<Day>,
    deaths: Vec<Day>,
    failures: Vec<Day>,
}

/// Joins the three source tables into one raw [`RecipientDates`] per
/// recipient with a transplantation date, before any cleaning.
pub fn collect_recipient_dates(
    bundle: &Bundle,
    config: &EventTimeConfig,
) -> Result<(Vec<RecipientDates>, usize), EventTimeError> {
    let tx_table = table(bundle, &config.transplant_table)?;
    let tx_id = column(tx_table, &config.transplant_recipient_id)?;
    let tx_date = date_column(tx_table, &config.tx_date)?;
    let reported = date_column(tx_table, &config.reported_lfud)?;
    let et_gfd = date_column(tx_table, &config.et_failure_date)?;

    let recip_table = table(bundle, &config.recipient_table)?;
    let recip_id = column(recip_table, &config.recipient_id)?;
    let et_dd = date_column(recip_table, &config.et_death_date)?;

    let fu_table = table(bundle, &config.followup_table)?;
    let fu_ids = config
        .followup_recipient_ids
        .iter()
        .map(|n| column(fu_table, n))
        .collect::<Result<Vec<_>, _>>()?;
    let fu_dates = config
        .followup_dates
        .iter()
        .map(|n| date_column(fu_table, n))
        .collect::<Result<Vec<_>, _>>()?;
    let fu_death = date_column(fu_table, &config.iqtig_death_date)?;
    let fu_failure = date_column(fu_table, &config.iqtig_failure_date)?;

    let mut death_by_id: HashMap<String, Day> = HashMap::new();
    for i in 0..recip_table.n_rows() {
        if let (Some(id), Some(d)) = (id_text(recip_id, i), et_dd.cell(i).as_day()) {
            death_by_id
                .entry(id)
                .and_modify(|e| *e = (*e).min(d))
                .or_insert(d);
        }
    }

    let mut followups: HashMap<String, FollowUp> = HashMap::new();
    for i in 0..fu_table.n_rows() {
        let Some(id) = fu_ids.iter().find_map(|c| id_text(c, i)) else {
            continue;
        };
        let entry = followups.entry(id).or_default();
        entry
            .dates
            .extend(fu_dates.iter().filter_map(|c| c.cell(i).as_day()));
        entry.deaths.extend(fu_death.cell(i).as_day());
        entry.failures.extend(fu_failure.cell(i).as_day());
    }

    let mut out = Vec::new();
    let mut seen: HashMap<String, ()> = HashMap::new();
    let mut duplicates = 0;
    for i in 0..tx_table.n_rows() {
        let (Some(id), Some(tx)) = (id_text(tx_id, i), tx_date.cell(i).as_day()) else {
            continue;
        };
        if seen.insert(id.clone(), ()).is_some() {
            duplicates += 1;
            continue;
        }
        let fu = followups.remove(&id).unwrap_or_default();
        let mut d = RecipientDates::new(id.clone(), tx);
        (d.reported_lfud, d.derived_lfud) = derive_lfud(reported.cell(i).as_day(), &fu.dates);
        (d.et_dd, d.iqtig_dd) = derive_death_dates(death_by_id.get(&id).copied(), &fu.deaths);
        (d.et_gfd, d.iqtig_gfd) = derive_gfd(et_gfd.cell(i).as_day(), &fu.failures);
        out.push(d);
    }
    Ok((out, duplicates))
}

/// Cleans every recipient and assembles the requested outcome definitions.
pub fn derive_cohort(
    bundle: &Bundle,
    config: &EventTimeConfig,
    definitions: &[OutcomeDefinition],
) -> Result<EventTimeResult, EventTimeError> {
    let (raw, duplicates) = collect_recipient_dates(bundle, config)?;
    Ok(derive_from_dates(&raw, definitions, config.horizon_days, duplicates))
}

pub fn derive_from_dates(
    raw: &[RecipientDates],
    definitions: &[OutcomeDefinition],
    horizon_days: Day,
    duplicate_transplant_rows: usize,
) -> EventTimeResult {
    let mut diagnostics = EventTimeDiagnostics {
        recipients: raw.len(),
        duplicate_transplant_rows,
        ..Default::default()
    };
    let mut retained = Vec::new();
    let mut rows = Vec::new();
    for d in raw {
        let (clean, disposition) = apply_plausibility(d);
        match disposition {
            Disposition::ExcludeRecipient => {
                diagnostics.excluded_implausible += 1;
                for &def in definitions {
                    rows.push(CohortRow {
                        recipient_id: d.id.clone(),
                        definition: def,
                        record: None,
                        disposition: CohortDisposition::ExcludedImplausible,
                    });
                }
            }
            Disposition::Retained { recoded, nulled } => {
                diagnostics.recoded_dates += recoded;
                diagnostics.nulled_dates += nulled;
                let lfud = [clean.reported_lfud, clean.derived_lfud].into_iter().flatten().max();
                let death = [clean.et_dd, clean.iqtig_dd].into_iter().flatten().min();
                if matches!((lfud, death), (Some(l), Some(dd)) if l > dd) {
                    diagnostics.lfud_after_death += 1;
                }
                for &def in definitions {
                    let record = assemble_outcome(&clean, def, horizon_days);
                    let disposition = if record.is_some() {
                        CohortDisposition::Included
                    } else {
                        CohortDisposition::ExcludedMissingDates
                    };
                    rows.push(CohortRow {
                        recipient_id: clean.id.clone(),
                        definition: def,
                        record,
                        disposition,
                    });
                }
                retained.push(clean);
            }
        }
    }
    EventTimeResult {
        retained,
        rows,
        diagnostics,
    }
}
