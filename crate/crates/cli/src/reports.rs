//! Turns analysis results into report files held in memory.

use regida_core::consistency::{self, Association, ConsistencyReport};
use regida_core::eventtime::{
    kaplan_meier, CohortDisposition, EventTimeResult, KmCurve, OutcomeDefinition,
};
use regida_core::ingest::{Bundle, MultiSourceGroup, SchemaConfig};
use regida_core::missingness::{flux_report, miss_report};
use regida_core::misstree::{analyze, tree_to_json, MissTreeError, TreeAnalysis, TreeParams};
use regida_core::model::{ProviderId, RegistryTable};

use crate::error::CliError;
use crate::format::{float, opt_float, UNDEFINED};

/// One output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub name: String,
    pub bytes: Vec<u8>,
}

struct Csv {
    name: &'static str,
    writer: csv::Writer<Vec<u8>>,
}

impl Csv {
    fn new(name: &'static str, header: &[&str]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header).expect("in-memory write");
        Self { name, writer }
    }

    fn row<I, S>(&mut self, cells: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(cells).expect("in-memory write");
    }

    fn finish(self) -> Report {
        let bytes = self.writer.into_inner().expect("in-memory flush");
        Report {
            name: self.name.to_string(),
            bytes,
        }
    }
}

/// Tables and provider an analysis is restricted to.
#[derive(Debug, Clone, Default)]
pub struct Selection {
    pub tables: Option<Vec<String>>,
    pub provider: Option<ProviderId>,
}

impl Selection {
    pub fn tables<'a>(&'a self, bundle: &'a Bundle) -> impl Iterator<Item = &'a RegistryTable> + 'a {
        bundle.tables.iter().filter(move |t| {
            self.tables
                .as_ref()
                .is_none_or(|names| names.iter().any(|n| n == t.name()))
        })
    }

    pub fn providers(&self, table: &RegistryTable) -> Vec<ProviderId> {
        table
            .providers()
            .into_iter()
            .filter(|p| self.provider.is_none_or(|q| q == *p))
            .collect()
    }

    fn includes_provider(&self, p: ProviderId) -> bool {
        self.provider.is_none_or(|q| q == p)
    }
}

/// One row per table: rows as loaded (`rows`, in table order), rows after
/// the cohort filter, loaded columns, contributing providers and groups.
pub fn ingest_summary_counts(
    config: &SchemaConfig,
    cohort: &Bundle,
    rows: &[usize],
    groups: &[MultiSourceGroup],
) -> Report {
    let mut csv = Csv::new(
        "ingest_summary.csv",
        &["table", "file", "n_rows", "n_rows_cohort", "n_columns", "providers", "n_groups"],
    );
    for ((decl, table), n_rows) in config.tables.iter().zip(&cohort.tables).zip(rows) {
        let providers: Vec<&str> = table
            .providers()
            .into_iter()
            .map(|p| cohort.providers.name(p))
            .collect();
        let n_groups = groups.iter().filter(|g| g.table == decl.name).count();
        csv.row([
            decl.name.clone(),
            decl.file.display().to_string(),
            n_rows.to_string(),
            table.n_rows().to_string(),
            table.n_cols().to_string(),
            providers.join(";"),
            n_groups.to_string(),
        ]);
    }
    csv.finish()
}

pub fn missingness(bundle: &Bundle, sel: &Selection) -> Report {
    let mut csv = Csv::new(
        "missingness.csv",
        &["table", "column", "provider", "n_provider_rows", "missing", "observed", "pm"],
    );
    for table in sel.tables(bundle) {
        for m in miss_report(table) {
            if !sel.includes_provider(m.provider) {
                continue;
            }
            csv.row([
                m.table,
                m.column,
                bundle.providers.name(m.provider).to_string(),
                m.denom.to_string(),
                m.missing.to_string(),
                m.observed.to_string(),
                opt_float(m.pm),
            ]);
        }
    }
    csv.finish()
}

pub fn flux(bundle: &Bundle, sel: &Selection) -> Report {
    let mut csv = Csv::new("flux.csv", &["table", "column", "provider", "influx", "outflux"]);
    for table in sel.tables(bundle) {
        for f in flux_report(table) {
            if !sel.includes_provider(f.provider) {
                continue;
            }
            csv.row([
                f.table,
                f.column,
                bundle.providers.name(f.provider).to_string(),
                opt_float(f.influx),
                opt_float(f.outflux),
            ]);
        }
    }
    csv.finish()
}

fn tree_status(e: &MissTreeError) -> &'static str {
    match e {
        MissTreeError::NoProviderColumns => "no_provider_columns",
        MissTreeError::EmptyProviderIndex => "empty_provider_index",
        MissTreeError::NoUsableFeatures => "no_usable_features",
        MissTreeError::TooFewRows(_) => "too_few_rows",
        MissTreeError::InvalidParams(_) => "invalid_params",
    }
}

/// `trees.csv`, `importance.csv`, `cptable.csv` and `trees.json`, one unit
/// per (table, provider).
pub fn trees(bundle: &Bundle, sel: &Selection, params: &TreeParams) -> Vec<Report> {
    let mut summary = Csv::new(
        "trees.csv",
        &[
            "table",
            "provider",
            "status",
            "n_rows",
            "n_train",
            "n_test",
            "n_excluded",
            "n_splits",
            "n_leaves",
            "depth",
            "test_rmse",
            "top_predictor",
        ],
    );
    let mut importance = Csv::new(
        "importance.csv",
        &["table", "provider", "rank", "predictor", "raw", "adjusted", "important"],
    );
    let mut cptable = Csv::new(
        "cptable.csv",
        &["table", "provider", "cp", "nsplit", "rel_error", "xerror", "xstd"],
    );
    let mut documents = Vec::new();

    for table in sel.tables(bundle) {
        for dp in sel.providers(table) {
            let provider = bundle.providers.name(dp).to_string();
            let name = table.name().to_string();
            match analyze(table, dp, params) {
                Ok(a) => {
                    write_tree(&a, &provider, &mut summary, &mut importance, &mut cptable);
                    documents.push(serde_json::json!({
                        "table": name,
                        "provider": provider,
                        "status": "fitted",
                        "n_train": a.n_train,
                        "n_test": a.n_test,
                        "test_rmse": a.test_rmse,
                        "excluded": a.excluded,
                        "tree": tree_to_json(&a.tree),
                    }));
                }
                Err(e) => {
                    let status = tree_status(&e);
                    let mut row = vec![name.clone(), provider.clone(), status.to_string()];
                    row.extend(std::iter::repeat_n(UNDEFINED.to_string(), 9));
                    summary.row(row);
                    documents.push(serde_json::json!({
                        "table": name,
                        "provider": provider,
                        "status": status,
                        "message": e.to_string(),
                    }));
                }
            }
        }
    }
    let mut json = serde_json::to_vec_pretty(&documents).expect("tree documents serialize");
    json.push(b'\n');
    vec![
        summary.finish(),
        importance.finish(),
        cptable.finish(),
        Report {
            name: "trees.json".into(),
            bytes: json,
        },
    ]
}

fn write_tree(
    a: &TreeAnalysis,
    provider: &str,
    summary: &mut Csv,
    importance: &mut Csv,
    cptable: &mut Csv,
) {
    let top = a
        .importance
        .first()
        .map_or_else(|| UNDEFINED.to_string(), |e| e.feature.clone());
    summary.row([
        a.table.clone(),
        provider.to_string(),
        "fitted".to_string(),
        a.n_rows.to_string(),
        a.n_train.to_string(),
        a.n_test.to_string(),
        a.excluded.len().to_string(),
        a.tree.n_splits().to_string(),
        a.tree.n_leaves().to_string(),
        a.tree.max_depth().to_string(),
        float(a.test_rmse),
        top,
    ]);
    for (rank, e) in a.importance.iter().enumerate() {
        importance.row([
            a.table.clone(),
            provider.to_string(),
            (rank + 1).to_string(),
            e.feature.clone(),
            float(e.raw),
            float(e.adjusted),
            e.important.to_string(),
        ]);
    }
    for r in &a.cp_table {
        cptable.row([
            a.table.clone(),
            provider.to_string(),
            float(r.cp),
            r.nsplit.to_string(),
            float(r.rel_error),
            opt_float(r.xerror),
            opt_float(r.xstd),
        ]);
    }
}

/// Association pairs, cross-provider usable cases and the summary counts.
pub fn consistency(bundle: &Bundle, groups: &[MultiSourceGroup]) -> Vec<Report> {
    let ConsistencyReport {
        associations,
        usable,
        summary,
    } = consistency::consistency_report(bundle, groups);
    let name = |p: ProviderId| bundle.providers.name(p).to_string();

    let mut assoc = Csv::new(
        "consistency_association.csv",
        &[
            "table",
            "group",
            "provider_a",
            "provider_b",
            "column_a",
            "column_b",
            "measure",
            "association",
            "status",
        ],
    );
    for p in associations {
        let (measure, value, status) = match p.association {
            Association::Computed { measure, value } => {
                (measure.as_str().to_string(), float(value), "computed".to_string())
            }
            Association::NotComputable(reason) => (
                UNDEFINED.to_string(),
                UNDEFINED.to_string(),
                reason.as_str().to_string(),
            ),
        };
        assoc.row([
            p.table,
            p.group,
            name(p.provider_a),
            name(p.provider_b),
            p.column_a,
            p.column_b,
            measure,
            value,
            status,
        ]);
    }

    let mut usable_csv = Csv::new(
        "consistency_usable.csv",
        &[
            "table",
            "group",
            "target_provider",
            "source_provider",
            "target_column",
            "source_column",
            "usable_cases",
            "status",
        ],
    );
    for p in usable {
        let (value, status) = match p.usable_cases {
            Ok(u) => (float(u), "computed"),
            Err(e) => (UNDEFINED.to_string(), e.as_str()),
        };
        usable_csv.row([
            p.table,
            p.group,
            name(p.target_provider),
            name(p.source_provider),
            p.target_column,
            p.source_column,
            value,
            status.to_string(),
        ]);
    }

    let mut summary_csv = Csv::new("consistency_summary.csv", &["metric", "value"]);
    for (metric, value) in [
        ("groups", summary.groups),
        ("association_pairs", summary.association_pairs),
        ("computed", summary.computed),
        ("constant_data", summary.constant_data),
        ("no_overlap", summary.no_overlap),
        ("type_mismatch", summary.type_mismatch),
        ("high_agreement", summary.high_agreement),
        ("usable_pairs", summary.usable_pairs),
        ("usable_defined", summary.usable_defined),
        ("usable_no_missing_target", summary.usable_no_missing_target),
        ("usable_no_shared_rows", summary.usable_no_shared_rows),
    ] {
        summary_csv.row([metric.to_string(), value.to_string()]);
    }
    vec![assoc.finish(), usable_csv.finish(), summary_csv.finish()]
}

/// `cohort.csv` and `eventtime_diagnostics.csv`.
pub fn cohort(result: &EventTimeResult) -> Vec<Report> {
    let mut csv = Csv::new(
        "cohort.csv",
        &["recipient_id", "definition", "T_days", "delta", "disposition"],
    );
    for row in &result.rows {
        let (time, delta) = match &row.record {
            Some(r) => (float(r.time), (r.event as u8).to_string()),
            None => (UNDEFINED.to_string(), UNDEFINED.to_string()),
        };
        debug_assert_eq!(row.record.is_some(), row.disposition == CohortDisposition::Included);
        csv.row([
            row.recipient_id.clone(),
            row.definition.as_str().to_string(),
            time,
            delta,
            row.disposition.as_str().to_string(),
        ]);
    }
    let d = &result.diagnostics;
    let mut diag = Csv::new("eventtime_diagnostics.csv", &["metric", "value"]);
    for (metric, value) in [
        ("recipients", d.recipients),
        ("duplicate_transplant_rows", d.duplicate_transplant_rows),
        ("excluded_implausible", d.excluded_implausible),
        ("recoded_dates", d.recoded_dates),
        ("nulled_dates", d.nulled_dates),
        ("lfud_after_death", d.lfud_after_death),
    ] {
        diag.row([metric.to_string(), value.to_string()]);
    }
    vec![csv.finish(), diag.finish()]
}

/// Kaplan-Meier curves per definition.
pub fn km_curves(
    result: &EventTimeResult,
    definitions: &[OutcomeDefinition],
) -> Result<Vec<(OutcomeDefinition, KmCurve)>, CliError> {
    definitions
        .iter()
        .map(|&def| {
            kaplan_meier(&result.records(def))
                .map(|c| (def, c))
                .map_err(|source| CliError::EventTime {
                    context: format!("definition `{}`", def.as_str()),
                    source,
                })
        })
        .collect()
}

pub fn km(curves: &[(OutcomeDefinition, KmCurve)]) -> Report {
    let mut csv = Csv::new(
        "km.csv",
        &["definition", "time_days", "survival", "n_risk", "n_event"],
    );
    for (def, curve) in curves {
        for p in &curve.points {
            csv.row([
                def.as_str().to_string(),
                float(p.time),
                float(p.survival),
                p.n_risk.to_string(),
                p.n_event.to_string(),
            ]);
        }
    }
    csv.finish()
}

