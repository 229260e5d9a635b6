//! Generator behaviour checked against its own ledger and against the
//! ingest, missingness, consistency and event-time code that consumes it.

use std::fs;

use regida_core::consistency::{consistency_report, Association};
use regida_core::eventtime::{derive_cohort, OutcomeDefinition};
use regida_core::ingest::{discover_multisource_groups, load_bundle, SchemaConfig};
use regida_core::missingness::proportion_missing;
use regida_core::synth::{generate, write_bundle, SynthConfig};

fn config(text: &str) -> SynthConfig {
    SynthConfig::from_toml_str(text).expect("valid synth config")
}

const MIXED: &str = r#"
seed = 7
n_recipients = 300

[[tables]]
name = "T_Visit"
rows_per_recipient = 2
row_providers = { ET = 0.6, IQTIG = 0.4 }
columns = [
  { name = "RecipID", provider = "ET", values = { kind = "recipient_id" } },
  { name = "Type", provider = "ET", values = { kind = "categorical", levels = ["A", "B"] } },
  { name = "w_et", provider = "ET", values = { kind = "numeric", mean = 1.0, sd = 2.0 }, missing = { mechanism = "type_driven", by = "Type", rates = { A = 0.2, B = 0.6 } } },
  { name = "d_iqtig", provider = "IQTIG", values = { kind = "date", min = 0, max = 100 }, missing = { mechanism = "mcar", rate = 0.1 }, sentinels = ["-9"], sentinel_rate = 0.05 },
]

[[groups]]
table = "T_Visit"
key = "bmi"
values = { kind = "numeric", mean = 25.0, sd = 4.0 }
agreement = 0.8
members = [{ provider = "ET" }, { provider = "IQTIG", missing_rate = 0.2 }]

[survival]
death_hazard = 0.1
failure_hazard = 0.1
implausible_rate = 0.05
"#;

#[test]
fn bundles_are_reproducible_byte_for_byte() {
    let c = config(MIXED);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let wa = write_bundle(&c, a.path()).unwrap();
    write_bundle(&c, b.path()).unwrap();
    let mut names: Vec<_> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), wa.tables.len() + 2);
    for name in names {
        assert_eq!(
            fs::read(a.path().join(&name)).unwrap(),
            fs::read(b.path().join(&name)).unwrap(),
            "{name:?}"
        );
    }

    let other = SynthConfig { seed: Some(8), ..c };
    let d = tempfile::tempdir().unwrap();
    write_bundle(&other, d.path()).unwrap();
    assert_ne!(
        fs::read(a.path().join("T_Visit.csv")).unwrap(),
        fs::read(d.path().join("T_Visit.csv")).unwrap()
    );
}

#[test]
fn written_bundle_loads_like_the_in_memory_one() {
    let c = config(MIXED);
    let dir = tempfile::tempdir().unwrap();
    let written = write_bundle(&c, dir.path()).unwrap();
    let schema = SchemaConfig::from_path(&written.schema).unwrap();
    let from_disk = load_bundle(&schema).unwrap();
    let in_memory = generate(&c).unwrap();
    assert_eq!(from_disk, in_memory.load().unwrap());
    assert_eq!(
        schema.tables.iter().map(|t| &t.name).collect::<Vec<_>>(),
        ["T_Visit", "T_Recipient", "T_Transplantation", "T_FollowUp"]
    );
    assert!(schema.eventtime.is_some());
    for (name, _, rows) in &written.tables {
        assert_eq!(from_disk.table(name).unwrap().n_rows(), *rows);
    }
}

#[test]
fn ledger_counts_match_the_generated_cells() {
    let b = generate(&config(MIXED)).unwrap();
    let loaded = b.load().unwrap();
    for truth in &b.ledger.columns {
        let t = loaded.table(&truth.table).unwrap();
        let j = t.column_index(&truth.column).unwrap();
        let missing = (0..t.n_rows()).filter(|&i| t.is_missing(i, j)).count();
        assert_eq!(truth.n_rows, t.n_rows(), "{}", truth.column);
        assert_eq!(truth.n_missing, missing, "{}", truth.column);
    }
}

#[test]
fn row_providers_leave_other_providers_blank() {
    let b = generate(&config(MIXED)).unwrap();
    let t = b.table("T_Visit").unwrap();
    let col = |name: &str| t.columns.iter().position(|c| c.name == name).unwrap();
    let (w, d) = (col("w_et"), col("d_iqtig"));
    let (type_col, id) = (col("Type"), col("RecipID"));
    assert_eq!(t.n_rows(), 600);
    for i in 0..t.n_rows() {
        assert!(t.cells[w][i].is_empty() || t.cells[d][i].is_empty(), "row {i}");
        assert!(!t.cells[id][i].is_empty());
        // the row's contributing provider is visible in the always-observed ET column
        if t.cells[type_col][i].is_empty() {
            assert!(t.cells[w][i].is_empty());
        }
    }
}

fn single_column(mechanism: &str, n: usize, levels: &str) -> SynthConfig {
    config(&format!(
        r#"
seed = 11
n_recipients = {n}
[[tables]]
name = "T"
columns = [
  {{ name = "Type", provider = "ET", values = {{ kind = "categorical", levels = [{levels}] }} }},
  {{ name = "x1", provider = "ET", values = {{ kind = "numeric", mean = 0.0, sd = 1.0 }}, missing = {mechanism} }},
  {{ name = "x2", provider = "ET", values = {{ kind = "numeric", mean = 0.0, sd = 1.0 }}, missing = {mechanism} }},
  {{ name = "x3", provider = "ET", values = {{ kind = "numeric", mean = 0.0, sd = 1.0 }}, missing = {mechanism} }},
]
"#
    ))
}

#[test]
fn mcar_rate_is_recovered() {
    let c = single_column(r#"{ mechanism = "mcar", rate = 0.3 }"#, 10_000, r#""A""#);
    let bundle = generate(&c).unwrap().load().unwrap();
    let t = bundle.table("T").unwrap();
    for j in 1..4 {
        let pm = proportion_missing(t, j).unwrap();
        assert!((0.28..=0.32).contains(&pm), "column {j}: {pm}");
    }
}

#[test]
fn type_driven_rates_are_recovered_per_level() {
    let c = single_column(
        r#"{ mechanism = "type_driven", by = "Type", rates = { A = 0.1, B = 0.7 } }"#,
        5000,
        r#""A", "B""#,
    );
    let bundle = generate(&c).unwrap().load().unwrap();
    let t = bundle.table("T").unwrap();
    for level in ["A", "B"] {
        let rows: Vec<usize> = (0..t.n_rows()).filter(|&i| t.column(0).text(i) == level).collect();
        let missing: usize = rows.iter().map(|&i| (1..4).filter(|&j| t.is_missing(i, j)).count()).sum();
        let rate = missing as f64 / (3 * rows.len()) as f64;
        let target = if level == "A" { 0.1 } else { 0.7 };
        assert!((rate - target).abs() <= 0.05, "{level}: {rate}");
        // coupled draws: every row blanks floor(3r) or floor(3r) + 1 columns
        let floor = (3.0 * target) as usize;
        for &i in &rows {
            let k = (1..4).filter(|&j| t.is_missing(i, j)).count();
            assert!(k == floor || k == floor + 1, "{level} row {i}: {k}");
        }
    }
}

fn group_config(kind: &str, agreement: f64) -> SynthConfig {
    let values = if kind == "numeric" {
        r#"{ kind = "numeric", mean = 10.0, sd = 3.0 }"#
    } else {
        r#"{ kind = "categorical", levels = ["a", "b", "c", "d"] }"#
    };
    config(&format!(
        r#"
seed = 3
n_recipients = 10000
[[tables]]
name = "T"
columns = [{{ name = "RecipID", provider = "ET", values = {{ kind = "recipient_id" }} }}]
[[groups]]
table = "T"
key = "g"
values = {values}
agreement = {agreement:?}
members = [{{ provider = "ET" }}, {{ provider = "DSO" }}]
"#
    ))
}

fn group_association(c: &SynthConfig) -> f64 {
    let dir = tempfile::tempdir().unwrap();
    let written = write_bundle(c, dir.path()).unwrap();
    let schema = SchemaConfig::from_path(&written.schema).unwrap();
    let bundle = load_bundle(&schema).unwrap();
    let groups = discover_multisource_groups(&schema).unwrap();
    assert_eq!(groups.len(), 1);
    let report = consistency_report(&bundle, &groups);
    match &report.associations[..] {
        [pair] => match pair.association {
            Association::Computed { value, .. } => value,
            ref other => panic!("not computable: {other:?}"),
        },
        other => panic!("expected one pair, got {}", other.len()),
    }
}

#[test]
fn agreement_controls_cross_provider_association() {
    for kind in ["numeric", "categorical"] {
        let full = group_association(&group_config(kind, 1.0));
        assert!((full - 1.0).abs() < 1e-9, "{kind} agreement 1: {full}");
        let none = group_association(&group_config(kind, 0.0));
        assert!(none < 0.1, "{kind} agreement 0: {none}");
        let half = group_association(&group_config(kind, 0.5));
        assert!(none < half && half < full, "{kind} agreement 0.5: {half}");
    }
}

const SURVIVAL: &str = r#"
seed = 21
n_recipients = 2000
[survival]
death_hazard = 0.08
failure_hazard = 0.1
censoring_years = [1.0, 6.0]
et_event_reporting = 1.0
iqtig_event_reporting = 1.0
et_lfud_reporting = 1.0
et_lfud_lag_years = 0.0
"#;

#[test]
fn complete_reporting_recovers_the_true_outcomes() {
    let c = config(SURVIVAL);
    let b = generate(&c).unwrap();
    let bundle = b.load().unwrap();
    let et = b.schema.eventtime.clone().unwrap();
    let result = derive_cohort(&bundle, &et, &OutcomeDefinition::ALL).unwrap();
    assert_eq!(result.diagnostics.excluded_implausible, 0);
    assert_eq!(result.retained.len(), 2000);
    for def in OutcomeDefinition::ALL {
        let records = result.records(def);
        let mut checked = 0;
        for truth in &b.ledger.recipients {
            let r = records.iter().find(|r| r.id == truth.id);
            let end = match (truth.event_day(), def) {
                (Some(d), _) => Some(d),
                // last contact is reported at the true end of observation
                (None, OutcomeDefinition::Et | OutcomeDefinition::Combined) => Some(truth.censor_day),
                // the latest yearly visit strictly before the end of observation
                (None, OutcomeDefinition::Iqtig) => {
                    Some((truth.censor_day - 1) / 365 * 365).filter(|&d| d > 0)
                }
            };
            let expected = end.map(|d| {
                let t = d.min(et.horizon_days);
                (t as f64, truth.event_day() == Some(d) && d <= et.horizon_days)
            });
            assert_eq!(r.map(|r| (r.time, r.event)), expected, "{def:?} {}", truth.id);
            checked += 1;
        }
        assert_eq!(checked, 2000);
        if def != OutcomeDefinition::Iqtig {
            assert_eq!(records.len(), 2000);
        }
    }
}

#[test]
fn combined_definition_keeps_bounded_single_source_events() {
    let mut c = config(SURVIVAL);
    let s = c.survival.as_mut().unwrap();
    s.et_event_reporting = 0.6;
    s.iqtig_event_reporting = 0.5;
    s.et_lfud_reporting = 0.4;
    s.implausible_rate = 0.02;
    let b = generate(&c).unwrap();
    let et = b.schema.eventtime.clone().unwrap();
    let result = derive_cohort(&b.load().unwrap(), &et, &OutcomeDefinition::ALL).unwrap();
    assert!(result.diagnostics.excluded_implausible > 0);
    let combined = result.records(OutcomeDefinition::Combined);
    for def in [OutcomeDefinition::Et, OutcomeDefinition::Iqtig] {
        for r in result.records(def).iter().filter(|r| r.event) {
            // an event is only guaranteed to survive pooling when the
            // source's own last contact bounds it from above
            let dates = result.retained.iter().find(|d| d.id == r.id).unwrap();
            if def.sources(dates).2.is_none() {
                continue;
            }
            let c = combined.iter().find(|c| c.id == r.id).unwrap();
            assert!(c.event && c.time <= r.time, "{def:?} {}", r.id);
        }
    }
    // injected last contacts lie 1 to 60 days before transplantation: those
    // more than 30 days early exclude the recipient, the rest are recoded
    let injected: Vec<i64> = b.ledger.recipients.iter().filter_map(|t| t.implausible_day).collect();
    let far = injected.iter().filter(|&&d| d < -30).count();
    assert!(far > 0 && far < injected.len());
    assert_eq!(result.diagnostics.excluded_implausible, far);
    assert!(result.diagnostics.recoded_dates >= injected.len() - far);
}
