use std::collections::BTreeMap;

use super::config::{
    Mechanism, SurvivalSpec, SynthColumn, SynthConfig, SynthGroup, SynthGroupMember, SynthTable,
    ValueSpec,
};

const TABLES: [&str; 22] = [
    "T_Donor",
    "T_Organ",
    "T_Recipient_Virology",
    "T_Recipient_Lab",
    "T_Waitlist",
    "T_Allocation",
    "T_Procurement",
    "T_Donor_Lab",
    "T_Donor_Virology",
    "T_Hospitalisation",
    "T_Immunosuppression",
    "T_Rejection",
    "T_Biopsy",
    "T_Dialysis",
    "T_Complications",
    "T_Medication",
    "T_Center",
    "T_HLA",
    "T_Crossmatch",
    "T_Discharge",
    "T_Outpatient",
    "T_Readmission",
];

const AGREEMENTS: [f64; 6] = [1.0, 0.95, 0.9, 0.7, 0.3, 0.0];

fn levels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn column(name: String, provider: &str, values: ValueSpec, missing: Mechanism) -> SynthColumn {
    SynthColumn {
        name,
        provider: provider.to_string(),
        values,
        missing,
        sentinels: Vec::new(),
        sentinel_rate: 0.0,
    }
}

/// A bundle at registry scale: 15,000 recipients, 25 tables (22 generic
/// plus recipient, transplantation and follow-up) and 168 multi-sourced
/// variables. ET columns depend on an observation-type column, DSO columns
/// on a center column, IQTIG columns are MCAR; every third table mixes
/// rows contributed by ET and IQTIG.
pub fn registry_like(seed: u64) -> SynthConfig {
    let type_rates: BTreeMap<String, f64> =
        [("A", 0.05), ("B", 0.4), ("C", 0.8)].map(|(k, v)| (k.to_string(), v)).into();
    let center_rates: BTreeMap<String, f64> = levels("C", 8)
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, 0.05 + 0.1 * i as f64))
        .collect();

    let mut tables = Vec::new();
    let mut groups = Vec::new();
    for (t, name) in TABLES.iter().enumerate() {
        let mut columns = vec![
            column("RecipID".into(), "ET", ValueSpec::RecipientId, Mechanism::None),
            column(
                "Type".into(),
                "ET",
                ValueSpec::Categorical {
                    levels: ["A", "B", "C"].map(String::from).to_vec(),
                    weights: vec![0.5, 0.3, 0.2],
                },
                Mechanism::None,
            ),
            column(
                "Center".into(),
                "DSO",
                ValueSpec::Categorical {
                    levels: levels("C", 8),
                    weights: Vec::new(),
                },
                Mechanism::None,
            ),
        ];
        for (provider, missing) in [
            (
                "ET",
                Mechanism::TypeDriven {
                    by: "Type".into(),
                    rates: type_rates.clone(),
                },
            ),
            (
                "DSO",
                Mechanism::CenterDriven {
                    by: "Center".into(),
                    rates: center_rates.clone(),
                },
            ),
            ("IQTIG", Mechanism::Mcar { rate: 0.2 }),
        ] {
            let p = provider.to_lowercase();
            columns.push(column(
                format!("num1_{p}"),
                provider,
                ValueSpec::Numeric { mean: 50.0, sd: 10.0 },
                missing.clone(),
            ));
            columns.push(column(
                format!("num2_{p}"),
                provider,
                ValueSpec::Numeric { mean: 1.0, sd: 0.2 },
                missing.clone(),
            ));
            columns.push(column(
                format!("date_{p}"),
                provider,
                ValueSpec::Date { min: 0, max: 5000 },
                missing.clone(),
            ));
            let mut cat = column(
                format!("cat_{p}"),
                provider,
                ValueSpec::Categorical {
                    levels: levels("L", 5),
                    weights: Vec::new(),
                },
                missing,
            );
            cat.sentinels = vec!["-9".into()];
            cat.sentinel_rate = 0.02;
            columns.push(cat);
        }
        let row_providers = if t % 3 == 2 {
            [("ET".to_string(), 0.5), ("IQTIG".to_string(), 0.5)].into()
        } else {
            BTreeMap::new()
        };
        tables.push(SynthTable {
            name: name.to_string(),
            rows_per_recipient: if t % 4 == 3 { 2 } else { 1 },
            row_providers,
            columns,
        });

        let n_groups = if t < 168 % TABLES.len() { 8 } else { 7 };
        for j in 0..n_groups {
            let providers: &[&str] = match j % 3 {
                0 => &["ET", "DSO", "IQTIG"],
                1 => &["ET", "IQTIG"],
                _ => &["DSO", "IQTIG"],
            };
            let values = if j % 2 == 0 {
                ValueSpec::Numeric { mean: 100.0, sd: 15.0 }
            } else {
                ValueSpec::Categorical {
                    levels: levels("V", 4),
                    weights: Vec::new(),
                }
            };
            groups.push(SynthGroup {
                table: name.to_string(),
                key: format!("mv{j}"),
                values,
                agreement: AGREEMENTS[(t + j) % AGREEMENTS.len()],
                members: providers
                    .iter()
                    .enumerate()
                    .map(|(k, p)| SynthGroupMember {
                        provider: p.to_string(),
                        missing_rate: 0.1 * (k + 1) as f64,
                    })
                    .collect(),
            });
        }
    }

    SynthConfig {
        seed: Some(seed),
        n_recipients: 15_000,
        providers: vec!["ET".into(), "DSO".into(), "IQTIG".into()],
        tables,
        groups,
        survival: Some(SurvivalSpec {
            recipient_table: "T_Recipient".into(),
            transplant_table: "T_Transplantation".into(),
            followup_table: "T_FollowUp".into(),
            death_hazard: 0.05,
            failure_hazard: 0.06,
            censoring_years: [1.0, 8.0],
            tx_days: [0, 3650],
            et_event_reporting: 0.95,
            iqtig_event_reporting: 0.85,
            et_lfud_reporting: 0.9,
            et_lfud_lag_years: 0.5,
            et_visit_reporting: 0.5,
            iqtig_visit_reporting: 0.9,
            visit_interval_days: 365,
            implausible_rate: 0.01,
        }),
        cohort: None,
    }
}
