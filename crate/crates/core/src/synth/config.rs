use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::ingest::CohortFilter;
use crate::model::{ProviderSet, ValueType};

fn default_recipients() -> usize {
    1000
}

fn default_providers() -> Vec<String> {
    ProviderSet::default().names().to_vec()
}

fn one() -> usize {
    1
}

/// Generator configuration, stored as TOML. The seed is mandatory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: Option<u64>,
    #[serde(default = "default_recipients")]
    pub n_recipients: usize,
    #[serde(default = "default_providers")]
    pub providers: Vec<String>,
    #[serde(default)]
    pub tables: Vec<SynthTable>,
    #[serde(default)]
    pub groups: Vec<SynthGroup>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub survival: Option<SurvivalSpec>,
    /// Copied into the emitted schema unchanged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cohort: Option<CohortFilter>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthTable {
    pub name: String,
    #[serde(default = "one")]
    pub rows_per_recipient: usize,
    /// When non-empty every row is contributed by one provider drawn with
    /// these weights; other providers' cells in the row stay empty.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub row_providers: BTreeMap<String, f64>,
    pub columns: Vec<SynthColumn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthColumn {
    pub name: String,
    pub provider: String,
    pub values: ValueSpec,
    #[serde(default, skip_serializing_if = "Mechanism::is_none")]
    pub missing: Mechanism,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sentinels: Vec<String>,
    /// Share of observed cells replaced by a sentinel code.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub sentinel_rate: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ValueSpec {
    Categorical {
        levels: Vec<String>,
        /// Uniform when empty.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        weights: Vec<f64>,
    },
    Numeric {
        mean: f64,
        sd: f64,
    },
    /// Uniform integer day offsets in `[min, max]`.
    Date {
        min: i64,
        max: i64,
    },
    /// The row's recipient identifier; never missing.
    RecipientId,
}

impl ValueSpec {
    pub fn value_type(&self) -> ValueType {
        match self {
            ValueSpec::Categorical { .. } => ValueType::Categorical,
            ValueSpec::Numeric { .. } => ValueType::Numeric,
            ValueSpec::Date { .. } => ValueType::RelativeDate,
            ValueSpec::RecipientId => ValueType::Identifier,
        }
    }
}

/// Missingness mechanism of one column.
///
/// The driven mechanisms are coupled: in each row, of the `K` columns
/// driven by the same column, `floor(r K)` plus a Bernoulli draw for the
/// fractional part are blanked, `r` being the rate of the row's level.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mechanism", rename_all = "snake_case", deny_unknown_fields)]
pub enum Mechanism {
    #[default]
    None,
    Mcar {
        rate: f64,
    },
    TypeDriven {
        by: String,
        rates: BTreeMap<String, f64>,
    },
    CenterDriven {
        by: String,
        rates: BTreeMap<String, f64>,
    },
}

impl Mechanism {
    pub fn is_none(&self) -> bool {
        matches!(self, Mechanism::None)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Mechanism::None => "none",
            Mechanism::Mcar { .. } => "mcar",
            Mechanism::TypeDriven { .. } => "type_driven",
            Mechanism::CenterDriven { .. } => "center_driven",
        }
    }

    pub(crate) fn driver(&self) -> Option<(&str, &BTreeMap<String, f64>)> {
        match self {
            Mechanism::TypeDriven { by, rates } | Mechanism::CenterDriven { by, rates } => {
                Some((by.as_str(), rates))
            }
            _ => None,
        }
    }
}

/// One multi-sourced variable: a column `{key}_{provider}` per member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthGroup {
    pub table: String,
    pub key: String,
    /// Numeric or categorical values.
    pub values: ValueSpec,
    /// 1 copies one latent value to every member, 0 draws members independently.
    pub agreement: f64,
    pub members: Vec<SynthGroupMember>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthGroupMember {
    pub provider: String,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub missing_rate: f64,
}

fn recipient_table() -> String {
    "T_Recipient".into()
}
fn transplant_table() -> String {
    "T_Transplantation".into()
}
fn followup_table() -> String {
    "T_FollowUp".into()
}
fn p_one() -> f64 {
    1.0
}
fn p_half() -> f64 {
    0.5
}
fn visit_interval() -> i64 {
    365
}
fn tx_window() -> [i64; 2] {
    [0, 3650]
}
fn censor_window() -> [f64; 2] {
    [1.0, 6.0]
}
fn lag_years() -> f64 {
    0.5
}

/// Recipient, transplantation and follow-up tables with known event and
/// censoring times and provider-specific reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurvivalSpec {
    #[serde(default = "recipient_table")]
    pub recipient_table: String,
    #[serde(default = "transplant_table")]
    pub transplant_table: String,
    #[serde(default = "followup_table")]
    pub followup_table: String,
    /// Exponential rates per year.
    pub death_hazard: f64,
    pub failure_hazard: f64,
    /// End of observation, uniform in years after transplantation.
    #[serde(default = "censor_window")]
    pub censoring_years: [f64; 2],
    /// Transplantation dates, uniform in relative days.
    #[serde(default = "tx_window")]
    pub tx_days: [i64; 2],
    /// Probability that ET reports an observed death or graft failure.
    #[serde(default = "p_one")]
    pub et_event_reporting: f64,
    /// Probability that IQTIG reports an observed death or graft failure.
    #[serde(default = "p_one")]
    pub iqtig_event_reporting: f64,
    /// Probability that the transplantation table carries a last-contact date.
    #[serde(default = "p_one")]
    pub et_lfud_reporting: f64,
    /// The last-contact date lags the true end of follow-up by up to this many years.
    #[serde(default = "lag_years")]
    pub et_lfud_lag_years: f64,
    #[serde(default = "p_half")]
    pub et_visit_reporting: f64,
    #[serde(default = "p_one")]
    pub iqtig_visit_reporting: f64,
    #[serde(default = "visit_interval")]
    pub visit_interval_days: i64,
    /// Share of recipients whose reported last contact is replaced by a
    /// date 1 to 60 days before transplantation.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub implausible_rate: f64,
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> SynthError {
    SynthError::InvalidConfig {
        field: field.into(),
        message: message.into(),
    }
}

fn check_prob(field: String, p: f64) -> Result<(), SynthError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(invalid(field, format!("{p} is not a probability")))
    }
}

fn check_values(field: &str, v: &ValueSpec) -> Result<(), SynthError> {
    match v {
        ValueSpec::Categorical { levels, weights } => {
            if levels.is_empty() || levels.iter().any(String::is_empty) {
                return Err(invalid(field, "levels must be non-empty strings"));
            }
            if levels.iter().collect::<HashSet<_>>().len() != levels.len() {
                return Err(invalid(field, "levels must be distinct"));
            }
            if !weights.is_empty()
                && (weights.len() != levels.len()
                    || weights.iter().any(|&w| !non_negative(w))
                    || weights.iter().sum::<f64>() <= 0.0)
            {
                return Err(invalid(field, "weights must be one non-negative value per level"));
            }
        }
        ValueSpec::Numeric { mean, sd } => {
            if !mean.is_finite() || !(sd.is_finite() && *sd >= 0.0) {
                return Err(invalid(field, "mean must be finite and sd non-negative"));
            }
        }
        ValueSpec::Date { min, max } => {
            if min > max {
                return Err(invalid(field, "min exceeds max"));
            }
        }
        ValueSpec::RecipientId => {}
    }
    Ok(())
}

impl SynthConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, SynthError> {
        let config = Self::from_toml_str_unchecked(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Parses without [`validate`](Self::validate), for callers that adjust
    /// the config (for example supply a seed) before validating it.
    pub fn from_toml_str_unchecked(text: &str) -> Result<Self, SynthError> {
        toml::from_str(text).map_err(|e| SynthError::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("synth config serializes")
    }

    pub fn seed(&self) -> Result<u64, SynthError> {
        self.seed
            .ok_or_else(|| invalid("seed", "a seed is required for reproducible generation"))
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        self.seed()?;
        let providers = ProviderSet::new(self.providers.iter().cloned())
            .map_err(|e| invalid("providers", e.to_string()))?;
        if self.n_recipients == 0 {
            return Err(invalid("n_recipients", "must be positive"));
        }
        let mut tables: HashSet<&str> = HashSet::new();
        let mut columns_by_table: Vec<HashSet<String>> = Vec::new();
        for (t, table) in self.tables.iter().enumerate() {
            let f = |rest: &str| format!("tables[{t}].{rest}");
            if !tables.insert(table.name.as_str()) {
                return Err(invalid(f("name"), format!("duplicate table `{}`", table.name)));
            }
            if table.rows_per_recipient == 0 {
                return Err(invalid(f("rows_per_recipient"), "must be positive"));
            }
            for (p, w) in &table.row_providers {
                if providers.id(p).is_none() {
                    return Err(invalid(f("row_providers"), format!("unknown provider `{p}`")));
                }
                if !non_negative(*w) {
                    return Err(invalid(f("row_providers"), "weights must be non-negative"));
                }
            }
            if !table.row_providers.is_empty() && table.row_providers.values().sum::<f64>() <= 0.0 {
                return Err(invalid(f("row_providers"), "weights must not all be zero"));
            }
            let mut names = HashSet::new();
            for (c, col) in table.columns.iter().enumerate() {
                let f = |rest: &str| format!("tables[{t}].columns[{c}].{rest}");
                if !names.insert(col.name.clone()) {
                    return Err(invalid(f("name"), format!("duplicate column `{}`", col.name)));
                }
                if providers.id(&col.provider).is_none() {
                    return Err(invalid(f("provider"), format!("unknown provider `{}`", col.provider)));
                }
                check_values(&f("values"), &col.values)?;
                check_prob(f("sentinel_rate"), col.sentinel_rate)?;
                if col.sentinel_rate > 0.0 && col.sentinels.is_empty() {
                    return Err(invalid(f("sentinels"), "a sentinel rate needs sentinel codes"));
                }
                if col.sentinels.iter().any(String::is_empty) {
                    return Err(invalid(f("sentinels"), "sentinels must be non-empty strings"));
                }
                match &col.missing {
                    Mechanism::None => {}
                    Mechanism::Mcar { rate } => check_prob(f("missing.rate"), *rate)?,
                    Mechanism::TypeDriven { by, rates } | Mechanism::CenterDriven { by, rates } => {
                        let Some(driver) = table.columns.iter().find(|d| &d.name == by) else {
                            return Err(invalid(f("missing.by"), format!("unknown column `{by}`")));
                        };
                        let ValueSpec::Categorical { levels, .. } = &driver.values else {
                            return Err(invalid(f("missing.by"), "driving column must be categorical"));
                        };
                        if driver.missing.driver().is_some() || by == &col.name {
                            return Err(invalid(f("missing.by"), "driving column must not be driven itself"));
                        }
                        for (level, r) in rates {
                            if !levels.contains(level) {
                                return Err(invalid(f("missing.rates"), format!("unknown level `{level}`")));
                            }
                            check_prob(f(&format!("missing.rates.{level}")), *r)?;
                        }
                    }
                }
            }
            columns_by_table.push(names);
        }
        for (g, group) in self.groups.iter().enumerate() {
            let f = |rest: &str| format!("groups[{g}].{rest}");
            let Some(t) = self.tables.iter().position(|t| t.name == group.table) else {
                return Err(invalid(f("table"), format!("unknown table `{}`", group.table)));
            };
            if group.key.is_empty() {
                return Err(invalid(f("key"), "must not be empty"));
            }
            if !matches!(group.values, ValueSpec::Numeric { .. } | ValueSpec::Categorical { .. }) {
                return Err(invalid(f("values"), "groups hold numeric or categorical values"));
            }
            check_values(&f("values"), &group.values)?;
            check_prob(f("agreement"), group.agreement)?;
            if group.members.len() < 2 {
                return Err(invalid(f("members"), "a group needs at least two providers"));
            }
            let mut seen = HashSet::new();
            for (m, member) in group.members.iter().enumerate() {
                if providers.id(&member.provider).is_none() {
                    return Err(invalid(
                        f(&format!("members[{m}].provider")),
                        format!("unknown provider `{}`", member.provider),
                    ));
                }
                if !seen.insert(member.provider.as_str()) {
                    return Err(invalid(f(&format!("members[{m}].provider")), "duplicate provider"));
                }
                check_prob(f(&format!("members[{m}].missing_rate")), member.missing_rate)?;
                let name = format!("{}_{}", group.key, member.provider);
                if !columns_by_table[t].insert(name.clone()) {
                    return Err(invalid(f("key"), format!("column `{name}` already exists")));
                }
            }
        }
        if let Some(s) = &self.survival {
            for p in ["ET", "IQTIG"] {
                if providers.id(p).is_none() {
                    return Err(invalid("survival", format!("survival tables need provider `{p}`")));
                }
            }
            for (field, name) in [
                ("survival.recipient_table", &s.recipient_table),
                ("survival.transplant_table", &s.transplant_table),
                ("survival.followup_table", &s.followup_table),
            ] {
                if !tables.insert(name.as_str()) {
                    return Err(invalid(field, format!("table `{name}` already exists")));
                }
            }
            if !positive(s.death_hazard) || !positive(s.failure_hazard) {
                return Err(invalid("survival.death_hazard", "hazards must be positive"));
            }
            let [c0, c1] = s.censoring_years;
            if !(c0 > 0.0 && c0 <= c1 && c1.is_finite()) {
                return Err(invalid("survival.censoring_years", "need 0 < min <= max"));
            }
            if s.tx_days[0] > s.tx_days[1] {
                return Err(invalid("survival.tx_days", "min exceeds max"));
            }
            if s.visit_interval_days <= 0 {
                return Err(invalid("survival.visit_interval_days", "must be positive"));
            }
            if !non_negative(s.et_lfud_lag_years) {
                return Err(invalid("survival.et_lfud_lag_years", "must be non-negative"));
            }
            for (field, p) in [
                ("et_event_reporting", s.et_event_reporting),
                ("iqtig_event_reporting", s.iqtig_event_reporting),
                ("et_lfud_reporting", s.et_lfud_reporting),
                ("et_visit_reporting", s.et_visit_reporting),
                ("iqtig_visit_reporting", s.iqtig_visit_reporting),
                ("implausible_rate", s.implausible_rate),
            ] {
                check_prob(format!("survival.{field}"), p)?;
            }
        }
        Ok(())
    }
}

/// False for NaN as well as negative values.
fn non_negative(x: f64) -> bool {
    x >= 0.0
}

/// False for NaN as well as non-positive values.
fn positive(x: f64) -> bool {
    x > 0.0
}
