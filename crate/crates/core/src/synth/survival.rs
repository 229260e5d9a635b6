use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use super::config::SurvivalSpec;
use super::generate::recipient_id;
use super::GeneratedTable;
use crate::eventtime::EventTimeConfig;
use crate::ingest::ColumnDecl;
use crate::model::ValueType;

const YEAR_DAYS: f64 = 365.25;

/// True event history of one recipient; days are relative to transplantation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecipientTruth {
    pub id: String,
    pub tx_date: i64,
    /// End of observation.
    pub censor_day: i64,
    /// Death before the end of observation.
    pub death_day: Option<i64>,
    /// Graft failure before death and before the end of observation.
    pub failure_day: Option<i64>,
    pub et_reports_death: bool,
    pub et_reports_failure: bool,
    pub iqtig_reports_death: bool,
    pub iqtig_reports_failure: bool,
    /// Reported last-contact date, relative to transplantation.
    pub et_lfud_day: Option<i64>,
    /// Injected implausible last-contact day (before transplantation), if any.
    pub implausible_day: Option<i64>,
}

impl RecipientTruth {
    /// Earliest of death and graft failure.
    pub fn event_day(&self) -> Option<i64> {
        match (self.death_day, self.failure_day) {
            (Some(d), Some(f)) => Some(d.min(f)),
            (d, f) => d.or(f),
        }
    }
}

struct Columns {
    decls: Vec<ColumnDecl>,
    cells: Vec<Vec<String>>,
}

impl Columns {
    fn new(spec: &[(&str, &str, ValueType)]) -> Self {
        Self {
            decls: spec.iter().map(|(n, p, t)| ColumnDecl::new(*n, *p, *t)).collect(),
            cells: vec![Vec::new(); spec.len()],
        }
    }

    fn push(&mut self, row: Vec<Option<String>>) {
        for (c, v) in self.cells.iter_mut().zip(row) {
            c.push(v.unwrap_or_default());
        }
    }

    fn finish(self, name: &str) -> GeneratedTable {
        GeneratedTable {
            name: name.to_string(),
            columns: self.decls,
            cells: self.cells,
        }
    }
}

fn years_to_days(y: f64) -> i64 {
    (y * YEAR_DAYS).round() as i64
}

pub(crate) fn eventtime_config(spec: &SurvivalSpec) -> EventTimeConfig {
    EventTimeConfig {
        transplant_table: spec.transplant_table.clone(),
        transplant_recipient_id: "RecipID".into(),
        tx_date: "TxDate".into(),
        reported_lfud: "LastContact_ET".into(),
        et_failure_date: "GraftFailureDate_ET".into(),
        recipient_table: spec.recipient_table.clone(),
        recipient_id: "RecipID".into(),
        et_death_date: "DeathDate_ET".into(),
        followup_table: spec.followup_table.clone(),
        followup_recipient_ids: vec!["RecipID_ET".into(), "RecipID_IQTIG".into()],
        followup_dates: vec!["Date_ET".into(), "Date_IQTIG".into()],
        iqtig_death_date: "DeathDate_IQTIG".into(),
        iqtig_failure_date: "FailureDate_IQTIG".into(),
        horizon_days: crate::eventtime::HORIZON_3Y_DAYS,
    }
}

/// Recipient, transplantation and follow-up tables plus the truth ledger.
pub(crate) fn generate_survival(
    spec: &SurvivalSpec,
    n_recipients: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<GeneratedTable>, Vec<RecipientTruth>) {
    use ValueType::{Identifier, RelativeDate};
    let mut recipients = Columns::new(&[("RecipID", "ET", Identifier), ("DeathDate_ET", "ET", RelativeDate)]);
    let mut transplants = Columns::new(&[
        ("RecipID", "ET", Identifier),
        ("TxDate", "ET", RelativeDate),
        ("LastContact_ET", "ET", RelativeDate),
        ("GraftFailureDate_ET", "ET", RelativeDate),
    ]);
    let mut followups = Columns::new(&[
        ("RecipID_ET", "ET", Identifier),
        ("RecipID_IQTIG", "IQTIG", Identifier),
        ("Date_ET", "ET", RelativeDate),
        ("Date_IQTIG", "IQTIG", RelativeDate),
        ("DeathDate_IQTIG", "IQTIG", RelativeDate),
        ("FailureDate_IQTIG", "IQTIG", RelativeDate),
    ]);
    let death = Exp::new(spec.death_hazard).expect("validated hazard");
    let failure = Exp::new(spec.failure_hazard).expect("validated hazard");
    let mut truths = Vec::with_capacity(n_recipients);
    let day = |tx: i64, d: i64| Some((tx + d).to_string());

    for r in 0..n_recipients {
        let id = recipient_id(r);
        let tx = rng.random_range(spec.tx_days[0]..=spec.tx_days[1]);
        let td = years_to_days(death.sample(rng)).max(1);
        let tg = years_to_days(failure.sample(rng)).max(1);
        let c = years_to_days(rng.random_range(spec.censoring_years[0]..=spec.censoring_years[1])).max(1);
        let death_day = (td < c).then_some(td);
        let failure_day = (tg < c && tg < td).then_some(tg);
        let alive_until = death_day.unwrap_or(c);

        let mut t = RecipientTruth {
            id: id.clone(),
            tx_date: tx,
            censor_day: c,
            death_day,
            failure_day,
            et_reports_death: death_day.is_some() && rng.random::<f64>() < spec.et_event_reporting,
            et_reports_failure: failure_day.is_some() && rng.random::<f64>() < spec.et_event_reporting,
            iqtig_reports_death: death_day.is_some() && rng.random::<f64>() < spec.iqtig_event_reporting,
            iqtig_reports_failure: failure_day.is_some()
                && rng.random::<f64>() < spec.iqtig_event_reporting,
            et_lfud_day: None,
            implausible_day: None,
        };
        if rng.random::<f64>() < spec.et_lfud_reporting {
            let lag = years_to_days(rng.random::<f64>() * spec.et_lfud_lag_years);
            t.et_lfud_day = Some((alive_until - lag).max(0));
        }
        if spec.implausible_rate > 0.0 && rng.random::<f64>() < spec.implausible_rate {
            // the reported last contact is replaced by a date before transplantation
            let bad = -rng.random_range(1..=60);
            t.implausible_day = Some(bad);
            t.et_lfud_day = Some(bad);
        }

        recipients.push(vec![Some(id.clone()), t.death_day.filter(|_| t.et_reports_death).and_then(|d| day(tx, d))]);
        transplants.push(vec![
            Some(id.clone()),
            Some(tx.to_string()),
            t.et_lfud_day.and_then(|d| day(tx, d)),
            t.failure_day.filter(|_| t.et_reports_failure).and_then(|d| day(tx, d)),
        ]);

        let mut visit = spec.visit_interval_days;
        while visit < alive_until {
            if rng.random::<f64>() < spec.et_visit_reporting {
                followups.push(vec![Some(id.clone()), None, day(tx, visit), None, None, None]);
            }
            if rng.random::<f64>() < spec.iqtig_visit_reporting {
                followups.push(vec![None, Some(id.clone()), None, day(tx, visit), None, None]);
            }
            visit += spec.visit_interval_days;
        }
        if let (Some(f), true) = (t.failure_day, t.iqtig_reports_failure) {
            followups.push(vec![None, Some(id.clone()), None, day(tx, f), None, day(tx, f)]);
        }
        if let (Some(d), true) = (t.death_day, t.iqtig_reports_death) {
            followups.push(vec![None, Some(id.clone()), None, day(tx, d), day(tx, d), None]);
        }
        truths.push(t);
    }
    let tables = vec![
        recipients.finish(&spec.recipient_table),
        transplants.finish(&spec.transplant_table),
        followups.finish(&spec.followup_table),
    ];
    (tables, truths)
}
