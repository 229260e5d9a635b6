use serde::Serialize;

/// Days from the undisclosed reference date.
pub type Day = i64;

/// 1 year = 365.25 days, truncated to whole days.
pub const HORIZON_3Y_DAYS: Day = 1095;
pub const IMPLAUSIBLE_AFTER_DAYS: Day = 5478;
pub const RECODE_WINDOW_DAYS: Day = 30;

/// Event and follow-up dates of one recipient as reported by each source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecipientDates {
    pub id: String,
    pub tx_date: Day,
    /// Last-contact date from the transplantation table.
    pub reported_lfud: Option<Day>,
    /// Latest follow-up date over all reporting providers.
    pub derived_lfud: Option<Day>,
    pub et_dd: Option<Day>,
    pub iqtig_dd: Option<Day>,
    pub et_gfd: Option<Day>,
    pub iqtig_gfd: Option<Day>,
}

impl RecipientDates {
    pub fn new(id: impl Into<String>, tx_date: Day) -> Self {
        Self {
            id: id.into(),
            tx_date,
            reported_lfud: None,
            derived_lfud: None,
            et_dd: None,
            iqtig_dd: None,
            et_gfd: None,
            iqtig_gfd: None,
        }
    }

    fn fields_mut(&mut self) -> [&mut Option<Day>; 6] {
        [
            &mut self.reported_lfud,
            &mut self.derived_lfud,
            &mut self.et_dd,
            &mut self.iqtig_dd,
            &mut self.et_gfd,
            &mut self.iqtig_gfd,
        ]
    }

    pub fn fields(&self) -> [Option<Day>; 6] {
        [
            self.reported_lfud,
            self.derived_lfud,
            self.et_dd,
            self.iqtig_dd,
            self.et_gfd,
            self.iqtig_gfd,
        ]
    }
}

/// `(reported, derived)` last follow-up dates.
pub fn derive_lfud(reported: Option<Day>, followup_dates: &[Day]) -> (Option<Day>, Option<Day>) {
    (reported, followup_dates.iter().copied().max())
}

/// `(et, iqtig)` death dates; the earliest follow-up report wins.
pub fn derive_death_dates(et_reported: Option<Day>, followup_deaths: &[Day]) -> (Option<Day>, Option<Day>) {
    (et_reported, followup_deaths.iter().copied().min())
}

/// `(et, iqtig)` graft failure dates; the earliest follow-up report wins.
pub fn derive_gfd(et_reported: Option<Day>, followup_failures: &[Day]) -> (Option<Day>, Option<Day>) {
    (et_reported, followup_failures.iter().copied().min())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Disposition {
    Retained { recoded: usize, nulled: usize },
    ExcludeRecipient,
}

/// Cleans one recipient's dates, rules applied in this order:
///
/// 1. any date more than 30 days before transplantation excludes the recipient;
/// 2. dates in `[tx - 30, tx)` are recoded to `tx`;
/// 3. dates 15 years (5478 days) or more after `tx` become absent.
pub fn apply_plausibility(dates: &RecipientDates) -> (RecipientDates, Disposition) {
    let tx = dates.tx_date;
    if dates
        .fields()
        .iter()
        .flatten()
        .any(|&d| d < tx - RECODE_WINDOW_DAYS)
    {
        return (dates.clone(), Disposition::ExcludeRecipient);
    }
    let mut cleaned = dates.clone();
    let mut recoded = 0;
    let mut nulled = 0;
    for field in cleaned.fields_mut() {
        if let Some(d) = *field {
            if d < tx {
                *field = Some(tx);
                recoded += 1;
            } else if d - tx >= IMPLAUSIBLE_AFTER_DAYS {
                *field = None;
                nulled += 1;
            }
        }
    }
    (cleaned, Disposition::Retained { recoded, nulled })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeDefinition {
    Et,
    Iqtig,
    Combined,
}

impl OutcomeDefinition {
    pub const ALL: [OutcomeDefinition; 3] = [
        OutcomeDefinition::Et,
        OutcomeDefinition::Iqtig,
        OutcomeDefinition::Combined,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeDefinition::Et => "et",
            OutcomeDefinition::Iqtig => "iqtig",
            OutcomeDefinition::Combined => "combined",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.as_str().eq_ignore_ascii_case(s))
    }

    /// `(death, graft failure, last follow-up)` dates under this definition.
    pub fn sources(self, d: &RecipientDates) -> (Option<Day>, Option<Day>, Option<Day>) {
        match self {
            OutcomeDefinition::Et => (d.et_dd, d.et_gfd, d.reported_lfud),
            OutcomeDefinition::Iqtig => (d.iqtig_dd, d.iqtig_gfd, d.derived_lfud),
            OutcomeDefinition::Combined => (
                min_present(d.et_dd, d.iqtig_dd),
                min_present(d.et_gfd, d.iqtig_gfd),
                max_present(d.reported_lfud, d.derived_lfud),
            ),
        }
    }
}

fn min_present(a: Option<Day>, b: Option<Day>) -> Option<Day> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

fn max_present(a: Option<Day>, b: Option<Day>) -> Option<Day> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a.max(b)),
        (a, b) => a.or(b),
    }
}

/// Time to composite outcome or censoring.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalRecord {
    pub id: String,
    /// Days since transplantation.
    pub time: f64,
    pub event: bool,
}

impl SurvivalRecord {
    pub fn new(id: impl Into<String>, time: f64, event: bool) -> Self {
        Self {
            id: id.into(),
            time,
            event,
        }
    }
}

/// Builds `T = min(T_D, T_G, T_F, horizon)` over the present dates and
/// `delta = 1` iff `T` equals the earliest present event date. `None` when
/// all three source dates are absent.
pub fn assemble_outcome(
    dates: &RecipientDates,
    definition: OutcomeDefinition,
    horizon_days: Day,
) -> Option<SurvivalRecord> {
    let (death, failure, followup) = definition.sources(dates);
    if death.is_none() && failure.is_none() && followup.is_none() {
        return None;
    }
    let rel = |d: Option<Day>| d.map(|d| d - dates.tx_date);
    let event = min_present(rel(death), rel(failure));
    let t = [event, rel(followup), Some(horizon_days)]
        .into_iter()
        .flatten()
        .min()
        .expect("horizon is always present");
    Some(SurvivalRecord {
        id: dates.id.clone(),
        time: t as f64,
        event: event == Some(t),
    })
}
