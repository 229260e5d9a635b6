use serde::Serialize;

use super::{EventTimeError, SurvivalRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KmPoint {
    pub time: f64,
    pub survival: f64,
    pub n_risk: usize,
    pub n_event: usize,
}

/// Product-limit step function: a point at time 0 followed by one point
/// per distinct event time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KmCurve {
    pub points: Vec<KmPoint>,
}

impl KmCurve {
    /// Right-continuous evaluation: `S(t)` includes the drop at `t`.
    pub fn survival_at(&self, t: f64) -> f64 {
        self.points
            .iter()
            .take_while(|p| p.time <= t)
            .last()
            .map_or(1.0, |p| p.survival)
    }

    pub fn event_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().skip(1).map(|p| p.time)
    }
}

/// Kaplan-Meier estimate. At tied times events are counted before
/// censorings, so subjects censored at `t` are still at risk at `t`.
pub fn kaplan_meier(records: &[SurvivalRecord]) -> Result<KmCurve, EventTimeError> {
    if records.is_empty() {
        return Err(EventTimeError::EmptyCohort);
    }
    if let Some(r) = records.iter().find(|r| !(r.time.is_finite() && r.time >= 0.0)) {
        return Err(EventTimeError::InvalidTime {
            id: r.id.clone(),
            time: r.time,
        });
    }
    let mut sorted: Vec<(f64, bool)> = records.iter().map(|r| (r.time, r.event)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut points = vec![KmPoint {
        time: 0.0,
        survival: 1.0,
        n_risk: sorted.len(),
        n_event: 0,
    }];
    let mut at_risk = sorted.len();
    let mut survival = 1.0;
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        let mut events = 0;
        let mut leaving = 0;
        while i < sorted.len() && sorted[i].0 == t {
            events += sorted[i].1 as usize;
            leaving += 1;
            i += 1;
        }
        if events > 0 {
            survival *= 1.0 - events as f64 / at_risk as f64;
            points.push(KmPoint {
                time: t,
                survival,
                n_risk: at_risk,
                n_event: events,
            });
        }
        at_risk -= leaving;
    }
    Ok(KmCurve { points })
}
