//! Product-limit survival evaluated directly at a time point.

/// `S(t)` for `(time, event)` records: the product over distinct event
/// times `s <= t` of `1 - d(s) / n(s)`, with `n(s)` counting every record
/// whose time is at least `s`.
pub fn survival_at(records: &[(f64, bool)], t: f64) -> f64 {
    let mut times: Vec<f64> = records.iter().filter(|r| r.1 && r.0 <= t).map(|r| r.0).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
        .iter()
        .map(|&s| {
            let d = records.iter().filter(|r| r.1 && r.0 == s).count() as f64;
            let n = records.iter().filter(|r| r.0 >= s).count() as f64;
            1.0 - d / n
        })
        .product()
}

/// Share of records whose time exceeds `t`.
pub fn empirical_survivor(times: &[f64], t: f64) -> f64 {
    times.iter().filter(|&&x| x > t).count() as f64 / times.len() as f64
}
