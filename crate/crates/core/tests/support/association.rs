//! Textbook association measures, computed without any shared code.

use std::collections::BTreeMap;

/// Uncorrected Cramér's V of paired labels, `None` when fewer than two
/// distinct labels occur on either side.
pub fn cramers_v(pairs: &[(u32, u32)]) -> Option<f64> {
    let mut joint: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    let mut left: BTreeMap<u32, f64> = BTreeMap::new();
    let mut right: BTreeMap<u32, f64> = BTreeMap::new();
    for &(a, b) in pairs {
        *joint.entry((a, b)).or_default() += 1.0;
        *left.entry(a).or_default() += 1.0;
        *right.entry(b).or_default() += 1.0;
    }
    if left.len() < 2 || right.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let mut chi2 = 0.0;
    for (a, na) in &left {
        for (b, nb) in &right {
            let e = na * nb / n;
            let o = joint.get(&(*a, *b)).copied().unwrap_or(0.0);
            chi2 += (o - e) * (o - e) / e;
        }
    }
    let k = left.len().min(right.len()) as f64 - 1.0;
    Some((chi2 / (n * k)).sqrt())
}

/// Absolute Pearson correlation from raw moments, `None` for constant data.
pub fn abs_pearson(pairs: &[(f64, f64)]) -> Option<f64> {
    let n = pairs.len() as f64;
    let sx: f64 = pairs.iter().map(|p| p.0).sum();
    let sy: f64 = pairs.iter().map(|p| p.1).sum();
    let sxx: f64 = pairs.iter().map(|p| (p.0 - sx / n).powi(2)).sum();
    let syy: f64 = pairs.iter().map(|p| (p.1 - sy / n).powi(2)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - sx / n) * (p.1 - sy / n)).sum();
    (pairs.len() >= 2 && sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx.sqrt() * syy.sqrt())).abs())
}
