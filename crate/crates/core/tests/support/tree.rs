//! Exhaustive first-split search in exact integer arithmetic.
//!
//! Targets are integers `k` (the tree sees `k / scale`), so every
//! sum-of-squares reduction is a rational number and ties are exact.
//! Candidates are every cut between consecutive distinct values of a
//! numeric feature and every non-trivial subset of the present levels of
//! a categorical feature (only the mean-ordered prefixes when a minimum
//! bucket size above one makes some subsets inadmissible). Ties resolve to the lowest feature index, then
//! the smallest threshold; within a categorical feature, to the first
//! prefix of the levels ordered by mean target and then by name.

use std::cmp::Ordering;

use rand::Rng;
use regida_core::misstree::{
    fit_tree, Direction, Feature, FeatureKind, RegressionTree, TreeDataset, TreeParams,
};

/// One random fixture: features with missing values and integer targets.
#[derive(Debug, Clone)]
pub struct TreeFixture {
    /// `None` is missing. Categorical values are level indices.
    pub columns: Vec<(FeatureKind, Vec<Option<u32>>)>,
    pub targets: Vec<i64>,
    pub scale: f64,
}

const LEVELS: [&str; 5] = ["a", "b", "c", "d", "e"];

impl TreeFixture {
    pub fn random<R: Rng>(rng: &mut R, max_rows: usize, max_cols: usize) -> Self {
        let n = rng.random_range(2..=max_rows);
        let k = rng.random_range(1..=max_cols);
        let scale = rng.random_range(1..=8) as f64;
        let targets = (0..n).map(|_| rng.random_range(0..=scale as i64)).collect();
        let columns = (0..k)
            .map(|_| {
                let categorical = rng.random::<bool>();
                let distinct = if categorical {
                    rng.random_range(1..=LEVELS.len() as u32)
                } else {
                    rng.random_range(1..=n as u32)
                };
                let p_missing = if rng.random::<bool>() { 0.0 } else { rng.random::<f64>() * 0.4 };
                let values = (0..n)
                    .map(|_| (rng.random::<f64>() >= p_missing).then(|| rng.random_range(0..distinct)))
                    .collect();
                let kind = if categorical {
                    FeatureKind::Categorical
                } else {
                    FeatureKind::Numeric
                };
                (kind, values)
            })
            .collect();
        Self {
            columns,
            targets,
            scale,
        }
    }

    /// Dataset as the tree sees it; numeric values are passed through
    /// `transform`.
    pub fn dataset_with(&self, transform: impl Fn(f64) -> f64) -> TreeDataset {
        let features = self
            .columns
            .iter()
            .enumerate()
            .map(|(f, (kind, values))| match kind {
                FeatureKind::Numeric => Feature::numeric(
                    format!("x{f}"),
                    values
                        .iter()
                        .map(|v| v.map_or(f64::NAN, |v| transform(v as f64)))
                        .collect(),
                ),
                FeatureKind::Categorical => {
                    let names: Vec<Option<&str>> =
                        values.iter().map(|v| v.map(|v| LEVELS[v as usize])).collect();
                    Feature::categorical(format!("x{f}"), &names)
                }
            })
            .collect();
        let target = self.targets.iter().map(|&k| k as f64 / self.scale).collect();
        TreeDataset::new(features, target)
    }

    pub fn dataset(&self) -> TreeDataset {
        self.dataset_with(|x| x)
    }
}

/// `num / den` with a positive denominator.
#[derive(Debug, Clone, Copy)]
struct Frac {
    num: i128,
    den: i128,
}

impl Frac {
    fn cmp(self, other: Frac) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

/// Sum-of-squares reduction of splitting `rows` into `left` and the rest.
fn reduction(targets: &[i64], rows: &[usize], left: &[bool]) -> Frac {
    let (mut nl, mut sl, mut nr, mut sr) = (0i128, 0i128, 0i128, 0i128);
    for (&i, &l) in rows.iter().zip(left) {
        if l {
            nl += 1;
            sl += targets[i] as i128;
        } else {
            nr += 1;
            sr += targets[i] as i128;
        }
    }
    let n = nl + nr;
    let s = sl + sr;
    // sl^2/nl + sr^2/nr - s^2/n
    Frac {
        num: sl * sl * nr * n + sr * sr * nl * n - s * s * nl * nr,
        den: nl * nr * n,
    }
}

/// Expected first split as `(feature, rows sent one way, rows sent the
/// other way)`, both restricted to rows with the feature observed and
/// sorted; `None` when the root should stay a leaf.
pub fn expected_first_split(
    fx: &TreeFixture,
    params: &TreeParams,
) -> Option<(usize, Vec<usize>, Vec<usize>)> {
    let n = fx.targets.len();
    let all: Vec<usize> = (0..n).collect();
    let s: i128 = fx.targets.iter().map(|&k| k as i128).sum();
    let ss: i128 = fx.targets.iter().map(|&k| (k as i128).pow(2)).sum();
    // SS_root = ss - s^2 / n
    let root = Frac {
        num: ss * n as i128 - s * s,
        den: n as i128,
    };
    if n < params.min_split || params.max_depth == 0 || root.num == 0 {
        return None;
    }
    let min_bucket = params.min_bucket.max(1);

    // (improvement, feature, left mask over observed rows, observed rows)
    let mut best: Option<(Frac, usize, Vec<bool>, Vec<usize>)> = None;
    for (f, (kind, values)) in fx.columns.iter().enumerate() {
        let rows: Vec<usize> = all.iter().copied().filter(|&i| values[i].is_some()).collect();
        let value = |i: usize| values[i].expect("observed row");
        let candidates: Vec<Vec<bool>> = match kind {
            FeatureKind::Numeric => {
                let mut distinct: Vec<u32> = rows.iter().map(|&i| value(i)).collect();
                distinct.sort_unstable();
                distinct.dedup();
                distinct
                    .windows(2)
                    .map(|w| rows.iter().map(|&i| value(i) <= w[0]).collect())
                    .collect()
            }
            FeatureKind::Categorical => {
                let present = category_order(fx, &rows, values);
                let q = present.len();
                let mut masks: Vec<(bool, usize, Vec<bool>)> = Vec::new();
                for subset in 1..(1u32 << q) - 1 {
                    if q == 0 {
                        break;
                    }
                    let left: Vec<bool> = rows
                        .iter()
                        .map(|&i| {
                            let pos = present.iter().position(|&l| l == value(i)).expect("present");
                            subset & (1 << pos) != 0
                        })
                        .collect();
                    // prefixes of the mean order first, in order of length
                    let prefix_len = (subset + 1).is_power_of_two().then(|| subset.count_ones() as usize);
                    // Ordered prefixes contain an optimal subset only when every
                    // subset is admissible; with a bucket floor the search is
                    // over prefixes alone.
                    if prefix_len.is_none() && min_bucket > 1 {
                        continue;
                    }
                    masks.push((prefix_len.is_none(), prefix_len.unwrap_or(0), left));
                }
                masks.sort_by_key(|m| (m.0, m.1));
                masks.into_iter().map(|(_, _, m)| m).collect()
            }
        };
        for left in candidates {
            let nl = left.iter().filter(|&&l| l).count();
            let nr = left.len() - nl;
            if nl < min_bucket || nr < min_bucket {
                continue;
            }
            let imp = reduction(&fx.targets, &rows, &left);
            if best.as_ref().is_none_or(|(b, ..)| imp.cmp(*b) == Ordering::Greater) {
                best = Some((imp, f, left, rows.clone()));
            }
        }
    }
    let (imp, f, left, rows) = best?;
    // accepted when positive and at least cp * SS_root
    let cp = Frac {
        num: (params.cp * 1e9).round() as i128,
        den: 1_000_000_000,
    };
    let threshold = Frac {
        num: cp.num * root.num,
        den: cp.den * root.den,
    };
    if imp.num <= 0 || imp.cmp(threshold) == Ordering::Less {
        return None;
    }
    let mut l: Vec<usize> = Vec::new();
    let mut r: Vec<usize> = Vec::new();
    for (&i, &goes_left) in rows.iter().zip(&left) {
        if goes_left {
            l.push(i);
        } else {
            r.push(i);
        }
    }
    Some((f, l, r))
}

/// Present levels ordered by mean target (exact), then by name.
fn category_order(fx: &TreeFixture, rows: &[usize], values: &[Option<u32>]) -> Vec<u32> {
    let mut stats: Vec<(u32, i128, i128)> = Vec::new();
    for &i in rows {
        let v = values[i].expect("observed row");
        match stats.iter_mut().find(|(l, ..)| *l == v) {
            Some((_, c, s)) => {
                *c += 1;
                *s += fx.targets[i] as i128;
            }
            None => stats.push((v, 1, fx.targets[i] as i128)),
        }
    }
    stats.sort_by(|a, b| {
        (a.2 * b.1)
            .cmp(&(b.2 * a.1))
            .then_with(|| LEVELS[a.0 as usize].cmp(LEVELS[b.0 as usize]))
    });
    stats.into_iter().map(|(l, ..)| l).collect()
}

/// The fitted tree's first split in the same form as
/// [`expected_first_split`].
pub fn actual_first_split(
    tree: &RegressionTree,
    data: &TreeDataset,
) -> Option<(usize, Vec<usize>, Vec<usize>)> {
    let split = tree.root().split.as_ref()?;
    let f = split.primary.feature;
    let mut l = Vec::new();
    let mut r = Vec::new();
    for (i, &v) in data.features[f].values.iter().enumerate() {
        match split.primary.direction(v) {
            Some(Direction::Left) => l.push(i),
            Some(Direction::Right) => r.push(i),
            None => {}
        }
    }
    Some((f, l, r))
}

/// Whether two first splits induce the same partition of the observed rows.
pub fn same_partition(
    a: &Option<(usize, Vec<usize>, Vec<usize>)>,
    b: &Option<(usize, Vec<usize>, Vec<usize>)>,
) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some((fa, la, ra)), Some((fb, lb, rb))) => {
            fa == fb && ((la == lb && ra == rb) || (la == rb && ra == lb))
        }
        _ => false,
    }
}

/// Fits the fixture and compares its first split with the exhaustive search.
pub fn check_first_split(fx: &TreeFixture, params: &TreeParams) -> Result<(), String> {
    let data = fx.dataset();
    let tree = fit_tree(&data, params);
    let expected = expected_first_split(fx, params);
    let actual = actual_first_split(&tree, &data);
    if same_partition(&expected, &actual) {
        Ok(())
    } else {
        Err(format!("expected {expected:?}, fitted {actual:?}"))
    }
}
