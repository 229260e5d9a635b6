use std::cmp::Ordering;

use serde::Serialize;

use super::dataset::{FeatureInfo, FeatureKind, TreeDataset};
use super::TreeParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SplitRule {
    /// `x < threshold` goes left when `less_goes_left`, right otherwise.
    Numeric { threshold: f64, less_goes_left: bool },
    /// Level codes sent to each side; other levels cannot be routed.
    Categorical { left: Vec<u32>, right: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Split {
    pub feature: usize,
    pub rule: SplitRule,
}

impl Split {
    /// Direction of a value, `None` when the value is missing or an unseen level.
    pub fn direction(&self, value: f64) -> Option<Direction> {
        if value.is_nan() {
            return None;
        }
        match &self.rule {
            SplitRule::Numeric {
                threshold,
                less_goes_left,
            } => Some(if (value < *threshold) == *less_goes_left {
                Direction::Left
            } else {
                Direction::Right
            }),
            SplitRule::Categorical { left, right } => {
                let code = value as u32;
                if left.binary_search(&code).is_ok() {
                    Some(Direction::Left)
                } else if right.binary_search(&code).is_ok() {
                    Some(Direction::Right)
                } else {
                    None
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Surrogate {
    pub split: Split,
    /// Share of primary-observed rows sent the same way as the primary split.
    pub agreement: f64,
    /// `(agreement - baseline) / (1 - baseline)` with the majority-direction baseline.
    pub adjusted_agreement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeSplit {
    pub primary: Split,
    /// Sum-of-squares reduction over rows with the primary variable observed.
    pub improvement: f64,
    pub surrogates: Vec<Surrogate>,
    /// Direction of rows that neither the primary nor any surrogate can route.
    pub majority: Direction,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Node {
    /// Heap numbering: root 1, children `2k` and `2k + 1`.
    pub id: u64,
    pub depth: usize,
    pub n: usize,
    pub prediction: f64,
    /// Sum of squared deviations from `prediction` over the node's training rows.
    pub deviance: f64,
    /// Relative cost-complexity at which the node's split is pruned away; 0 for leaves.
    pub complexity: f64,
    pub split: Option<NodeSplit>,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionTree {
    pub features: Vec<FeatureInfo>,
    /// `nodes[0]` is the root.
    pub nodes: Vec<Node>,
    pub surrogate_fallback: bool,
}

impl RegressionTree {
    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn n_splits(&self) -> usize {
        self.nodes.iter().filter(|n| !n.is_leaf()).count()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.len() - self.n_splits()
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Node reached by a row given as one value per feature.
    pub fn terminal_node(&self, values: &[f64]) -> usize {
        self.terminal_node_pruned(values, 0.0)
    }

    /// As [`Self::terminal_node`] but on the subtree that keeps only splits
    /// with complexity above `cp`.
    pub fn terminal_node_pruned(&self, values: &[f64], cp: f64) -> usize {
        let mut k = 0;
        loop {
            let node = &self.nodes[k];
            let Some(split) = &node.split else {
                return k;
            };
            if cp > 0.0 && node.complexity <= cp {
                return k;
            }
            match route(split, self.surrogate_fallback, |f| values[f]) {
                Some(Direction::Left) => k = split.left,
                Some(Direction::Right) => k = split.right,
                None => return k,
            }
        }
    }

    pub fn predict_row(&self, values: &[f64]) -> f64 {
        self.nodes[self.terminal_node(values)].prediction
    }

    pub fn predict_row_pruned(&self, values: &[f64], cp: f64) -> f64 {
        self.nodes[self.terminal_node_pruned(values, cp)].prediction
    }
}

/// Primary split, then surrogates in rank order, then the majority direction.
fn route(split: &NodeSplit, fallback: bool, value: impl Fn(usize) -> f64) -> Option<Direction> {
    if let Some(d) = split.primary.direction(value(split.primary.feature)) {
        return Some(d);
    }
    for s in &split.surrogates {
        if let Some(d) = s.split.direction(value(s.split.feature)) {
            return Some(d);
        }
    }
    fallback.then_some(split.majority)
}

/// Prediction for dataset row `i`.
pub fn predict(tree: &RegressionTree, data: &TreeDataset, i: usize) -> f64 {
    tree.predict_row(&data.row_values(i))
}

/// Root mean squared prediction error, `None` on an empty set.
pub fn evaluate_rmse(tree: &RegressionTree, test: &TreeDataset) -> Option<f64> {
    if test.is_empty() {
        return None;
    }
    let mut values = vec![0.0; test.features.len()];
    let sse: f64 = (0..test.len())
        .map(|i| {
            for (v, f) in values.iter_mut().zip(&test.features) {
                *v = f.values[i];
            }
            let e = tree.predict_row(&values) - test.target[i];
            e * e
        })
        .sum();
    Some((sse / test.len() as f64).sqrt())
}

/// Improvements within this relative distance count as ties, so the
/// earlier candidate (lower feature index, then earlier cut) is kept
/// regardless of rounding in the running sums.
const TIE_TOLERANCE: f64 = 1e-12;

fn beats(improvement: f64, incumbent: f64) -> bool {
    improvement > incumbent + TIE_TOLERANCE * incumbent.abs()
}

struct Candidate {
    feature: usize,
    improvement: f64,
    rule: SplitRule,
}

struct Builder<'a> {
    data: &'a TreeDataset,
    params: &'a TreeParams,
    /// Per feature: training rows sorted by value with missing values last.
    /// Each node owns the same contiguous range in every list.
    order: Vec<Vec<u32>>,
    /// Node members in original order, partitioned like `order`.
    members: Vec<u32>,
    /// Per row direction at the node being split: 0 left, 1 right, 2 stays.
    side: Vec<u8>,
    /// Per row: primary variable observed at the node being split.
    primary_seen: Vec<bool>,
    scratch: Vec<u32>,
    min_improvement: f64,
    nodes: Vec<Node>,
}

/// Greedy recursive partitioning with sum-of-squares splitting and
/// surrogate splits for routing rows with a missing split variable.
pub fn fit_tree(train: &TreeDataset, params: &TreeParams) -> RegressionTree {
    let n = train.len();
    let order = train
        .features
        .iter()
        .map(|f| {
            let mut o: Vec<u32> = (0..n as u32).collect();
            o.sort_by(|&a, &b| cmp_missing_last(f.values[a as usize], f.values[b as usize]));
            o
        })
        .collect();
    let mut b = Builder {
        data: train,
        params,
        order,
        members: (0..n as u32).collect(),
        side: vec![0; n],
        primary_seen: vec![false; n],
        scratch: Vec::with_capacity(n),
        min_improvement: 0.0,
        nodes: Vec::new(),
    };
    let (_, _, root_dev) = b.stats(0, n);
    b.min_improvement = params.cp * root_dev;
    b.grow(0, n, 1, 0);
    let mut tree = RegressionTree {
        features: train.infos(),
        nodes: b.nodes,
        surrogate_fallback: params.surrogate_fallback,
    };
    assign_complexity(&mut tree);
    tree
}

fn cmp_missing_last(a: f64, b: f64) -> Ordering {
    match (a.is_nan(), b.is_nan()) {
        (false, false) => a.total_cmp(&b),
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
    }
}

fn observed_len(values: &[f64], rows: &[u32]) -> usize {
    rows.partition_point(|&r| !values[r as usize].is_nan())
}

impl Builder<'_> {
    /// `(n, mean, deviance)` of the members in `lo..hi`.
    fn stats(&self, lo: usize, hi: usize) -> (usize, f64, f64) {
        let y = &self.data.target;
        let rows = &self.members[lo..hi];
        let n = rows.len();
        if n == 0 {
            return (0, 0.0, 0.0);
        }
        // corrected two-pass mean: exact when all members share one value
        let rough = rows.iter().map(|&r| y[r as usize]).sum::<f64>() / n as f64;
        let mean = rough + rows.iter().map(|&r| y[r as usize] - rough).sum::<f64>() / n as f64;
        let dev = rows
            .iter()
            .map(|&r| (y[r as usize] - mean).powi(2))
            .sum::<f64>();
        (n, mean, dev)
    }

    fn grow(&mut self, lo: usize, hi: usize, id: u64, depth: usize) -> usize {
        let (n, mean, deviance) = self.stats(lo, hi);
        let k = self.nodes.len();
        self.nodes.push(Node {
            id,
            depth,
            n,
            prediction: mean,
            deviance,
            complexity: 0.0,
            split: None,
        });
        let p = self.params;
        if n < p.min_split || depth >= p.max_depth || deviance <= 0.0 {
            return k;
        }
        let Some(best) = self.best_split(lo, hi) else {
            return k;
        };
        // an improvement equal to the threshold up to rounding is accepted
        if best.improvement.is_nan() || best.improvement <= 0.0 || beats(self.min_improvement, best.improvement) {
            return k;
        }
        let primary = Split {
            feature: best.feature,
            rule: best.rule,
        };
        let (surrogates, majority) = self.surrogates(lo, hi, &primary);
        let mut split = NodeSplit {
            primary,
            improvement: best.improvement,
            surrogates,
            majority,
            left: 0,
            right: 0,
        };
        let (n_left, n_right) = self.partition(lo, hi, &split);
        let mid = lo + n_left;
        split.left = self.grow(lo, mid, 2 * id, depth + 1);
        split.right = self.grow(mid, mid + n_right, 2 * id + 1, depth + 1);
        self.nodes[k].split = Some(split);
        k
    }

    fn best_split(&self, lo: usize, hi: usize) -> Option<Candidate> {
        let mut best: Option<Candidate> = None;
        for (f, feature) in self.data.features.iter().enumerate() {
            let cand = match feature.info.kind {
                FeatureKind::Numeric => self.numeric_split(f, lo, hi),
                FeatureKind::Categorical => self.categorical_split(f, lo, hi),
            };
            if let Some(c) = cand {
                if best.as_ref().is_none_or(|b| beats(c.improvement, b.improvement)) {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn numeric_split(&self, f: usize, lo: usize, hi: usize) -> Option<Candidate> {
        let x = &self.data.features[f].values;
        let y = &self.data.target;
        let rows = &self.order[f][lo..hi];
        let m = observed_len(x, rows);
        let min_bucket = self.params.min_bucket.max(1);
        if m < 2 * min_bucket {
            return None;
        }
        let rows = &rows[..m];
        let total: f64 = rows.iter().map(|&r| y[r as usize]).sum();
        let mut left_sum = 0.0;
        let mut best: Option<(f64, usize)> = None;
        for i in 0..m - 1 {
            left_sum += y[rows[i] as usize];
            let nl = i + 1;
            let nr = m - nl;
            if nr < min_bucket {
                break;
            }
            if nl < min_bucket || x[rows[i] as usize] == x[rows[i + 1] as usize] {
                continue;
            }
            let diff = left_sum / nl as f64 - (total - left_sum) / nr as f64;
            let imp = diff * diff * (nl * nr) as f64 / m as f64;
            if best.is_none_or(|(b, _)| beats(imp, b)) {
                best = Some((imp, i));
            }
        }
        let (improvement, i) = best?;
        Some(Candidate {
            feature: f,
            improvement,
            rule: SplitRule::Numeric {
                threshold: midpoint(x[rows[i] as usize], x[rows[i + 1] as usize]),
                less_goes_left: true,
            },
        })
    }

    fn categorical_split(&self, f: usize, lo: usize, hi: usize) -> Option<Candidate> {
        let feature = &self.data.features[f];
        let x = &feature.values;
        let y = &self.data.target;
        let mut count = vec![0usize; feature.info.levels.len()];
        let mut sum = vec![0.0; feature.info.levels.len()];
        for &r in &self.members[lo..hi] {
            let v = x[r as usize];
            if !v.is_nan() {
                count[v as usize] += 1;
                sum[v as usize] += y[r as usize];
            }
        }
        let mut present: Vec<usize> = (0..count.len()).filter(|&l| count[l] > 0).collect();
        if present.len() < 2 {
            return None;
        }
        let mean = |l: usize| sum[l] / count[l] as f64;
        present.sort_by(|&a, &b| mean(a).total_cmp(&mean(b)));
        // levels whose means differ only by rounding are ordered by name
        let mut start = 0;
        while start < present.len() {
            let m0 = mean(present[start]);
            let mut end = start + 1;
            while end < present.len() && mean(present[end]) - m0 <= TIE_TOLERANCE * m0.abs().max(1.0) {
                end += 1;
            }
            present[start..end].sort_by(|&a, &b| feature.info.levels[a].cmp(&feature.info.levels[b]));
            start = end;
        }
        let m: usize = count.iter().sum();
        let total: f64 = sum.iter().sum();
        let min_bucket = self.params.min_bucket.max(1);
        let (mut nl, mut left_sum) = (0usize, 0.0);
        let mut best: Option<(f64, usize)> = None;
        for (i, &l) in present[..present.len() - 1].iter().enumerate() {
            nl += count[l];
            left_sum += sum[l];
            let nr = m - nl;
            if nl < min_bucket || nr < min_bucket {
                continue;
            }
            let diff = left_sum / nl as f64 - (total - left_sum) / nr as f64;
            let imp = diff * diff * (nl * nr) as f64 / m as f64;
            if best.is_none_or(|(b, _)| beats(imp, b)) {
                best = Some((imp, i));
            }
        }
        let (improvement, i) = best?;
        let mut left: Vec<u32> = present[..=i].iter().map(|&l| l as u32).collect();
        let mut right: Vec<u32> = present[i + 1..].iter().map(|&l| l as u32).collect();
        left.sort_unstable();
        right.sort_unstable();
        Some(Candidate {
            feature: f,
            improvement,
            rule: SplitRule::Categorical { left, right },
        })
    }

    /// Ranks surrogate splits by agreement with the primary split over the
    /// node rows where the primary variable is observed. A missing surrogate
    /// value counts as disagreement.
    fn surrogates(&mut self, lo: usize, hi: usize, primary: &Split) -> (Vec<Surrogate>, Direction) {
        let x = &self.data.features[primary.feature].values;
        let (mut n_left, mut n_right) = (0usize, 0usize);
        for &r in &self.members[lo..hi] {
            let r = r as usize;
            match primary.direction(x[r]) {
                Some(Direction::Left) => {
                    self.side[r] = 0;
                    self.primary_seen[r] = true;
                    n_left += 1;
                }
                Some(Direction::Right) => {
                    self.side[r] = 1;
                    self.primary_seen[r] = true;
                    n_right += 1;
                }
                None => self.primary_seen[r] = false,
            }
        }
        let majority = if n_left >= n_right {
            Direction::Left
        } else {
            Direction::Right
        };
        let n_seen = n_left + n_right;
        let baseline = n_left.max(n_right);
        let mut found: Vec<(usize, Split)> = Vec::new();
        if self.params.max_surrogates > 0 {
            for f in 0..self.data.features.len() {
                if f == primary.feature {
                    continue;
                }
                let cand = match self.data.features[f].info.kind {
                    FeatureKind::Numeric => self.numeric_surrogate(f, lo, hi),
                    FeatureKind::Categorical => self.categorical_surrogate(f, lo, hi),
                };
                if let Some((agree, split)) = cand {
                    if agree > baseline {
                        found.push((agree, split));
                    }
                }
            }
        }
        // stable sort keeps lower feature indices first among equal agreement
        found.sort_by_key(|f| std::cmp::Reverse(f.0));
        found.truncate(self.params.max_surrogates);
        let surrogates = found
            .into_iter()
            .map(|(agree, split)| Surrogate {
                split,
                agreement: agree as f64 / n_seen as f64,
                adjusted_agreement: (agree - baseline) as f64 / (n_seen - baseline) as f64,
            })
            .collect();
        (surrogates, majority)
    }

    fn numeric_surrogate(&self, f: usize, lo: usize, hi: usize) -> Option<(usize, Split)> {
        let x = &self.data.features[f].values;
        let rows = &self.order[f][lo..hi];
        let m = observed_len(x, rows);
        let rows: Vec<u32> = rows[..m]
            .iter()
            .copied()
            .filter(|&r| self.primary_seen[r as usize])
            .collect();
        if rows.len() < 2 {
            return None;
        }
        let total_left = rows.iter().filter(|&&r| self.side[r as usize] == 0).count();
        let total_right = rows.len() - total_left;
        let (mut pl, mut pr) = (0usize, 0usize);
        let mut best: Option<(usize, usize, bool)> = None;
        for i in 0..rows.len() - 1 {
            if self.side[rows[i] as usize] == 0 {
                pl += 1;
            } else {
                pr += 1;
            }
            if x[rows[i] as usize] == x[rows[i + 1] as usize] {
                continue;
            }
            let less_left = pl + (total_right - pr);
            let less_right = pr + (total_left - pl);
            let (agree, dir) = if less_left >= less_right {
                (less_left, true)
            } else {
                (less_right, false)
            };
            if best.is_none_or(|(b, _, _)| agree > b) {
                best = Some((agree, i, dir));
            }
        }
        let (agree, i, less_goes_left) = best?;
        Some((
            agree,
            Split {
                feature: f,
                rule: SplitRule::Numeric {
                    threshold: midpoint(x[rows[i] as usize], x[rows[i + 1] as usize]),
                    less_goes_left,
                },
            },
        ))
    }

    fn categorical_surrogate(&self, f: usize, lo: usize, hi: usize) -> Option<(usize, Split)> {
        let feature = &self.data.features[f];
        let x = &feature.values;
        let n_levels = feature.info.levels.len();
        let mut lefts = vec![0usize; n_levels];
        let mut rights = vec![0usize; n_levels];
        for &r in &self.members[lo..hi] {
            let r = r as usize;
            if !self.primary_seen[r] || x[r].is_nan() {
                continue;
            }
            if self.side[r] == 0 {
                lefts[x[r] as usize] += 1;
            } else {
                rights[x[r] as usize] += 1;
            }
        }
        let (mut left, mut right) = (Vec::new(), Vec::new());
        let mut agree = 0;
        for l in 0..n_levels {
            if lefts[l] + rights[l] == 0 {
                continue;
            }
            if lefts[l] >= rights[l] {
                left.push(l as u32);
                agree += lefts[l];
            } else {
                right.push(l as u32);
                agree += rights[l];
            }
        }
        if left.is_empty() || right.is_empty() {
            return None;
        }
        Some((
            agree,
            Split {
                feature: f,
                rule: SplitRule::Categorical { left, right },
            },
        ))
    }

    /// Stable partition of the node range into left members, right members
    /// and (without majority fallback) members that stay at the node.
    fn partition(&mut self, lo: usize, hi: usize, split: &NodeSplit) -> (usize, usize) {
        let features = &self.data.features;
        let fallback = self.params.surrogate_fallback;
        let (mut n_left, mut n_right) = (0, 0);
        for &r in &self.members[lo..hi] {
            let r = r as usize;
            self.side[r] = match route(split, fallback, |f| features[f].values[r]) {
                Some(Direction::Left) => {
                    n_left += 1;
                    0
                }
                Some(Direction::Right) => {
                    n_right += 1;
                    1
                }
                None => 2,
            };
        }
        let side = &self.side;
        let scratch = &mut self.scratch;
        let mut split_range = |list: &mut [u32]| {
            scratch.clear();
            for s in 0..3 {
                scratch.extend(list.iter().copied().filter(|&r| side[r as usize] == s));
            }
            list.copy_from_slice(scratch);
        };
        split_range(&mut self.members[lo..hi]);
        for o in &mut self.order {
            split_range(&mut o[lo..hi]);
        }
        (n_left, n_right)
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if a < m {
        m
    } else {
        b
    }
}

/// Weakest-link pruning sequence: every split gets the relative complexity
/// (cost per removed leaf over the root deviance) at which it is pruned.
fn assign_complexity(tree: &mut RegressionTree) {
    let root_dev = tree.nodes[0].deviance;
    let n = tree.nodes.len();
    let mut collapsed = vec![false; n];
    let mut alpha_floor: f64 = 0.0;
    loop {
        // subtree leaf deviance and leaf count under the current pruning
        let mut leaf_dev = vec![0.0; n];
        let mut leaves = vec![0usize; n];
        for k in (0..n).rev() {
            match (&tree.nodes[k].split, collapsed[k]) {
                (Some(s), false) => {
                    leaf_dev[k] = leaf_dev[s.left] + leaf_dev[s.right];
                    leaves[k] = leaves[s.left] + leaves[s.right];
                }
                _ => {
                    leaf_dev[k] = tree.nodes[k].deviance;
                    leaves[k] = 1;
                }
            }
        }
        let weakest = (0..n)
            .filter(|&k| tree.nodes[k].split.is_some() && !collapsed[k] && reachable(tree, &collapsed, k))
            .map(|k| {
                let g = (tree.nodes[k].deviance - leaf_dev[k]) / (leaves[k] - 1) as f64;
                (g, k)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
        let Some((g, k)) = weakest else {
            break;
        };
        alpha_floor = alpha_floor.max(g);
        let cp = if root_dev > 0.0 { alpha_floor / root_dev } else { 0.0 };
        let mut stack = vec![k];
        while let Some(j) = stack.pop() {
            let children = tree.nodes[j].split.as_ref().map(|s| (s.left, s.right));
            if let (Some((l, r)), false) = (children, collapsed[j]) {
                collapsed[j] = true;
                tree.nodes[j].complexity = cp;
                stack.push(l);
                stack.push(r);
            }
        }
    }
}

/// Whether node `k` is still part of the pruned tree. Children always come
/// after their parent, so walking from the root suffices.
fn reachable(tree: &RegressionTree, collapsed: &[bool], k: usize) -> bool {
    let mut j = 0;
    loop {
        if j == k {
            return true;
        }
        if collapsed[j] {
            return false;
        }
        let Some(s) = &tree.nodes[j].split else {
            return false;
        };
        j = if k >= s.right { s.right } else { s.left };
    }
}
