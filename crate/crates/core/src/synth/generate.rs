use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::config::{Mechanism, SynthConfig, SynthGroup, SynthTable, ValueSpec};
use super::GeneratedTable;
use crate::ingest::ColumnDecl;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnTruth {
    pub table: String,
    pub column: String,
    pub provider: String,
    pub mechanism: Mechanism,
    pub n_rows: usize,
    pub n_missing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupTruth {
    pub table: String,
    pub key: String,
    pub agreement: f64,
    pub columns: Vec<String>,
    pub providers: Vec<String>,
    pub missing_rates: Vec<f64>,
}

pub(crate) fn recipient_id(i: usize) -> String {
    format!("R{:06}", i + 1)
}

pub(crate) fn format_number(x: f64) -> String {
    let s = format!("{x:.4}");
    if s == "-0.0000" {
        "0.0000".to_string()
    } else {
        s
    }
}

fn pick_weighted(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

fn pick_level(rng: &mut ChaCha8Rng, levels: &[String], weights: &[f64]) -> usize {
    if weights.is_empty() {
        rng.random_range(0..levels.len())
    } else {
        pick_weighted(rng, weights)
    }
}

fn draw_value(rng: &mut ChaCha8Rng, spec: &ValueSpec, recipient: usize) -> String {
    match spec {
        ValueSpec::Categorical { levels, weights } => levels[pick_level(rng, levels, weights)].clone(),
        ValueSpec::Numeric { mean, sd } => {
            let z: f64 = rng.sample(StandardNormal);
            format_number(mean + sd * z)
        }
        ValueSpec::Date { min, max } => rng.random_range(*min..=*max).to_string(),
        ValueSpec::RecipientId => recipient_id(recipient),
    }
}

/// Number of cells to blank among `k`: `floor(r k)` plus one with
/// probability equal to the fractional part.
fn coupled_count(rng: &mut ChaCha8Rng, rate: f64, k: usize) -> usize {
    let expected = rate * k as f64;
    let base = expected.floor();
    let extra = rng.random::<f64>() < expected - base;
    (base as usize + extra as usize).min(k)
}

pub(crate) fn generate_table(
    config: &SynthConfig,
    table: &SynthTable,
    rng: &mut ChaCha8Rng,
) -> (GeneratedTable, Vec<ColumnTruth>, Vec<GroupTruth>) {
    let n = config.n_recipients * table.rows_per_recipient;
    let recipient_of = |i: usize| i / table.rows_per_recipient;
    let mut decls: Vec<ColumnDecl> = Vec::new();
    let mut cells: Vec<Vec<String>> = Vec::new();
    let mut protected: Vec<bool> = Vec::new();

    for col in &table.columns {
        let mut d = ColumnDecl::new(&col.name, &col.provider, col.values.value_type());
        d.sentinels = col.sentinels.clone();
        decls.push(d);
        let mut values: Vec<String> = (0..n).map(|i| draw_value(rng, &col.values, recipient_of(i))).collect();
        let is_id = matches!(col.values, ValueSpec::RecipientId);
        protected.push(is_id);
        if !is_id {
            if col.sentinel_rate > 0.0 {
                for v in values.iter_mut() {
                    if rng.random::<f64>() < col.sentinel_rate {
                        *v = col.sentinels[rng.random_range(0..col.sentinels.len())].clone();
                    }
                }
            }
            if let Mechanism::Mcar { rate } = col.missing {
                for v in values.iter_mut() {
                    if rng.random::<f64>() < rate {
                        v.clear();
                    }
                }
            }
        }
        cells.push(values);
    }

    // coupled driven mechanisms, one block per (driver, rate map)
    let mut blocks: Vec<(&Mechanism, Vec<usize>)> = Vec::new();
    for (j, col) in table.columns.iter().enumerate() {
        if col.missing.driver().is_none() || matches!(col.values, ValueSpec::RecipientId) {
            continue;
        }
        match blocks.iter_mut().find(|(m, _)| m.driver() == col.missing.driver()) {
            Some((_, cols)) => cols.push(j),
            None => blocks.push((&col.missing, vec![j])),
        }
    }
    for (mechanism, cols) in &blocks {
        let (by, rates) = mechanism.driver().expect("driven mechanism");
        let driver = table.columns.iter().position(|c| c.name == by).expect("validated driver");
        // rows index several columns of `cells` at once
        #[allow(clippy::needless_range_loop)]
        for i in 0..n {
            let rate = rates.get(cells[driver][i].as_str()).copied().unwrap_or(0.0);
            let m = coupled_count(rng, rate, cols.len());
            for k in index::sample(rng, cols.len(), m) {
                cells[cols[k]][i].clear();
            }
        }
    }

    let mut group_truths = Vec::new();
    for group in config.groups.iter().filter(|g| g.table == table.name) {
        let first = cells.len();
        add_group(group, n, rng, &mut decls, &mut cells);
        protected.extend(std::iter::repeat_n(false, cells.len() - first));
        group_truths.push(GroupTruth {
            table: table.name.clone(),
            key: group.key.clone(),
            agreement: group.agreement,
            columns: decls[first..].iter().map(|d| d.name.clone()).collect(),
            providers: group.members.iter().map(|m| m.provider.clone()).collect(),
            missing_rates: group.members.iter().map(|m| m.missing_rate).collect(),
        });
    }

    if !table.row_providers.is_empty() {
        let providers: Vec<&String> = table.row_providers.keys().collect();
        let weights: Vec<f64> = table.row_providers.values().copied().collect();
        #[allow(clippy::needless_range_loop)]
        for i in 0..n {
            let owner = providers[pick_weighted(rng, &weights)];
            for (j, d) in decls.iter().enumerate() {
                if !protected[j] && &d.provider != owner {
                    cells[j][i].clear();
                }
            }
        }
    }

    let mut truths: Vec<ColumnTruth> = decls
        .iter()
        .zip(&cells)
        .map(|(d, values)| ColumnTruth {
            table: table.name.clone(),
            column: d.name.clone(),
            provider: d.provider.clone(),
            mechanism: Mechanism::None,
            n_rows: n,
            n_missing: values.iter().filter(|v| v.is_empty()).count(),
        })
        .collect();
    for (t, col) in truths.iter_mut().zip(&table.columns) {
        t.mechanism = col.missing.clone();
    }
    for g in &group_truths {
        for (col, rate) in g.columns.iter().zip(&g.missing_rates) {
            if let Some(t) = truths.iter_mut().find(|t| &t.column == col) {
                t.mechanism = Mechanism::Mcar { rate: *rate };
            }
        }
    }
    let generated = GeneratedTable {
        name: table.name.clone(),
        columns: decls,
        cells,
    };
    (generated, truths, group_truths)
}

/// Numeric members: `mean + sd (a z + (1 - a) e_p)` with a shared `z`.
/// Categorical members keep the shared level with probability `a` and are
/// redrawn otherwise.
fn add_group(
    group: &SynthGroup,
    n: usize,
    rng: &mut ChaCha8Rng,
    decls: &mut Vec<ColumnDecl>,
    cells: &mut Vec<Vec<String>>,
) {
    let first = cells.len();
    for m in &group.members {
        let mut d = ColumnDecl::new(
            format!("{}_{}", group.key, m.provider),
            &m.provider,
            group.values.value_type(),
        );
        d.group = Some(group.key.clone());
        decls.push(d);
        cells.push(Vec::with_capacity(n));
    }
    let a = group.agreement;
    for _ in 0..n {
        match &group.values {
            ValueSpec::Numeric { mean, sd } => {
                let z: f64 = rng.sample(StandardNormal);
                for k in 0..group.members.len() {
                    let e: f64 = rng.sample(StandardNormal);
                    cells[first + k].push(format_number(mean + sd * (a * z + (1.0 - a) * e)));
                }
            }
            ValueSpec::Categorical { levels, weights } => {
                let shared = pick_level(rng, levels, weights);
                for k in 0..group.members.len() {
                    let keep = rng.random::<f64>() < a;
                    let level = if keep { shared } else { pick_level(rng, levels, weights) };
                    cells[first + k].push(levels[level].clone());
                }
            }
            _ => unreachable!("validated group values"),
        }
        for (k, m) in group.members.iter().enumerate() {
            if m.missing_rate > 0.0 && rng.random::<f64>() < m.missing_rate {
                cells[first + k].last_mut().expect("just pushed").clear();
            }
        }
    }
}
