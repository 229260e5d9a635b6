//! Acceptance suite: one numbered criterion per check, each printed as a
//! PASS or FAIL line. The process exits non-zero when any criterion fails.

#[allow(dead_code)]
#[path = "../../core/tests/support/association.rs"]
mod association_oracle;
#[allow(dead_code)]
#[path = "../../core/tests/support/km.rs"]
mod km_oracle;
#[allow(dead_code)]
#[path = "../../core/tests/support/missingness.rs"]
mod missingness_oracle;
#[allow(dead_code)]
#[path = "../../core/tests/support/tree.rs"]
mod tree_oracle;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regida_core::consistency::{
    abs_pearson, association, cramers_v, Association, NotComputableReason,
};
use regida_core::eventtime::{
    apply_plausibility, derive_cohort, kaplan_meier, Disposition, KmCurve, OutcomeDefinition,
    RecipientDates, SurvivalRecord,
};
use regida_core::ingest::{load_bundle, SchemaConfig};
use regida_core::misstree::{analyze, TreeParams};
use regida_core::model::{ColumnMeta, ProviderId, RegistryTable, ValueType};
use regida_core::synth::{generate, SynthConfig};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

fn secs(d: Duration) -> String {
    format!("{:.2} s", d.as_secs_f64())
}

fn missingness_corpus() -> Vec<missingness_oracle::Layout> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..1000).map(|_| missingness_oracle::Layout::random(&mut rng, 50, 10)).collect()
}

fn missingness_equivalence() -> Outcome {
    let corpus = missingness_corpus();
    let started = Instant::now();
    for (k, layout) in corpus.iter().enumerate() {
        missingness_oracle::check_statistics(layout).map_err(|e| format!("table {k}: {e}"))?;
    }
    let elapsed = started.elapsed();
    check!(elapsed < Duration::from_secs(10), "took {}", secs(elapsed));
    Ok(format!("1000 tables, M/R/PM/OPM/U/influx/outflux exact, {}", secs(elapsed)))
}

fn flux_identities() -> Outcome {
    let corpus = missingness_corpus();
    for (k, layout) in corpus.iter().enumerate() {
        missingness_oracle::check_flux_identities(layout).map_err(|e| format!("table {k}: {e}"))?;
    }
    Ok("0 violations over 1000 tables".into())
}

/// 40 rows: `type` A rows miss 1 of 10 provider columns, B rows miss 7.
fn forty_row_fixture() -> RegistryTable {
    let mut metas = vec![ColumnMeta::new("type", ProviderId(0), ValueType::Categorical)];
    for j in 1..10 {
        metas.push(ColumnMeta::new(format!("v{j}"), ProviderId(0), ValueType::Categorical));
    }
    let rows: Vec<Vec<&str>> = (0..40)
        .map(|i| {
            let (level, missing) = if i % 2 == 0 { ("A", 1) } else { ("B", 7) };
            let mut row = vec![level];
            row.extend((1..10).map(|j| if j <= missing { "" } else { "x" }));
            row
        })
        .collect();
    RegistryTable::from_text_rows("T", metas, &rows).expect("valid fixture")
}

fn tree_recovery() -> Outcome {
    let mut columns = vec![
        r#"{ name = "RecipID", provider = "ET", values = { kind = "recipient_id" } }"#.to_string(),
        r#"{ name = "Type", provider = "ET", values = { kind = "categorical", levels = ["A", "B"] } }"#
            .to_string(),
    ];
    for j in 1..=10 {
        columns.push(format!(
            r#"{{ name = "x{j}", provider = "ET", values = {{ kind = "numeric", mean = 0.0, sd = 1.0 }}, missing = {{ mechanism = "type_driven", by = "Type", rates = {{ A = 0.1, B = 0.7 }} }} }}"#
        ));
    }
    let text = format!(
        "seed = 2024\nn_recipients = 2000\n[[tables]]\nname = \"T_Obs\"\ncolumns = [\n{}\n]\n",
        columns.join(",\n")
    );
    let config = SynthConfig::from_toml_str(&text).map_err(|e| e.to_string())?;
    let bundle = generate(&config).map_err(|e| e.to_string())?.load().map_err(|e| e.to_string())?;
    let table = bundle.table("T_Obs").ok_or("table missing")?;
    let et = bundle.providers.id("ET").ok_or("ET missing")?;
    let a = analyze(table, et, &TreeParams::default()).map_err(|e| e.to_string())?;
    let top = a.importance.first().ok_or("no splits")?;
    check!(top.feature == "Type" && top.adjusted == 100.0, "top predictor {top:?}");
    check!(a.test_rmse <= 0.02, "synthetic test RMSE {}", a.test_rmse);

    let fixed = analyze(&forty_row_fixture(), ProviderId(0), &TreeParams::default())
        .map_err(|e| e.to_string())?;
    check!(fixed.test_rmse == 0.0, "40-row fixture RMSE {}", fixed.test_rmse);
    Ok(format!(
        "n=2000: top predictor Type = 100, test RMSE {:.2e}; 40-row fixture RMSE 0",
        a.test_rmse
    ))
}

fn tree_vs_exhaustive() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let settings = [
        TreeParams::default(),
        TreeParams { min_split: 4, min_bucket: 2, cp: 0.001, ..TreeParams::default() },
    ];
    let mut mismatches = Vec::new();
    for k in 0..100 {
        let fx = tree_oracle::TreeFixture::random(&mut rng, 50, 6);
        for params in &settings {
            if let Err(e) = tree_oracle::check_first_split(&fx, params) {
                mismatches.push(format!("fixture {k}: {e}"));
            }
        }
    }
    check!(mismatches.is_empty(), "{} mismatches, first: {}", mismatches.len(), mismatches[0]);
    Ok("100 fixtures x 2 settings, 0 mismatches".into())
}

fn column(kind: ValueType, provider: u16, name: &str) -> ColumnMeta {
    ColumnMeta::new(name, ProviderId(provider), kind)
}

fn pair_table(ka: ValueType, kb: ValueType, rows: &[[&str; 2]]) -> RegistryTable {
    let rows: Vec<Vec<&str>> = rows.iter().map(|r| r.to_vec()).collect();
    RegistryTable::from_text_rows("T", vec![column(ka, 0, "a"), column(kb, 1, "b")], &rows)
        .expect("valid pair table")
}

fn association_oracles() -> Outcome {
    use ValueType::{Categorical, Numeric};
    let v = cramers_v(&[vec![20, 5], vec![5, 20]]).ok_or("V undefined")?;
    check!((v - 0.6).abs() < 1e-12, "V = {v}");

    let same = pair_table(Categorical, Categorical, &[["a", "a"], ["b", "b"], ["c", "c"], ["a", "a"]]);
    let v = association(same.column(0), same.column(1)).value();
    check!(v == Some(1.0), "identical categoricals: {v:?}");

    let x = [1.0, 2.5, -3.0, 7.0, 0.0];
    let y: Vec<f64> = x.iter().map(|v| -4.0 * v + 11.0).collect();
    let r = abs_pearson(&x, &y).ok_or("r undefined")?;
    check!((r - 1.0).abs() < 1e-12, "affine |r| = {r}");

    let expect = |t: &RegistryTable, reason: NotComputableReason| -> Result<(), String> {
        let got = association(t.column(0), t.column(1));
        check!(got == Association::NotComputable(reason), "{reason:?}: {got:?}");
        Ok(())
    };
    expect(
        &pair_table(Numeric, Numeric, &[["1", "5"], ["1", "6"], ["1", "7"]]),
        NotComputableReason::ConstantData,
    )?;
    expect(
        &pair_table(Numeric, Numeric, &[["1", ""], ["2", ""], ["", "3"]]),
        NotComputableReason::NoOverlap,
    )?;
    expect(
        &pair_table(Numeric, Categorical, &[["1", "a"], ["2", "b"]]),
        NotComputableReason::TypeMismatch,
    )?;

    // random tables against the textbook formula
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..200 {
        let n = rng.random_range(2..60);
        let pairs: Vec<(u32, u32)> = (0..n).map(|_| (rng.random_range(0..4), rng.random_range(0..3))).collect();
        let labels: Vec<[String; 2]> = pairs.iter().map(|p| [format!("x{}", p.0), format!("y{}", p.1)]).collect();
        let rows: Vec<[&str; 2]> = labels.iter().map(|l| [l[0].as_str(), l[1].as_str()]).collect();
        let t = pair_table(Categorical, Categorical, &rows);
        let (got, want) = (association(t.column(0), t.column(1)).value(), association_oracle::cramers_v(&pairs));
        let agree = match (got, want) {
            (Some(a), Some(b)) => (a - b).abs() < 1e-9,
            (a, b) => a == b,
        };
        check!(agree, "random table {k}: {got:?} vs {want:?}");
    }
    Ok("V([[20,5],[5,20]]) = 0.6, identical V = 1, affine |r| = 1, 3 not-computable reasons, 200 random tables".into())
}

fn plausibility_rules() -> Outcome {
    let tx = 1000;
    let with = |f: &dyn Fn(&mut RecipientDates)| {
        let mut d = RecipientDates::new("r", tx);
        f(&mut d);
        let (clean, disposition) = apply_plausibility(&d);
        (d, clean, disposition)
    };
    let (raw, clean, disp) = with(&|d| d.et_dd = Some(tx - 45));
    check!(disp == Disposition::ExcludeRecipient && clean == raw, "45 days early: {disp:?}");
    let (_, _, disp) = with(&|d| d.et_gfd = Some(tx - 31));
    check!(disp == Disposition::ExcludeRecipient, "31 days early: {disp:?}");
    let (_, clean, disp) = with(&|d| d.iqtig_gfd = Some(tx - 10));
    check!(clean.iqtig_gfd == Some(tx), "10 days early recodes to tx: {:?}", clean.iqtig_gfd);
    check!(disp == Disposition::Retained { recoded: 1, nulled: 0 }, "{disp:?}");
    let (_, clean, _) = with(&|d| d.et_gfd = Some(tx - 30));
    check!(clean.et_gfd == Some(tx), "30 days early recodes: {:?}", clean.et_gfd);
    let (_, clean, disp) = with(&|d| d.reported_lfud = Some(tx + 5478));
    check!(clean.reported_lfud.is_none(), "15 years after tx is dropped");
    check!(disp == Disposition::Retained { recoded: 0, nulled: 1 }, "{disp:?}");
    let (_, clean, _) = with(&|d| d.reported_lfud = Some(tx + 5477));
    check!(clean.reported_lfud == Some(tx + 5477), "just under 15 years is kept");
    let (raw, clean, disp) = with(&|d| {
        d.et_dd = Some(tx - 45);
        d.derived_lfud = Some(tx - 5);
    });
    check!(disp == Disposition::ExcludeRecipient && clean == raw, "exclusion must win: {disp:?}");
    Ok("exclude > 30 days early, recode within 30 days, drop >= 15 years, exclusion first".into())
}

fn records(pairs: &[(f64, bool)]) -> Vec<SurvivalRecord> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, &(t, e))| SurvivalRecord::new(format!("r{i}"), t, e))
        .collect()
}

fn km_oracle() -> Outcome {
    let curve = kaplan_meier(&records(&[(1.0, true), (1.0, false), (2.0, true), (3.0, false)]))
        .map_err(|e| e.to_string())?;
    check!(curve.survival_at(1.0) == 0.75, "S(1) = {}", curve.survival_at(1.0));
    check!(curve.survival_at(2.0) == 0.375, "S(2) = {}", curve.survival_at(2.0));

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for k in 0..50 {
        let n = rng.random_range(1..=300);
        let times: Vec<f64> = (0..n).map(|_| rng.random_range(0..1000) as f64).collect();
        let pairs: Vec<(f64, bool)> = times.iter().map(|&t| (t, true)).collect();
        let curve = kaplan_meier(&records(&pairs)).map_err(|e| e.to_string())?;
        for t in (0..=1000).step_by(7).map(f64::from) {
            let (s, e) = (curve.survival_at(t), km_oracle::empirical_survivor(&times, t));
            check!((s - e).abs() < 1e-12, "cohort {k} at {t}: {s} vs {e}");
        }
        // with censoring, against direct evaluation of the product
        let censored: Vec<(f64, bool)> = times.iter().map(|&t| (t, rng.random::<bool>())).collect();
        let curve = kaplan_meier(&records(&censored)).map_err(|e| e.to_string())?;
        for t in (0..=1000).step_by(7).map(f64::from) {
            let (s, e) = (curve.survival_at(t), km_oracle::survival_at(&censored, t));
            check!((s - e).abs() < 1e-12, "censored cohort {k} at {t}: {s} vs {e}");
        }
    }
    Ok("S(1) = 0.75, S(2) = 0.375; 50 uncensored cohorts equal the empirical survivor".into())
}

fn outcome_ordering() -> Outcome {
    let schema = SchemaConfig::from_path(fixture("outcome_ordering/bundle/schema.toml"))
        .map_err(|e| e.to_string())?;
    let et_config = schema.eventtime.clone().ok_or("fixture has no [eventtime]")?;
    let bundle = load_bundle(&schema).map_err(|e| e.to_string())?;
    let result = derive_cohort(&bundle, &et_config, &OutcomeDefinition::ALL).map_err(|e| e.to_string())?;
    let curve = |def| -> Result<KmCurve, String> {
        kaplan_meier(&result.records(def)).map_err(|e| e.to_string())
    };
    let (et, iqtig, combined) = (
        curve(OutcomeDefinition::Et)?,
        curve(OutcomeDefinition::Iqtig)?,
        curve(OutcomeDefinition::Combined)?,
    );
    let mut checked = 0;
    for t in combined.event_times() {
        let (a, b, c) = (et.survival_at(t), iqtig.survival_at(t), combined.survival_at(t));
        check!(a.min(b) <= c && c <= a.max(b), "t = {t}: et {a}, iqtig {b}, combined {c}");
        checked += 1;
    }
    check!(checked > 0, "combined curve has no events");
    Ok(format!("combined between et and iqtig at all {checked} event times"))
}

fn regida(args: &[&str]) -> Result<Duration, String> {
    let started = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_regida"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    check!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    Ok(started.elapsed())
}

/// Peak resident set size over all waited-for child processes, in bytes.
fn children_peak_rss() -> u64 {
    // SAFETY: getrusage only writes into the zeroed struct we pass.
    let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
    unsafe { libc::getrusage(libc::RUSAGE_CHILDREN, &mut usage) };
    usage.ru_maxrss as u64 * 1024
}

fn outputs(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    for e in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let p = e.map_err(|e| e.to_string())?.path();
        let name = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
        if name != "manifest.json" {
            files.insert(name, fs::read(&p).map_err(|e| e.to_string())?);
        }
    }
    Ok(files)
}

fn scale_and_determinism() -> Outcome {
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = |name: &str| work.path().join(name).to_string_lossy().into_owned();
    let preset = fixture("registry_like.toml").to_string_lossy().into_owned();
    let synth = regida(&["synth", "--synth-config", &preset, "--out-dir", &dir("bundle")])?;
    let schema = dir("bundle/schema.toml");
    let first = regida(&["run", "--config", &schema, "--out-dir", &dir("run1")])?;
    let second = regida(&["run", "--config", &schema, "--out-dir", &dir("run2")])?;
    let peak = children_peak_rss();

    let slowest = first.max(second);
    check!(slowest < Duration::from_secs(60), "pipeline took {}", secs(slowest));
    check!(peak < 2 << 30, "peak memory {} MB", peak >> 20);
    let (a, b) = (outputs(work.path().join("run1").as_path())?, outputs(work.path().join("run2").as_path())?);
    check!(a.len() >= 10, "only {} report files", a.len());
    check!(a.keys().eq(b.keys()), "different report sets");
    for (name, bytes) in &a {
        check!(bytes == &b[name], "{name} differs between runs");
    }
    Ok(format!(
        "15000 recipients, 25 tables: synth {}, pipeline {} and {}, peak {} MB, {} reports identical",
        secs(synth),
        secs(first),
        secs(second),
        peak >> 20,
        a.len()
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("missingness oracle equivalence", missingness_equivalence),
        ("flux identities", flux_identities),
        ("tree recovery", tree_recovery),
        ("tree vs exhaustive oracle", tree_vs_exhaustive),
        ("association oracles", association_oracles),
        ("plausibility rules", plausibility_rules),
        ("Kaplan-Meier oracle", km_oracle),
        ("outcome-definition ordering", outcome_ordering),
        ("scale and determinism", scale_and_determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (k, (name, criterion)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(criterion))
            .unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Err(format!("panicked: {msg}"))
            });
        match outcome {
            Ok(detail) => println!("PASS  criterion {}: {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL  criterion {}: {name}: {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
