//! Command-line orchestration: loads a bundle, runs the analyses and writes
//! deterministic report files plus one `manifest.json` per run.
//!
//! Every command computes all of its outputs in memory before the first
//! file is written, and each file is written to a temporary name and
//! renamed into place, so a failing run leaves no partial reports.

mod error;
pub mod format;
mod output;
pub mod reports;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use regida_core::eventtime::{self, EventTimeError, OutcomeDefinition};
use regida_core::ingest::{
    apply_cohort_filter, discover_multisource_groups, load_bundle, Bundle, SchemaConfig,
};
use regida_core::synth::{self, SynthConfig, SynthError};

pub use error::{CliError, EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL, EXIT_OK};
pub use output::Manifest;
use reports::{Report, Selection};

#[derive(Debug, Parser)]
#[command(
    name = "regida",
    version,
    about = "Provider-aware completeness and consistency reports for registry exports"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate a bundle; writes ingest_summary.csv.
    Ingest(IngestArgs),
    /// Provider-adjusted proportion of missing values per column.
    Missingness(AnalysisArgs),
    /// Influx and outflux per column.
    Flux(AnalysisArgs),
    /// Missingness-structure trees per (table, provider).
    Tree(AnalysisArgs),
    /// Agreement and usable cases between multi-sourced columns.
    Consistency(AnalysisArgs),
    /// Event-time cohort per outcome definition.
    Eventtime(AnalysisArgs),
    /// Kaplan-Meier curves per outcome definition.
    Km(AnalysisArgs),
    /// Every analysis in one output directory.
    Run(AnalysisArgs),
    /// Generate a synthetic bundle with its ground-truth ledger.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    /// Schema config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct AnalysisArgs {
    /// Schema config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Seed of the train/test split; overrides the config's `tree.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Restrict table-level analyses to these tables (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub tables: Vec<String>,
    /// Restrict missingness, flux and tree output to one provider.
    #[arg(long)]
    pub provider: Option<String>,
    /// Outcome definition: et, iqtig, combined or all.
    #[arg(long, default_value = "all")]
    pub definition: String,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Generator config (TOML).
    #[arg(long)]
    pub synth_config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Missingness(_) => "missingness",
            Command::Flux(_) => "flux",
            Command::Tree(_) => "tree",
            Command::Consistency(_) => "consistency",
            Command::Eventtime(_) => "eventtime",
            Command::Km(_) => "km",
            Command::Run(_) => "run",
            Command::Synth(_) => "synth",
        }
    }

    pub fn out_dir(&self) -> &Path {
        match self {
            Command::Ingest(a) => &a.out_dir,
            Command::Synth(a) => &a.out_dir,
            Command::Missingness(a)
            | Command::Flux(a)
            | Command::Tree(a)
            | Command::Consistency(a)
            | Command::Eventtime(a)
            | Command::Km(a)
            | Command::Run(a) => &a.out_dir,
        }
    }
}

/// Files written by one command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    /// Paths relative to `out_dir`, manifest last.
    pub files: Vec<String>,
}

/// Parses `args` (including the program name), runs the command, prints
/// errors to stderr and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<RunOutcome, CliError> {
    let started = Instant::now();
    let mut manifest = Manifest::new(cli.command.name());
    let reports = match &cli.command {
        Command::Ingest(a) => {
            manifest.config = Some(a.config.display().to_string());
            ingest(a)?
        }
        Command::Synth(a) => {
            manifest.config = Some(a.synth_config.display().to_string());
            return synth_command(a, manifest, started);
        }
        Command::Missingness(a)
        | Command::Flux(a)
        | Command::Tree(a)
        | Command::Consistency(a)
        | Command::Eventtime(a)
        | Command::Km(a)
        | Command::Run(a) => {
            manifest.config = Some(a.config.display().to_string());
            analysis(&cli.command, a, &mut manifest)?
        }
    };
    output::write_reports(cli.command.out_dir(), reports, manifest, started)
}

fn load_config(path: &Path) -> Result<SchemaConfig, CliError> {
    SchemaConfig::from_path(path).map_err(CliError::Config)
}

fn ingest(args: &IngestArgs) -> Result<Vec<Report>, CliError> {
    let config = load_config(&args.config)?;
    let loaded = load_bundle(&config).map_err(CliError::Load)?;
    let groups = discover_multisource_groups(&config).map_err(CliError::Config)?;
    let rows: Vec<_> = loaded.tables.iter().map(|t| t.n_rows()).collect();
    let cohort = apply_cohort_filter(loaded, config.cohort.as_ref()).map_err(CliError::Load)?;
    Ok(vec![reports::ingest_summary_counts(&config, &cohort, &rows, &groups)])
}

fn selection(bundle: &Bundle, args: &AnalysisArgs) -> Result<Selection, CliError> {
    for t in &args.tables {
        if bundle.table(t).is_none() {
            return Err(CliError::Usage(format!("--tables: unknown table `{t}`")));
        }
    }
    let provider = match &args.provider {
        Some(p) => Some(
            bundle
                .providers
                .id(p)
                .ok_or_else(|| CliError::Usage(format!("--provider: unknown provider `{p}`")))?,
        ),
        None => None,
    };
    Ok(Selection {
        tables: (!args.tables.is_empty()).then(|| args.tables.clone()),
        provider,
    })
}

fn definitions(text: &str) -> Result<Vec<OutcomeDefinition>, CliError> {
    if text.eq_ignore_ascii_case("all") {
        return Ok(OutcomeDefinition::ALL.to_vec());
    }
    OutcomeDefinition::parse(text).map(|d| vec![d]).ok_or_else(|| {
        CliError::Usage(format!(
            "--definition: expected et, iqtig, combined or all, got `{text}`"
        ))
    })
}

fn analysis(
    command: &Command,
    args: &AnalysisArgs,
    manifest: &mut Manifest,
) -> Result<Vec<Report>, CliError> {
    let defs = definitions(&args.definition)?;
    let config = load_config(&args.config)?;
    let all = matches!(command, Command::Run(_));
    let mut out = Vec::new();
    let loaded = load_bundle(&config).map_err(CliError::Load)?;
    let groups = discover_multisource_groups(&config).map_err(CliError::Config)?;
    let bundle = if all {
        // row counts before and after the cohort filter
        let summary_rows: Vec<_> = loaded.tables.iter().map(|t| t.n_rows()).collect();
        let bundle = apply_cohort_filter(loaded, config.cohort.as_ref()).map_err(CliError::Load)?;
        out.push(reports::ingest_summary_counts(&config, &bundle, &summary_rows, &groups));
        bundle
    } else {
        apply_cohort_filter(loaded, config.cohort.as_ref()).map_err(CliError::Load)?
    };
    let sel = selection(&bundle, args)?;
    let mut params = config.tree.clone().unwrap_or_default();
    if let Some(seed) = args.seed {
        params.seed = seed;
    }
    manifest.seed = Some(params.seed);
    manifest.tables = sel.tables.clone();
    manifest.provider = args.provider.clone();
    manifest.definitions = defs.iter().map(|d| d.as_str().to_string()).collect();

    if all || matches!(command, Command::Missingness(_)) {
        out.push(reports::missingness(&bundle, &sel));
    }
    if all || matches!(command, Command::Flux(_)) {
        out.push(reports::flux(&bundle, &sel));
    }
    if all || matches!(command, Command::Tree(_)) {
        out.extend(reports::trees(&bundle, &sel, &params));
    }
    if all || matches!(command, Command::Consistency(_)) {
        let groups: Vec<_> = groups
            .into_iter()
            .filter(|g| sel.tables.as_ref().is_none_or(|t| t.contains(&g.table)))
            .collect();
        out.extend(reports::consistency(&bundle, &groups));
    }
    let wants_cohort = matches!(command, Command::Eventtime(_));
    let wants_km = matches!(command, Command::Km(_));
    if all && config.eventtime.is_none() {
        manifest.skipped.push("eventtime: no [eventtime] section in the config".into());
    } else if all || wants_cohort || wants_km {
        let et = config.eventtime.as_ref().ok_or(CliError::EventTime {
            context: "config".into(),
            source: EventTimeError::NotConfigured,
        })?;
        let result = eventtime::derive_cohort(&bundle, et, &defs).map_err(|source| {
            CliError::EventTime {
                context: "event-time derivation".into(),
                source,
            }
        })?;
        if all || wants_cohort {
            out.extend(reports::cohort(&result));
        }
        if all || wants_km {
            let curves = reports::km_curves(&result, &defs)?;
            out.push(reports::km(&curves));
        }
    }
    Ok(out)
}

fn synth_command(args: &SynthArgs, mut manifest: Manifest, started: Instant) -> Result<RunOutcome, CliError> {
    let text = std::fs::read_to_string(&args.synth_config).map_err(|e| {
        CliError::Synth(SynthError::Parse(format!(
            "cannot read `{}`: {e}",
            args.synth_config.display()
        )))
    })?;
    let mut config: SynthConfig = toml_config(&text)?;
    if let Some(seed) = args.seed {
        config.seed = Some(seed);
    }
    config.validate()?;
    manifest.seed = config.seed;
    let written = synth::write_bundle(&config, &args.out_dir)?;
    let mut files: Vec<String> = written
        .tables
        .iter()
        .map(|(_, path, _)| file_name(path))
        .collect();
    files.push(file_name(&written.schema));
    files.push(file_name(&written.ledger));
    output::write_manifest(&args.out_dir, files, manifest, started)
}

/// Parses without validating so a `--seed` can still fill in a missing seed.
fn toml_config(text: &str) -> Result<SynthConfig, CliError> {
    SynthConfig::from_toml_str_unchecked(text).map_err(CliError::Synth)
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}
