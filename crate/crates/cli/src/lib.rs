//! `traitsim` command line: run experiments, analyze transcripts, compute
//! questionnaire stability, validate tables and bundle reports.
//!
//! Exit codes: 0 success, 1 usage, 2 configuration or input, 3 backend,
//! 4 validation.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use traitsim_core::analytics::{parse_table4_tsv, table4_tsv, validate_table};
use traitsim_core::consistency::table3_tsv;
use traitsim_core::domain::validate_roster;
use traitsim_core::ValidationReport;

use commands::{
    analysis_failure, analyze_pairs, analyze_transcripts, cmd_consistency, cmd_report, cmd_run,
    collect_transcript_files, pair_opportunities, read_pairs, read_sheets, read_transcripts,
    StanceSetup,
};
use config::{BackendKind, ExperimentConfig, StanceModeKind};
use error::{io_error, CliError};

#[derive(Debug, Parser)]
#[command(
    name = "traitsim",
    version,
    about = "Persona classroom misinformation simulator"
)]
pub struct Cli {
    /// Log more (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Experiment config (TOML). Built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        match &self.config {
            Some(path) => ExperimentConfig::load(path),
            None => Ok(ExperimentConfig::default()),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run trials and write transcripts, score files and a manifest.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        trials: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        backend: Option<BackendKind>,
        /// Trials run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stability table from paired pre/post score files.
    Consistency {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        pre: PathBuf,
        #[arg(long)]
        post: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Response tables, rates and figure series from transcripts.
    Analyze {
        #[command(flatten)]
        config: ConfigArgs,
        /// Transcript files or directories; stance-pair files with --pairs.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<StanceModeKind>,
        /// Inputs are classified stance pairs rather than transcripts.
        #[arg(long)]
        pairs: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a response table file for feasibility, or a config when no file is given.
    Validate {
        #[command(flatten)]
        config: ConfigArgs,
        table: Option<PathBuf>,
        /// Evaluation opportunities per trait; totals above it are rejected.
        #[arg(long)]
        opportunities: Option<u64>,
    },
    /// Analyze a run directory into one bundle of tables and series.
    Report {
        #[command(flatten)]
        config: ConfigArgs,
        run_dir: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<StanceModeKind>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn print(text: &str) {
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(text.as_bytes());
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        log::warn!("{w}");
    }
}

fn write_out(out: &Option<PathBuf>, name: &str, text: &str) -> Result<(), CliError> {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| io_error(&path, e))?;
    }
    Ok(())
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            trials,
            seed,
            backend,
            jobs,
            out,
        } => {
            let mut config = config.load()?;
            if let Some(t) = trials {
                config.trials = t;
            }
            if let Some(s) = seed {
                config.base_seed = s;
            }
            if let Some(b) = backend {
                config.backend = b;
            }
            if let Some(o) = out {
                config.output_dir = o;
            }
            config.validate()?;
            let manifest = cmd_run(&config, jobs)?;
            println!(
                "{} trials written to {}",
                manifest.trials.len(),
                config.output_dir.display()
            );
            Ok(())
        }
        Command::Consistency {
            config,
            pre,
            post,
            threshold,
            out,
        } => {
            let config = config.load()?;
            let resources = config.resources()?;
            let threshold = threshold.unwrap_or(config.consistency_threshold);
            let results = cmd_consistency(
                &read_sheets(&pre)?,
                &read_sheets(&post)?,
                &resources.classroom.roster,
                threshold,
            )?;
            let tsv = table3_tsv(&results);
            write_out(&out, "table3.tsv", &tsv)?;
            print(&tsv);
            Ok(())
        }
        Command::Analyze {
            config,
            inputs,
            mode,
            pairs,
            out,
        } => {
            let config = config.load()?;
            let analysis = if pairs {
                let roster = config.resources()?.classroom.roster;
                let mut all = Vec::new();
                for input in &inputs {
                    all.extend(read_pairs(input)?);
                }
                analyze_pairs(&all, &roster, pair_opportunities(&all, &roster))?
            } else {
                let setup = StanceSetup::new(&config, mode.unwrap_or(config.stance_mode))?;
                let files = collect_transcript_files(&inputs)?;
                analyze_transcripts(&read_transcripts(&files)?, setup.mode())?
            };
            warn_all(&analysis.warnings);
            if let Some(dir) = &out {
                analysis.write_to(dir)?;
            }
            print(&table4_tsv(&analysis.tables));
            analysis_failure(&analysis).map_or(Ok(()), Err)
        }
        Command::Validate {
            config,
            table,
            opportunities,
        } => {
            let config = config.load()?;
            let Some(table) = table else {
                let resources = config.resources()?;
                let report = validate_roster(&resources.classroom.roster);
                if !report.is_valid() {
                    return Err(CliError::Validation(report.to_string()));
                }
                println!("config ok");
                return Ok(());
            };
            let text = std::fs::read_to_string(&table).map_err(|e| io_error(&table, e))?;
            let tables = parse_table4_tsv(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", table.display())))?;
            validate_tables(&tables, opportunities)
        }
        Command::Report {
            config,
            run_dir,
            mode,
            out,
        } => {
            let config = config.load()?;
            let setup = StanceSetup::new(&config, mode.unwrap_or(config.stance_mode))?;
            let out = out.unwrap_or_else(|| run_dir.join("report"));
            let analysis = cmd_report(&run_dir, &out, &setup, config.consistency_threshold)?;
            warn_all(&analysis.warnings);
            println!("report written to {}", out.display());
            analysis_failure(&analysis).map_or(Ok(()), Err)
        }
    }
}

fn validate_tables(
    tables: &[traitsim_core::ResponseTable],
    opportunities: Option<u64>,
) -> Result<(), CliError> {
    let mut failed = 0;
    for t in tables {
        let mut report: ValidationReport = validate_table(t);
        if let Some(cap) = opportunities.filter(|&cap| t.total > cap) {
            report.push(
                traitsim_core::validation::Rule::DiffCap,
                format!(
                    "{}: total {} exceeds {cap} opportunities",
                    t.trait_label, t.total
                ),
            );
        }
        if report.is_valid() {
            println!("{}\tok", t.trait_label);
        } else {
            failed += 1;
            println!("{}\tinvalid", t.trait_label);
            for f in &report.findings {
                println!("  {}", f.message);
            }
        }
    }
    if failed > 0 {
        return Err(CliError::Validation(format!(
            "{failed} of {} tables are infeasible",
            tables.len()
        )));
    }
    Ok(())
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    init_logging(cli.verbose);
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Convenience for tests: the transcripts directory of a run.
pub fn transcripts_dir(run_dir: &Path) -> PathBuf {
    run_dir.join(commands::TRANSCRIPT_DIR)
}
