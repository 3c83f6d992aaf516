use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use traitsim_core::analytics::{
    figure_series, rates, rates_tsv, table4_tsv, tally, validate_table, FigureSeries,
};
use traitsim_core::consistency::{
    read_score_sheets, stability_metrics, table3_tsv, write_score_sheets,
};
use traitsim_core::domain::{default_roster, roster_hash};
use traitsim_core::persist::{read_transcript, transcript_file_name, JsonlDirSink};
use traitsim_core::protocol::score_sheets;
use traitsim_core::stance::to_stance_pair;
use traitsim_core::{
    run_trial, AgentProfile, ChatBackend, ConsistencyResult, Phase, RateSummary, ResponseTable,
    SamplingParams, ScoreSheet, StanceLexicon, StanceMode, StancePair, Transcript, TrialConfig,
    TrialStatus, ValidationReport,
};

use crate::config::{ExperimentConfig, StanceModeKind};
use crate::error::{io_error, CliError};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRANSCRIPT_DIR: &str = "transcripts";
pub const PRE_SCORES_FILE: &str = "scores_pre.jsonl";
pub const POST_SCORES_FILE: &str = "scores_post.jsonl";

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io_error(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialEntry {
    pub trial_id: u32,
    pub seed: u64,
    pub file: String,
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub config_hash: String,
    pub lexicon_hash: String,
    pub templates_hash: String,
    pub questionnaire_hash: String,
    pub roster_hash: String,
    pub backend: String,
    pub base_seed: u64,
    pub context_sharing: bool,
    pub trials: Vec<TrialEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_scores: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_scores: Option<String>,
}

/// Seed of trial `i`: consecutive from the base seed.
pub fn trial_seed(base_seed: u64, trial_id: u32) -> u64 {
    base_seed.wrapping_add(u64::from(trial_id))
}

/// Runs every trial, writing `transcripts/trial_NNNN.jsonl`, the score files
/// and `manifest.json` under the output directory. File contents do not
/// depend on `jobs`.
pub fn cmd_run(config: &ExperimentConfig, jobs: usize) -> Result<Manifest, CliError> {
    let resources = config.resources()?;
    let backend = config.backend(&resources)?;
    let out = &config.output_dir;
    let sink =
        JsonlDirSink::new(out.join(TRANSCRIPT_DIR)).map_err(|e| CliError::Config(e.to_string()))?;
    let classroom = &resources.classroom;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<Transcript, CliError>> = pool.install(|| {
        (0..config.trials)
            .into_par_iter()
            .map(|trial_id| {
                let mut trial = TrialConfig::new(
                    trial_id,
                    trial_seed(config.base_seed, trial_id),
                    &classroom.roster,
                );
                trial.context_sharing = config.context_sharing;
                trial.consistency_enabled = config.consistency;
                trial.sampling = config.sampling.clone();
                run_trial(&trial, classroom, backend.as_ref(), &sink)
                    .map_err(|e| CliError::Config(e.to_string()))
            })
            .collect()
    });
    let transcripts = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut manifest = Manifest {
        schema_version: 1,
        config_hash: config.semantic_hash(&resources),
        lexicon_hash: resources.lexicon.content_hash(),
        templates_hash: classroom.templates.content_hash(),
        questionnaire_hash: classroom.questionnaire.content_hash(),
        roster_hash: roster_hash(&classroom.roster),
        backend: backend.name().to_string(),
        base_seed: config.base_seed,
        context_sharing: config.context_sharing,
        trials: transcripts
            .iter()
            .map(|t| TrialEntry {
                trial_id: t.trial_config.trial_id,
                seed: t.trial_config.seed,
                file: format!(
                    "{TRANSCRIPT_DIR}/{}",
                    transcript_file_name(t.trial_config.trial_id)
                ),
                complete: t.is_complete(),
                abort_reason: match &t.status {
                    TrialStatus::Aborted { reason } => Some(reason.clone()),
                    TrialStatus::Complete => None,
                },
            })
            .collect(),
        pre_scores: None,
        post_scores: None,
    };

    if config.consistency {
        let sheets: Vec<ScoreSheet> = transcripts
            .iter()
            .filter(|t| t.is_complete())
            .flat_map(score_sheets)
            .collect();
        for (phase, name) in [
            (Phase::Pre, PRE_SCORES_FILE),
            (Phase::Post, POST_SCORES_FILE),
        ] {
            let of_phase: Vec<ScoreSheet> = sheets
                .iter()
                .filter(|s| s.phase == phase)
                .cloned()
                .collect();
            write_file(&out.join(name), &write_score_sheets(&of_phase))?;
        }
        manifest.pre_scores = Some(PRE_SCORES_FILE.into());
        manifest.post_scores = Some(POST_SCORES_FILE.into());
    }
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_file(&out.join(MANIFEST_FILE), &json)?;

    let aborted = manifest.trials.iter().filter(|t| !t.complete).count();
    if aborted > 0 {
        return Err(CliError::Backend(format!(
            "{aborted} of {} trials aborted; see {}",
            manifest.trials.len(),
            out.join(MANIFEST_FILE).display()
        )));
    }
    Ok(manifest)
}

/// Transcript files named by `inputs`: files as given, directories scanned
/// for `trial_*.jsonl` (directly or in a `transcripts/` subdirectory).
pub fn collect_transcript_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_file() {
            files.push(input.clone());
            continue;
        }
        if !input.is_dir() {
            return Err(CliError::Config(format!(
                "{} does not exist",
                input.display()
            )));
        }
        let dir = if input.join(TRANSCRIPT_DIR).is_dir() {
            input.join(TRANSCRIPT_DIR)
        } else {
            input.clone()
        };
        let mut found: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| io_error(&dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension().is_some_and(|x| x == "jsonl")
                    && p.file_name()
                        .and_then(|n| n.to_str())
                        .is_some_and(|n| n.starts_with("trial_"))
            })
            .collect();
        found.sort();
        files.extend(found);
    }
    Ok(files)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub tables: Vec<ResponseTable>,
    pub rates: Vec<RateSummary>,
    pub figure: FigureSeries,
    pub report: ValidationReport,
    pub warnings: Vec<String>,
}

impl Analysis {
    pub fn write_to(&self, dir: &Path) -> Result<(), CliError> {
        create_dir(dir)?;
        write_file(&dir.join("table4.tsv"), &table4_tsv(&self.tables))?;
        write_file(&dir.join("rates.tsv"), &rates_tsv(&self.rates))?;
        let figure = serde_json::to_string_pretty(&self.figure).expect("figure serializes") + "\n";
        write_file(&dir.join("figure_series.json"), &figure)
    }
}

/// tally -> validate -> rates -> figure series.
pub fn analyze_pairs(
    pairs: &[StancePair],
    roster: &[AgentProfile],
    opportunities: u64,
) -> Result<Analysis, CliError> {
    let tables = tally(pairs, roster).map_err(|e| CliError::Validation(e.to_string()))?;
    let mut report = ValidationReport::default();
    let mut summaries = Vec::new();
    let mut warnings = Vec::new();
    for table in &tables {
        report.extend(validate_table(table));
        if table.total == 0 {
            warnings.push(format!(
                "{}: no classified responses; rates omitted",
                table.trait_label
            ));
            continue;
        }
        match rates(table, opportunities) {
            Ok(r) => summaries.push(r),
            Err(e) => warnings.push(e.to_string()),
        }
    }
    Ok(Analysis {
        figure: figure_series(&tables),
        tables,
        rates: summaries,
        report,
        warnings,
    })
}

/// Classifies every evaluation of the complete transcripts. Aborted trials
/// are skipped with a warning.
pub fn analyze_transcripts(
    transcripts: &[Transcript],
    mode: StanceMode<'_>,
) -> Result<Analysis, CliError> {
    let mut warnings = Vec::new();
    let complete: Vec<&Transcript> = transcripts
        .iter()
        .filter(|t| {
            if !t.is_complete() {
                warnings.push(format!(
                    "trial {} is incomplete and was excluded",
                    t.trial_config.trial_id
                ));
            }
            t.is_complete()
        })
        .collect();
    let Some(first) = complete.first() else {
        warnings.push("no complete transcripts to analyze".to_string());
        return Ok(Analysis {
            tables: Vec::new(),
            rates: Vec::new(),
            figure: FigureSeries {
                records: Vec::new(),
            },
            report: ValidationReport::default(),
            warnings,
        });
    };
    let roster = &first.roster_snapshot;
    let mut pairs = Vec::new();
    for t in &complete {
        if t.roster_snapshot != *roster {
            return Err(CliError::Validation(format!(
                "trial {} uses a different roster from trial {}",
                t.trial_config.trial_id, first.trial_config.trial_id
            )));
        }
        for event in t.evaluations() {
            let (pair, notes) = to_stance_pair(event, t.trial_config.trial_id, roster, mode)
                .map_err(|e| match e {
                    traitsim_core::stance::StanceError::Backend(b) => {
                        CliError::Backend(b.to_string())
                    }
                    other => CliError::Validation(other.to_string()),
                })?;
            warnings.extend(notes);
            pairs.push(pair);
        }
    }
    let opportunities = complete.len() as u64 * (roster.len() as u64).saturating_sub(1);
    let mut analysis = analyze_pairs(&pairs, roster, opportunities)?;
    warnings.append(&mut analysis.warnings);
    analysis.warnings = warnings;
    Ok(analysis)
}

pub fn read_transcripts(files: &[PathBuf]) -> Result<Vec<Transcript>, CliError> {
    files
        .iter()
        .map(|f| read_transcript(f).map_err(|e| CliError::Config(e.to_string())))
        .collect()
}

/// One JSON stance pair per line.
pub fn read_pairs(path: &Path) -> Result<Vec<StancePair>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| CliError::Config(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub struct StanceSetup {
    pub lexicon: StanceLexicon,
    pub judge: Option<Box<dyn ChatBackend>>,
    pub sampling: SamplingParams,
}

impl StanceSetup {
    pub fn new(config: &ExperimentConfig, mode: StanceModeKind) -> Result<Self, CliError> {
        let resources = config.resources()?;
        let judge = match mode {
            StanceModeKind::Rule => None,
            StanceModeKind::Judge => Some(config.backend(&resources)?),
        };
        Ok(Self {
            lexicon: resources.lexicon,
            judge,
            sampling: config.sampling.clone(),
        })
    }

    pub fn mode(&self) -> StanceMode<'_> {
        match &self.judge {
            Some(backend) => StanceMode::Judge {
                backend: backend.as_ref(),
                params: &self.sampling,
            },
            None => StanceMode::Rule(&self.lexicon),
        }
    }
}

pub fn analysis_failure(analysis: &Analysis) -> Option<CliError> {
    (!analysis.report.is_valid()).then(|| {
        CliError::Validation(format!(
            "response tables failed validation:\n{}",
            analysis.report
        ))
    })
}

/// Number of distinct trials among the pairs times the foreign claims each
/// evaluator sees.
pub fn pair_opportunities(pairs: &[StancePair], roster: &[AgentProfile]) -> u64 {
    let trials: BTreeSet<u32> = pairs.iter().map(|p| p.trial_id).collect();
    trials.len() as u64 * (roster.len() as u64).saturating_sub(1)
}

/// Per-trait stability rows, in roster order, from paired pre/post sheets.
pub fn cmd_consistency(
    pre: &[ScoreSheet],
    post: &[ScoreSheet],
    roster: &[AgentProfile],
    threshold: f64,
) -> Result<Vec<ConsistencyResult>, CliError> {
    let mut by_trait: BTreeMap<&str, (Vec<ScoreSheet>, Vec<ScoreSheet>)> = BTreeMap::new();
    for s in pre {
        if s.phase != Phase::Pre {
            return Err(CliError::Validation(format!(
                "trial {}: post-test sheet in the pre-test file",
                s.trial_id
            )));
        }
        by_trait
            .entry(&s.trait_label)
            .or_default()
            .0
            .push(s.clone());
    }
    for s in post {
        if s.phase != Phase::Post {
            return Err(CliError::Validation(format!(
                "trial {}: pre-test sheet in the post-test file",
                s.trial_id
            )));
        }
        by_trait
            .entry(&s.trait_label)
            .or_default()
            .1
            .push(s.clone());
    }
    let position = |label: &str| {
        roster
            .iter()
            .position(|a| a.label() == label)
            .unwrap_or(usize::MAX)
    };
    let mut labels: Vec<&str> = by_trait.keys().copied().collect();
    labels.sort_by_key(|l| (position(l), l.to_string()));
    labels
        .into_iter()
        .map(|label| {
            let (pre, post) = &by_trait[label];
            stability_metrics(label, pre, post, threshold)
                .map_err(|e| CliError::Validation(format!("{label}: {e}")))
        })
        .collect()
}

pub fn read_sheets(path: &Path) -> Result<Vec<ScoreSheet>, CliError> {
    read_score_sheets(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Bundles analysis of a run directory into `out`: the response tables,
/// rates and figure series, plus the stability table when score files exist.
pub fn cmd_report(
    run_dir: &Path,
    out: &Path,
    setup: &StanceSetup,
    threshold: f64,
) -> Result<Analysis, CliError> {
    let files = collect_transcript_files(&[run_dir.to_path_buf()])?;
    let transcripts = read_transcripts(&files)?;
    let analysis = analyze_transcripts(&transcripts, setup.mode())?;
    analysis.write_to(out)?;
    let (pre, post) = (
        run_dir.join(PRE_SCORES_FILE),
        run_dir.join(POST_SCORES_FILE),
    );
    if pre.is_file() && post.is_file() {
        let roster = transcripts
            .first()
            .map(|t| t.roster_snapshot.clone())
            .unwrap_or_else(default_roster);
        let results = cmd_consistency(
            &read_sheets(&pre)?,
            &read_sheets(&post)?,
            &roster,
            threshold,
        )?;
        write_file(&out.join("table3.tsv"), &table3_tsv(&results))?;
    }
    Ok(analysis)
}
