//! Experiment configuration (TOML) and the resources it points at.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use traitsim_core::backend::{
    ChatBackend, HttpBackend, HttpConfig, MockBackend, MockPersonaParams,
};
use traitsim_core::consistency::{Questionnaire, DEFAULT_THRESHOLD};
use traitsim_core::domain::{default_roster_with, load_roster, roster_hash};
use traitsim_core::{Classroom, SamplingParams, StanceLexicon, TemplateSet};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StanceModeKind {
    Rule,
    Judge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub trials: u32,
    pub base_seed: u64,
    pub context_sharing: bool,
    /// Administer the pre/post questionnaires.
    pub consistency: bool,
    pub consistency_threshold: f64,
    pub stance_mode: StanceModeKind,
    pub backend: BackendKind,
    pub lexicon: Option<PathBuf>,
    pub questionnaire: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub roster: Option<PathBuf>,
    /// JSON file of per-trait mock parameters; the calibrated defaults otherwise.
    pub mock_params: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub sampling: SamplingParams,
    pub http: HttpConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            trials: 50,
            base_seed: 42,
            context_sharing: true,
            consistency: true,
            consistency_threshold: DEFAULT_THRESHOLD,
            stance_mode: StanceModeKind::Rule,
            backend: BackendKind::Mock,
            lexicon: None,
            questionnaire: None,
            templates: None,
            roster: None,
            mock_params: None,
            output_dir: PathBuf::from("out"),
            sampling: SamplingParams::default(),
            http: HttpConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses a TOML file. Relative paths are taken relative to the file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: Self = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut config.lexicon,
            &mut config.questionnaire,
            &mut config.templates,
            &mut config.roster,
            &mut config.mock_params,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if config.output_dir.is_relative() {
            config.output_dir = base.join(&config.output_dir);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.trials == 0 {
            return Err(CliError::Config("trials must be at least 1".into()));
        }
        if !(0.0..=5.0).contains(&self.consistency_threshold) {
            return Err(CliError::Config(
                "consistency_threshold must lie in [0, 5]".into(),
            ));
        }
        let paths = [
            ("lexicon", &self.lexicon),
            ("questionnaire", &self.questionnaire),
            ("templates", &self.templates),
            ("roster", &self.roster),
            ("mock_params", &self.mock_params),
        ];
        for (name, path) in paths {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(CliError::Config(format!(
                        "{name} path {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn resources(&self) -> Result<Resources, CliError> {
        let config_err = |what: &str, p: &Path, e: &dyn std::fmt::Display| {
            CliError::Config(format!("{what} {}: {e}", p.display()))
        };
        let templates = match &self.templates {
            Some(p) => TemplateSet::load_dir(p).map_err(|e| config_err("templates", p, &e))?,
            None => TemplateSet::default(),
        };
        let roster = match &self.roster {
            Some(p) => load_roster(p, &templates).map_err(|e| config_err("roster", p, &e))?,
            None => default_roster_with(&templates),
        };
        let questionnaire = match &self.questionnaire {
            Some(p) => Questionnaire::load(p).map_err(|e| config_err("questionnaire", p, &e))?,
            None => Questionnaire::default(),
        };
        let lexicon = match &self.lexicon {
            Some(p) => StanceLexicon::load(p).map_err(|e| config_err("lexicon", p, &e))?,
            None => StanceLexicon::default(),
        };
        let mock_params = match &self.mock_params {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| config_err("mock_params", p, &e))?;
                let params: MockPersonaParams =
                    serde_json::from_str(&text).map_err(|e| config_err("mock_params", p, &e))?;
                params
                    .validate()
                    .map_err(|e| config_err("mock_params", p, &e))?;
                params
            }
            None => MockPersonaParams::calibrated_default(),
        };
        if self.backend == BackendKind::Mock {
            if let Some(a) = roster.iter().find(|a| mock_params.get(a.label()).is_err()) {
                return Err(CliError::Config(format!(
                    "mock_params has no entry for trait `{}`",
                    a.label()
                )));
            }
        }
        Ok(Resources {
            classroom: Classroom::new(roster, templates, questionnaire),
            lexicon,
            mock_params,
        })
    }

    /// Digest over every field that affects results, with referenced files
    /// replaced by the hash of their parsed content. The output directory is
    /// not part of it.
    pub fn semantic_hash(&self, resources: &Resources) -> String {
        #[derive(Serialize)]
        struct Semantic<'a> {
            trials: u32,
            base_seed: u64,
            context_sharing: bool,
            consistency: bool,
            consistency_threshold: f64,
            stance_mode: StanceModeKind,
            backend: BackendKind,
            sampling: &'a SamplingParams,
            http: Option<&'a HttpConfig>,
            mock_params: Option<&'a MockPersonaParams>,
            lexicon: String,
            templates: String,
            questionnaire: String,
            roster: String,
        }
        let semantic = Semantic {
            trials: self.trials,
            base_seed: self.base_seed,
            context_sharing: self.context_sharing,
            consistency: self.consistency,
            consistency_threshold: self.consistency_threshold,
            stance_mode: self.stance_mode,
            backend: self.backend,
            sampling: &self.sampling,
            http: (self.backend == BackendKind::Http).then_some(&self.http),
            mock_params: (self.backend == BackendKind::Mock).then_some(&resources.mock_params),
            lexicon: resources.lexicon.content_hash(),
            templates: resources.classroom.templates.content_hash(),
            questionnaire: resources.classroom.questionnaire.content_hash(),
            roster: roster_hash(&resources.classroom.roster),
        };
        hex::encode(Sha256::digest(
            serde_json::to_vec(&semantic).expect("config serializes"),
        ))
    }

    pub fn backend(&self, resources: &Resources) -> Result<Box<dyn ChatBackend>, CliError> {
        Ok(match self.backend {
            BackendKind::Mock => Box::new(MockBackend::new(resources.mock_params.clone())),
            BackendKind::Http => {
                let backend = HttpBackend::from_env(self.http.clone())
                    .map_err(|e| CliError::Backend(e.to_string()))?;
                Box::new(backend)
            }
        })
    }
}

pub struct Resources {
    pub classroom: Classroom,
    pub lexicon: StanceLexicon,
    pub mock_params: MockPersonaParams,
}
