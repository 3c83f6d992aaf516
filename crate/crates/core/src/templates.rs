//! Prompt templates with named `{placeholder}` slots.
//!
//! The placeholder vocabulary is fixed: a template may only use names from
//! [`PLACEHOLDERS`], and each template has a set of placeholders it must
//! contain. Templates live as plain text files in a directory; any file that
//! is missing falls back to the compiled-in default.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Every placeholder name a template may reference.
pub const PLACEHOLDERS: &[&str] = &[
    "persona",
    "claim",
    "history",
    "descriptor",
    "label",
    "dimension",
    "polarity",
    "name",
    "presenter",
    "round",
    "statement",
];

static PLACEHOLDER_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\{([a-z_]+)\}").expect("placeholder regex"));

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("templates directory {0} does not exist")]
    MissingDir(PathBuf),
    #[error("failed to read template {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("template `{template}` uses unknown placeholder {{{placeholder}}}")]
    UnknownPlaceholder {
        template: String,
        placeholder: String,
    },
    #[error("template `{template}` is missing required placeholder {{{placeholder}}}")]
    MissingPlaceholder {
        template: String,
        placeholder: String,
    },
}

/// Identifies one template file of a [`TemplateSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TemplateKind {
    Persona,
    Present,
    Evaluate,
    History,
    Questionnaire,
    Reask,
    ModeratorOpening,
    ModeratorTransition,
    ModeratorClosing,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 9] = [
        TemplateKind::Persona,
        TemplateKind::Present,
        TemplateKind::Evaluate,
        TemplateKind::History,
        TemplateKind::Questionnaire,
        TemplateKind::Reask,
        TemplateKind::ModeratorOpening,
        TemplateKind::ModeratorTransition,
        TemplateKind::ModeratorClosing,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            TemplateKind::Persona => "persona.txt",
            TemplateKind::Present => "present.txt",
            TemplateKind::Evaluate => "evaluate.txt",
            TemplateKind::History => "history.txt",
            TemplateKind::Questionnaire => "questionnaire.txt",
            TemplateKind::Reask => "reask.txt",
            TemplateKind::ModeratorOpening => "moderator_opening.txt",
            TemplateKind::ModeratorTransition => "moderator_transition.txt",
            TemplateKind::ModeratorClosing => "moderator_closing.txt",
        }
    }

    fn required(self) -> &'static [&'static str] {
        match self {
            TemplateKind::Persona => &["descriptor"],
            TemplateKind::Present => &["claim"],
            TemplateKind::Evaluate => &["claim", "history"],
            TemplateKind::History => &["history"],
            TemplateKind::Questionnaire => &["statement"],
            _ => &[],
        }
    }

    fn builtin(self) -> &'static str {
        match self {
            TemplateKind::Persona => include_str!("../data/templates/persona.txt"),
            TemplateKind::Present => include_str!("../data/templates/present.txt"),
            TemplateKind::Evaluate => include_str!("../data/templates/evaluate.txt"),
            TemplateKind::History => include_str!("../data/templates/history.txt"),
            TemplateKind::Questionnaire => include_str!("../data/templates/questionnaire.txt"),
            TemplateKind::Reask => include_str!("../data/templates/reask.txt"),
            TemplateKind::ModeratorOpening => {
                include_str!("../data/templates/moderator_opening.txt")
            }
            TemplateKind::ModeratorTransition => {
                include_str!("../data/templates/moderator_transition.txt")
            }
            TemplateKind::ModeratorClosing => {
                include_str!("../data/templates/moderator_closing.txt")
            }
        }
    }
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.file_name())
    }
}

/// A single validated template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    text: String,
}

impl Template {
    pub fn parse(kind: TemplateKind, text: &str) -> Result<Self, TemplateError> {
        let text = text.trim_end().to_string();
        for cap in PLACEHOLDER_RE.captures_iter(&text) {
            let name = &cap[1];
            if !PLACEHOLDERS.contains(&name) {
                return Err(TemplateError::UnknownPlaceholder {
                    template: kind.file_name().to_string(),
                    placeholder: name.to_string(),
                });
            }
        }
        for required in kind.required() {
            if !text.contains(&format!("{{{required}}}")) {
                return Err(TemplateError::MissingPlaceholder {
                    template: kind.file_name().to_string(),
                    placeholder: required.to_string(),
                });
            }
        }
        Ok(Self { text })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Substitutes every `{name}` found in `values`; placeholders without a
    /// value render as the empty string.
    pub fn render(&self, values: &[(&str, &str)]) -> String {
        PLACEHOLDER_RE
            .replace_all(&self.text, |cap: &regex::Captures<'_>| {
                values
                    .iter()
                    .find(|(k, _)| *k == &cap[1])
                    .map(|(_, v)| v.to_string())
                    .unwrap_or_default()
            })
            .into_owned()
    }
}

/// The full set of prompt templates used by a trial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<TemplateKind, Template>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        let templates = TemplateKind::ALL
            .iter()
            .map(|&kind| {
                let t = Template::parse(kind, kind.builtin()).expect("builtin templates are valid");
                (kind, t)
            })
            .collect();
        Self { templates }
    }
}

impl TemplateSet {
    /// Loads templates from `dir`; files not present keep their defaults.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        if !dir.is_dir() {
            return Err(TemplateError::MissingDir(dir.to_path_buf()));
        }
        let mut set = Self::default();
        for kind in TemplateKind::ALL {
            let path = dir.join(kind.file_name());
            if !path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|source| TemplateError::Io {
                path: path.clone(),
                source,
            })?;
            set.templates.insert(kind, Template::parse(kind, &text)?);
        }
        Ok(set)
    }

    pub fn with(mut self, kind: TemplateKind, text: &str) -> Result<Self, TemplateError> {
        self.templates.insert(kind, Template::parse(kind, text)?);
        Ok(self)
    }

    pub fn get(&self, kind: TemplateKind) -> &Template {
        &self.templates[&kind]
    }

    pub fn render(&self, kind: TemplateKind, values: &[(&str, &str)]) -> String {
        self.get(kind).render(values)
    }

    /// Content hash over every template, in a fixed order.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (kind, template) in &self.templates {
            hasher.update(kind.file_name().as_bytes());
            hasher.update([0]);
            hasher.update(template.text.as_bytes());
            hasher.update([0]);
        }
        hex::encode(hasher.finalize())
    }
}
