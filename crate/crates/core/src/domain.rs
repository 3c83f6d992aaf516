//! Core vocabulary: Big-Five dimensions, trait poles, agents, claims and the
//! compiled-in default classroom.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::templates::{Template, TemplateKind, TemplateSet};
use crate::validation::{Rule, ValidationReport};

pub type AgentId = u32;
pub type ClaimId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Openness,
    Conscientiousness,
    Extraversion,
    Agreeableness,
    Neuroticism,
}

impl Dimension {
    pub const ALL: [Dimension; 5] = [
        Dimension::Openness,
        Dimension::Conscientiousness,
        Dimension::Extraversion,
        Dimension::Agreeableness,
        Dimension::Neuroticism,
    ];

    pub fn display_name(self) -> &'static str {
        match self {
            Dimension::Openness => "Openness to Experience",
            Dimension::Conscientiousness => "Conscientiousness",
            Dimension::Extraversion => "Extraversion",
            Dimension::Agreeableness => "Agreeableness",
            Dimension::Neuroticism => "Neuroticism",
        }
    }

    /// The pole that a high questionnaire score indicates. The fifth scale is
    /// scored as emotional stability, so resilient agents score high on it.
    pub fn scored_pole(self) -> Polarity {
        match self {
            Dimension::Neuroticism => Polarity::Low,
            _ => Polarity::High,
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    High,
    Low,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::High => "high",
            Polarity::Low => "low",
        }
    }
}

/// One extreme of a Big-Five dimension, e.g. "inventive/curious".
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TraitPole {
    pub dimension: Dimension,
    pub label: String,
    pub descriptor: String,
    pub polarity: Polarity,
}

impl TraitPole {
    pub fn new(dimension: Dimension, label: &str, descriptor: &str, polarity: Polarity) -> Self {
        Self {
            dimension,
            label: label.to_string(),
            descriptor: descriptor.to_string(),
            polarity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MisinformationItem {
    pub claim_id: ClaimId,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentProfile {
    pub agent_id: AgentId,
    #[serde(rename = "trait")]
    pub trait_pole: TraitPole,
    pub persona_prompt: String,
    pub claim: MisinformationItem,
}

impl AgentProfile {
    pub fn label(&self) -> &str {
        &self.trait_pole.label
    }

    pub fn display_name(&self) -> String {
        format!("Student {}", self.agent_id)
    }
}

/// The ten poles in roster order: agents 2k-1 and 2k share a dimension.
pub fn default_poles() -> Vec<TraitPole> {
    use Dimension::*;
    use Polarity::*;
    vec![
        TraitPole::new(Openness, "curious", "inventive/curious", High),
        TraitPole::new(Openness, "cautious", "consistent/cautious", Low),
        TraitPole::new(Conscientiousness, "organized", "efficient/organized", High),
        TraitPole::new(Conscientiousness, "careless", "extravagant/careless", Low),
        TraitPole::new(Extraversion, "outgoing", "outgoing/energetic", High),
        TraitPole::new(Extraversion, "reserved", "solitary/reserved", Low),
        TraitPole::new(Agreeableness, "friendly", "friendly/compassionate", High),
        TraitPole::new(Agreeableness, "critical", "critical/judgmental", Low),
        TraitPole::new(Neuroticism, "sensitive", "sensitive/nervous", High),
        TraitPole::new(Neuroticism, "confident", "resilient/confident", Low),
    ]
}

pub fn default_claims() -> Vec<MisinformationItem> {
    [
        "There are living organisms on the far side of the moon.",
        "The theory of evolution is incorrect.",
        "Aliens intervened in the development of human civilization.",
        "The Apollo program was actually unsuccessful.",
        "HIV is a man-made biological weapon.",
        "Global elites form a conspiracy group that manipulates world affairs.",
        "The popularity of 5G networks is related to the spread of COVID-19.",
        "MMR vaccines are associated with autism.",
        "Fluoride can cause intellectual decline or other health problems.",
        "Superfoods can prevent or treat various diseases.",
    ]
    .iter()
    .zip(1..)
    .map(|(text, claim_id)| MisinformationItem {
        claim_id,
        text: text.to_string(),
    })
    .collect()
}

pub fn persona_prompt(template: &Template, pole: &TraitPole) -> String {
    template.render(&[
        ("descriptor", &pole.descriptor),
        ("label", &pole.label),
        ("dimension", pole.dimension.display_name()),
        ("polarity", pole.polarity.as_str()),
    ])
}

/// Agents 1..10 with the default poles and claims, personas rendered from
/// the built-in persona template.
pub fn default_roster() -> Vec<AgentProfile> {
    default_roster_with(&TemplateSet::default())
}

pub fn default_roster_with(templates: &TemplateSet) -> Vec<AgentProfile> {
    let template = templates.get(TemplateKind::Persona);
    default_poles()
        .into_iter()
        .zip(default_claims())
        .zip(1..)
        .map(|((pole, claim), agent_id)| AgentProfile {
            agent_id,
            persona_prompt: persona_prompt(template, &pole),
            trait_pole: pole,
            claim,
        })
        .collect()
}

/// Checks roster-level invariants. Each violated invariant is reported once
/// per offending key.
pub fn validate_roster(roster: &[AgentProfile]) -> ValidationReport {
    let mut report = ValidationReport::default();

    let mut ids: BTreeMap<AgentId, usize> = BTreeMap::new();
    let mut labels: BTreeMap<&str, usize> = BTreeMap::new();
    let mut claims: BTreeMap<ClaimId, usize> = BTreeMap::new();
    let mut coverage: BTreeMap<Dimension, (usize, usize)> = BTreeMap::new();

    for agent in roster {
        if agent.agent_id == 0 {
            report.push(Rule::InvalidAgentId, "agent_id must be at least 1");
        }
        *ids.entry(agent.agent_id).or_default() += 1;
        *labels.entry(agent.trait_pole.label.as_str()).or_default() += 1;
        *claims.entry(agent.claim.claim_id).or_default() += 1;
        if agent.persona_prompt.trim().is_empty() {
            report.push(
                Rule::EmptyPersona,
                format!("agent {} has an empty persona prompt", agent.agent_id),
            );
        }
        if agent.claim.text.trim().is_empty() {
            report.push(
                Rule::EmptyClaim,
                format!("agent {} has an empty claim", agent.agent_id),
            );
        }
        let slot = coverage.entry(agent.trait_pole.dimension).or_default();
        match agent.trait_pole.polarity {
            Polarity::High => slot.0 += 1,
            Polarity::Low => slot.1 += 1,
        }
    }

    for (id, n) in ids.iter().filter(|(_, n)| **n > 1) {
        report.push(
            Rule::DuplicateAgentId,
            format!("agent_id {id} appears {n} times"),
        );
    }
    for (label, n) in labels.iter().filter(|(_, n)| **n > 1) {
        report.push(
            Rule::DuplicateLabel,
            format!("trait label `{label}` appears {n} times"),
        );
    }
    for (id, n) in claims.iter().filter(|(_, n)| **n > 1) {
        report.push(
            Rule::DuplicateClaimId,
            format!("claim_id {id} appears {n} times"),
        );
    }
    for dimension in Dimension::ALL {
        let (high, low) = coverage.get(&dimension).copied().unwrap_or_default();
        if (high, low) != (1, 1) {
            report.push(
                Rule::PolarityCoverage,
                format!("{dimension}: expected one high and one low pole, found {high} high and {low} low"),
            );
        }
    }
    report
}

/// The trait-free facilitator. Its lines come from the moderator templates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeratorProfile {
    pub name: String,
    pub script: ModeratorScript,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeratorScript {
    pub opening: Template,
    pub transition: Template,
    pub closing: Template,
}

impl ModeratorProfile {
    pub fn from_templates(templates: &TemplateSet) -> Self {
        Self {
            name: "Professor".to_string(),
            script: ModeratorScript {
                opening: templates.get(TemplateKind::ModeratorOpening).clone(),
                transition: templates.get(TemplateKind::ModeratorTransition).clone(),
                closing: templates.get(TemplateKind::ModeratorClosing).clone(),
            },
        }
    }

    pub fn opening(&self) -> String {
        self.script.opening.render(&[("name", &self.name)])
    }

    pub fn transition(&self, round_no: u32, presenter: &AgentProfile) -> String {
        let round = round_no.to_string();
        self.script.transition.render(&[
            ("name", &self.name),
            ("round", &round),
            ("presenter", &presenter.display_name()),
        ])
    }

    pub fn closing(&self) -> String {
        self.script.closing.render(&[("name", &self.name)])
    }
}

impl Default for ModeratorProfile {
    fn default() -> Self {
        Self::from_templates(&TemplateSet::default())
    }
}

#[derive(Debug, Error)]
pub enum RosterFileError {
    #[error("failed to read roster file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed roster file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("roster file is invalid:\n{0}")]
    Invalid(ValidationReport),
}

/// One agent entry of a roster override file. `persona_prompt` is generated
/// from the persona template when omitted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub agent_id: AgentId,
    pub dimension: Dimension,
    pub polarity: Polarity,
    pub label: String,
    pub descriptor: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persona_prompt: Option<String>,
    pub claim: MisinformationItem,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RosterFile {
    pub agents: Vec<AgentSpec>,
}

impl RosterFile {
    pub fn into_roster(self, templates: &TemplateSet) -> Vec<AgentProfile> {
        let template = templates.get(TemplateKind::Persona);
        self.agents
            .into_iter()
            .map(|spec| {
                let pole = TraitPole {
                    dimension: spec.dimension,
                    label: spec.label,
                    descriptor: spec.descriptor,
                    polarity: spec.polarity,
                };
                AgentProfile {
                    agent_id: spec.agent_id,
                    persona_prompt: spec
                        .persona_prompt
                        .unwrap_or_else(|| persona_prompt(template, &pole)),
                    trait_pole: pole,
                    claim: spec.claim,
                }
            })
            .collect()
    }

    pub fn from_roster(roster: &[AgentProfile]) -> Self {
        Self {
            agents: roster
                .iter()
                .map(|a| AgentSpec {
                    agent_id: a.agent_id,
                    dimension: a.trait_pole.dimension,
                    polarity: a.trait_pole.polarity,
                    label: a.trait_pole.label.clone(),
                    descriptor: a.trait_pole.descriptor.clone(),
                    persona_prompt: Some(a.persona_prompt.clone()),
                    claim: a.claim.clone(),
                })
                .collect(),
        }
    }
}

/// Reads and validates a JSON roster override file.
pub fn load_roster(
    path: &Path,
    templates: &TemplateSet,
) -> Result<Vec<AgentProfile>, RosterFileError> {
    let text = std::fs::read_to_string(path)?;
    let file: RosterFile = serde_json::from_str(&text)?;
    let roster = file.into_roster(templates);
    let report = validate_roster(&roster);
    if !report.is_valid() {
        return Err(RosterFileError::Invalid(report));
    }
    Ok(roster)
}

pub fn roster_hash(roster: &[AgentProfile]) -> String {
    let bytes = serde_json::to_vec(roster).expect("roster serializes");
    hex::encode(Sha256::digest(bytes))
}

pub fn agent_ids(roster: &[AgentProfile]) -> BTreeSet<AgentId> {
    roster.iter().map(|a| a.agent_id).collect()
}
