//! One classroom trial: moderator script, sequential presentation rounds with
//! dual-channel evaluations, and optional pre/post questionnaires.

mod context;
mod state;
mod trial;

pub use context::{build_evaluator_context, build_presenter_context, ContextOptions};
pub use state::{advance, PublicUtterance, SessionPhase, SessionState};
pub use trial::{run_trial, score_sheets, Classroom, TrialError};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::SamplingParams;
use crate::consistency::Phase;
use crate::domain::{AgentId, AgentProfile, ClaimId};
use crate::stance::ChannelTexts;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub trial_id: u32,
    pub seed: u64,
    /// Presenter order; a permutation of the roster's agent ids.
    pub rounds_order: Vec<AgentId>,
    /// Whether evaluators see earlier public utterances.
    pub context_sharing: bool,
    pub sampling: SamplingParams,
    pub consistency_enabled: bool,
}

impl TrialConfig {
    /// Ascending presenter order, shared context, questionnaires on.
    pub fn new(trial_id: u32, seed: u64, roster: &[AgentProfile]) -> Self {
        let mut rounds_order: Vec<AgentId> = roster.iter().map(|a| a.agent_id).collect();
        rounds_order.sort_unstable();
        Self {
            trial_id,
            seed,
            rounds_order,
            context_sharing: true,
            sampling: SamplingParams::default(),
            consistency_enabled: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeratorCue {
    Opening,
    Transition,
    Closing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    ModeratorUtterance {
        cue: ModeratorCue,
    },
    Presentation {
        claim_id: ClaimId,
    },
    Evaluation {
        presenter_id: AgentId,
        claim_id: ClaimId,
    },
    QuestionnaireItem {
        phase: Phase,
        item_id: String,
        /// Keyed 1..5 score; absent when the reply could not be parsed.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        score: Option<u8>,
        attempts: u8,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::ModeratorUtterance { .. } => "moderator utterance",
            EventKind::Presentation { .. } => "presentation",
            EventKind::Evaluation { .. } => "evaluation",
            EventKind::QuestionnaireItem { .. } => "questionnaire item",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEvent {
    pub sequence_no: u64,
    #[serde(flatten)]
    pub kind: EventKind,
    /// `None` for the moderator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_id: Option<AgentId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round_no: Option<u32>,
    /// Backend reply exactly as returned.
    pub raw_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_texts: Option<ChannelTexts>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum TrialStatus {
    Complete,
    Aborted { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub trial_config: TrialConfig,
    pub roster_snapshot: Vec<AgentProfile>,
    pub events: Vec<TranscriptEvent>,
    pub status: TrialStatus,
}

impl Transcript {
    pub fn is_complete(&self) -> bool {
        self.status == TrialStatus::Complete
    }

    pub fn presentations(&self) -> impl Iterator<Item = &TranscriptEvent> {
        self.events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Presentation { .. }))
    }

    pub fn evaluations(&self) -> impl Iterator<Item = &TranscriptEvent> {
        self.events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Evaluation { .. }))
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("illegal {event} from {} during {phase}: {reason}", describe_agent(*.agent_id))]
    IllegalEvent {
        phase: String,
        event: &'static str,
        agent_id: Option<AgentId>,
        reason: String,
    },
    #[error("agent {0} cannot evaluate its own claim")]
    SelfEvaluation(AgentId),
}

fn describe_agent(agent_id: Option<AgentId>) -> String {
    match agent_id {
        Some(id) => format!("agent {id}"),
        None => "the moderator".to_string(),
    }
}
