use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use super::{EventKind, ProtocolError, TranscriptEvent, TrialConfig};
use crate::consistency::Phase;
use crate::domain::AgentId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionPhase {
    PreTest,
    Round {
        round_no: u32,
        presenter_id: AgentId,
        pending: BTreeSet<AgentId>,
        /// Set once the presenter has spoken; evaluations need it.
        presented: bool,
    },
    PostTest,
    Done,
}

impl fmt::Display for SessionPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SessionPhase::PreTest => f.write_str("pre-test"),
            SessionPhase::Round {
                round_no,
                presenter_id,
                ..
            } => {
                write!(f, "round {round_no} (presenter {presenter_id})")
            }
            SessionPhase::PostTest => f.write_str("post-test"),
            SessionPhase::Done => f.write_str("done"),
        }
    }
}

/// A line of the public record: the moderator (`agent_id == None`), a
/// presentation, or an evaluator's `[Speak]` text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicUtterance {
    pub agent_id: Option<AgentId>,
    pub text: String,
}

#[derive(Debug, PartialEq, Eq)]
struct Plan {
    order: Vec<AgentId>,
    participants: BTreeSet<AgentId>,
    consistency_enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionState {
    pub phase: SessionPhase,
    pub history: Vec<PublicUtterance>,
    plan: Arc<Plan>,
}

impl SessionState {
    pub fn new(order: Vec<AgentId>, consistency_enabled: bool) -> Self {
        let participants = order.iter().copied().collect();
        Self {
            phase: SessionPhase::PreTest,
            history: Vec::new(),
            plan: Arc::new(Plan {
                order,
                participants,
                consistency_enabled,
            }),
        }
    }

    pub fn for_trial(config: &TrialConfig) -> Self {
        Self::new(config.rounds_order.clone(), config.consistency_enabled)
    }

    /// Same plan, different phase.
    pub fn with_phase(&self, phase: SessionPhase) -> Self {
        Self {
            phase,
            history: self.history.clone(),
            plan: Arc::clone(&self.plan),
        }
    }

    fn round(&self, index: usize) -> SessionPhase {
        let presenter_id = self.plan.order[index];
        SessionPhase::Round {
            round_no: index as u32 + 1,
            presenter_id,
            pending: self
                .plan
                .participants
                .iter()
                .copied()
                .filter(|&a| a != presenter_id)
                .collect(),
            presented: false,
        }
    }

    /// Moves a finished post-test to `Done`.
    pub fn finish(self) -> Result<Self, ProtocolError> {
        match self.phase {
            SessionPhase::PostTest | SessionPhase::Done => Ok(Self {
                phase: SessionPhase::Done,
                ..self
            }),
            ref other => Err(ProtocolError::IllegalEvent {
                phase: other.to_string(),
                event: "finish",
                agent_id: None,
                reason: "the session can only finish after the last round".into(),
            }),
        }
    }
}

fn public_text(event: &TranscriptEvent, fallback_to_raw: bool) -> Option<String> {
    match &event.channel_texts {
        Some(c) if !c.is_empty() => c.speak_text.clone().filter(|s| !s.is_empty()),
        _ if fallback_to_raw && !event.raw_text.trim().is_empty() => Some(event.raw_text.clone()),
        _ => None,
    }
}

/// Applies one event to the session. Rounds roll over when the last pending
/// evaluator has responded; after the final round the session enters the
/// post-test, or finishes directly when questionnaires are disabled.
pub fn advance(
    state: SessionState,
    event: &TranscriptEvent,
) -> Result<SessionState, ProtocolError> {
    let illegal = |state: &SessionState, reason: &str| ProtocolError::IllegalEvent {
        phase: state.phase.to_string(),
        event: event.kind.name(),
        agent_id: event.agent_id,
        reason: reason.to_string(),
    };
    let mut state = state;

    match &event.kind {
        EventKind::ModeratorUtterance { .. } => {
            if event.agent_id.is_some() {
                return Err(illegal(
                    &state,
                    "only the moderator may make moderator utterances",
                ));
            }
            state.history.push(PublicUtterance {
                agent_id: None,
                text: event.raw_text.clone(),
            });
            Ok(state)
        }
        EventKind::QuestionnaireItem { phase, .. } => {
            let expected = match state.phase {
                SessionPhase::PreTest => Phase::Pre,
                SessionPhase::PostTest => Phase::Post,
                _ => {
                    return Err(illegal(
                        &state,
                        "questionnaires are only given before or after the rounds",
                    ))
                }
            };
            if !state.plan.consistency_enabled {
                return Err(illegal(
                    &state,
                    "questionnaires are disabled for this trial",
                ));
            }
            if *phase != expected {
                return Err(illegal(
                    &state,
                    "questionnaire phase does not match the session phase",
                ));
            }
            match event.agent_id {
                Some(id) if state.plan.participants.contains(&id) => Ok(state),
                _ => Err(illegal(
                    &state,
                    "questionnaire answers must come from a participant",
                )),
            }
        }
        EventKind::Presentation { .. } => {
            if matches!(state.phase, SessionPhase::PreTest) {
                if state.plan.order.is_empty() {
                    return Err(illegal(&state, "no rounds are scheduled"));
                }
                state.phase = state.round(0);
            }
            let SessionPhase::Round {
                presenter_id,
                presented,
                round_no,
                ..
            } = &mut state.phase
            else {
                return Err(illegal(&state, "presentations happen only during rounds"));
            };
            if event.agent_id != Some(*presenter_id) {
                return Err(illegal(&state, "only the scheduled presenter may present"));
            }
            if *presented {
                return Err(illegal(
                    &state,
                    "the presenter has already presented this round",
                ));
            }
            if event.round_no.is_some_and(|r| r != *round_no) {
                return Err(illegal(&state, "round number does not match the session"));
            }
            *presented = true;
            if let Some(text) = public_text(event, true) {
                state.history.push(PublicUtterance {
                    agent_id: event.agent_id,
                    text,
                });
            }
            Ok(state)
        }
        EventKind::Evaluation {
            presenter_id: claimed_presenter,
            ..
        } => {
            let SessionPhase::Round {
                round_no,
                presenter_id,
                pending,
                presented,
            } = &mut state.phase
            else {
                return Err(illegal(&state, "evaluations happen only during rounds"));
            };
            let Some(agent) = event.agent_id else {
                return Err(illegal(&state, "evaluations must come from an agent"));
            };
            if agent == *presenter_id {
                return Err(illegal(
                    &state,
                    "the presenter cannot evaluate their own claim",
                ));
            }
            if !*presented {
                return Err(illegal(&state, "nothing has been presented yet"));
            }
            if claimed_presenter != presenter_id {
                return Err(illegal(&state, "evaluation names the wrong presenter"));
            }
            if event.round_no.is_some_and(|r| r != *round_no) {
                return Err(illegal(&state, "round number does not match the session"));
            }
            if !pending.remove(&agent) {
                return Err(illegal(
                    &state,
                    "agent is not waiting to evaluate this round",
                ));
            }
            let done = pending.is_empty();
            let next_index = *round_no as usize;
            if let Some(text) = public_text(event, false) {
                state.history.push(PublicUtterance {
                    agent_id: Some(agent),
                    text,
                });
            }
            if done {
                state.phase = if next_index < state.plan.order.len() {
                    state.round(next_index)
                } else if state.plan.consistency_enabled {
                    SessionPhase::PostTest
                } else {
                    SessionPhase::Done
                };
            }
            Ok(state)
        }
    }
}
