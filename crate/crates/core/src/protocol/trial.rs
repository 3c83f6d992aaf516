use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::{
    advance, build_evaluator_context, build_presenter_context, ContextOptions, EventKind,
    ModeratorCue, ProtocolError, SessionPhase, SessionState, Transcript, TranscriptEvent,
    TrialConfig, TrialStatus,
};
use crate::backend::{BackendError, ChatBackend, ChatMessage, ChatRequest, Purpose, RequestTag};
use crate::consistency::{administer, AdministerContext, Phase, Questionnaire, ScoreSheet};
use crate::domain::{
    default_roster_with, validate_roster, AgentId, AgentProfile, ModeratorProfile,
};
use crate::persist::{SinkError, TranscriptSink};
use crate::stance::{parse_channels, ChannelTexts};
use crate::templates::TemplateSet;
use crate::validation::ValidationReport;

/// Everything about a session that stays fixed across trials.
#[derive(Debug, Clone)]
pub struct Classroom {
    pub roster: Vec<AgentProfile>,
    pub moderator: ModeratorProfile,
    pub templates: TemplateSet,
    pub questionnaire: Questionnaire,
}

impl Classroom {
    pub fn new(
        roster: Vec<AgentProfile>,
        templates: TemplateSet,
        questionnaire: Questionnaire,
    ) -> Self {
        let moderator = ModeratorProfile::from_templates(&templates);
        Self {
            roster,
            moderator,
            templates,
            questionnaire,
        }
    }
}

impl Default for Classroom {
    fn default() -> Self {
        let templates = TemplateSet::default();
        Self::new(
            default_roster_with(&templates),
            templates,
            Questionnaire::default(),
        )
    }
}

#[derive(Debug, Error)]
pub enum TrialError {
    #[error("invalid roster:\n{0}")]
    InvalidRoster(ValidationReport),
    #[error("invalid trial config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("transcript sink: {0}")]
    Sink(#[from] SinkError),
}

enum Stop {
    Backend(BackendError),
    Fatal(TrialError),
}

impl From<BackendError> for Stop {
    fn from(e: BackendError) -> Self {
        Stop::Backend(e)
    }
}

impl<E: Into<TrialError>> From<Wrap<E>> for Stop {
    fn from(Wrap(e): Wrap<E>) -> Self {
        Stop::Fatal(e.into())
    }
}

struct Wrap<E>(E);

struct Runner<'a> {
    config: &'a TrialConfig,
    classroom: &'a Classroom,
    backend: &'a dyn ChatBackend,
    sink: &'a dyn TranscriptSink,
    state: SessionState,
    events: Vec<TranscriptEvent>,
}

impl Runner<'_> {
    fn agent(&self, id: AgentId) -> &AgentProfile {
        self.classroom
            .roster
            .iter()
            .find(|a| a.agent_id == id)
            .expect("order validated against roster")
    }

    fn emit(
        &mut self,
        kind: EventKind,
        agent_id: Option<AgentId>,
        round_no: Option<u32>,
        raw_text: String,
        channel_texts: Option<ChannelTexts>,
    ) -> Result<(), Stop> {
        let event = TranscriptEvent {
            sequence_no: self.events.len() as u64 + 1,
            kind,
            agent_id,
            round_no,
            raw_text,
            channel_texts,
        };
        let state = std::mem::replace(&mut self.state, SessionState::new(Vec::new(), false));
        self.state = advance(state, &event).map_err(Wrap)?;
        self.sink
            .append(self.config.trial_id, &event)
            .map_err(Wrap)?;
        self.events.push(event);
        Ok(())
    }

    fn moderator(&mut self, cue: ModeratorCue, text: String) -> Result<(), Stop> {
        self.emit(
            EventKind::ModeratorUtterance { cue },
            None,
            None,
            text,
            None,
        )
    }

    fn tag(&self, agent: &AgentProfile, purpose: Purpose) -> RequestTag {
        RequestTag {
            trial_seed: self.config.seed,
            agent_label: agent.label().to_string(),
            purpose,
        }
    }

    fn ask(&self, messages: Vec<ChatMessage>, tag: RequestTag) -> Result<String, BackendError> {
        self.backend
            .complete(&ChatRequest::new(messages, &self.config.sampling).tagged(tag))
    }

    fn questionnaires(&mut self, phase: Phase) -> Result<(), Stop> {
        let ctx = AdministerContext {
            templates: &self.classroom.templates,
            params: &self.config.sampling,
            trial_id: self.config.trial_id,
            trial_seed: self.config.seed,
        };
        let mut ids: Vec<AgentId> = self.config.rounds_order.clone();
        ids.sort_unstable();
        for id in ids {
            let agent = self.agent(id);
            let items = self.classroom.questionnaire.for_trait(&agent.trait_pole);
            let admin = administer(agent, &items, self.backend, phase, &ctx)?;
            for answer in admin.answers {
                self.emit(
                    EventKind::QuestionnaireItem {
                        phase,
                        item_id: answer.item_id,
                        score: answer.score,
                        attempts: answer.attempts,
                    },
                    Some(id),
                    None,
                    answer.raw_text,
                    None,
                )?;
            }
        }
        Ok(())
    }

    fn context_options(&self) -> ContextOptions<'_> {
        ContextOptions {
            templates: &self.classroom.templates,
            context_sharing: self.config.context_sharing,
            moderator_name: &self.classroom.moderator.name,
        }
    }

    fn round(&mut self, round_no: u32, presenter_id: AgentId) -> Result<(), Stop> {
        let presenter = self.agent(presenter_id).clone();
        let transition = self.classroom.moderator.transition(round_no, &presenter);
        self.moderator(ModeratorCue::Transition, transition)?;

        let messages = build_presenter_context(
            &presenter,
            &self.state.history,
            &self.classroom.roster,
            &self.context_options(),
        );
        let purpose = Purpose::Presentation {
            claim_id: presenter.claim.claim_id,
            round_no,
            claim_text: presenter.claim.text.clone(),
        };
        let raw = self.ask(messages, self.tag(&presenter, purpose))?;
        let channels = parse_channels(&raw);
        self.emit(
            EventKind::Presentation {
                claim_id: presenter.claim.claim_id,
            },
            Some(presenter_id),
            Some(round_no),
            raw,
            Some(channels),
        )?;

        let SessionPhase::Round { pending, .. } = &self.state.phase else {
            unreachable!("a presentation always leaves the session in a round");
        };
        let evaluators: Vec<AgentId> = pending.iter().copied().collect();
        for evaluator_id in evaluators {
            let evaluator = self.agent(evaluator_id);
            let messages = build_evaluator_context(
                evaluator,
                &presenter,
                &presenter.claim,
                &self.state.history,
                &self.classroom.roster,
                &self.context_options(),
            )
            .map_err(Wrap)?;
            let order = &self.config.rounds_order;
            let own_round = order
                .iter()
                .position(|&id| id == evaluator_id)
                .expect("validated") as u32
                + 1;
            let purpose = Purpose::Evaluation {
                presenter_id,
                claim_id: presenter.claim.claim_id,
                round_no,
                evaluation_no: round_no - 1 - u32::from(own_round < round_no),
                evaluations_per_trial: order.len() as u32 - 1,
            };
            let raw = self.ask(messages, self.tag(evaluator, purpose))?;
            let channels = parse_channels(&raw);
            self.emit(
                EventKind::Evaluation {
                    presenter_id,
                    claim_id: presenter.claim.claim_id,
                },
                Some(evaluator_id),
                Some(round_no),
                raw,
                Some(channels),
            )?;
        }
        Ok(())
    }

    fn run(&mut self) -> Result<(), Stop> {
        let opening = self.classroom.moderator.opening();
        self.moderator(ModeratorCue::Opening, opening)?;
        if self.config.consistency_enabled {
            self.questionnaires(Phase::Pre)?;
        }
        for (i, &presenter_id) in self.config.rounds_order.clone().iter().enumerate() {
            self.round(i as u32 + 1, presenter_id)?;
        }
        if self.config.consistency_enabled {
            self.questionnaires(Phase::Post)?;
        }
        let state = std::mem::replace(&mut self.state, SessionState::new(Vec::new(), false));
        self.state = state.finish().map_err(Wrap)?;
        let closing = self.classroom.moderator.closing();
        self.moderator(ModeratorCue::Closing, closing)
    }
}

fn check_config(config: &TrialConfig, roster: &[AgentProfile]) -> Result<(), TrialError> {
    let report = validate_roster(roster);
    if !report.is_valid() {
        return Err(TrialError::InvalidRoster(report));
    }
    let ids: BTreeSet<AgentId> = roster.iter().map(|a| a.agent_id).collect();
    let order: BTreeSet<AgentId> = config.rounds_order.iter().copied().collect();
    if order.len() != config.rounds_order.len() || order != ids {
        return Err(TrialError::InvalidConfig(format!(
            "rounds_order {:?} is not a permutation of the roster's agent ids",
            config.rounds_order
        )));
    }
    ChatRequest::new(vec![ChatMessage::user("probe")], &config.sampling)
        .validate()
        .map_err(|e| TrialError::InvalidConfig(e.to_string()))
}

/// Runs one trial: opening, optional pre-test, one round per presenter with
/// every other agent evaluating in ascending id order, optional post-test,
/// closing. A backend failure ends the trial early with an `Aborted` status;
/// the events so far are kept.
pub fn run_trial(
    config: &TrialConfig,
    classroom: &Classroom,
    backend: &dyn ChatBackend,
    sink: &dyn TranscriptSink,
) -> Result<Transcript, TrialError> {
    check_config(config, &classroom.roster)?;
    sink.begin(config, &classroom.roster)?;
    let mut runner = Runner {
        config,
        classroom,
        backend,
        sink,
        state: SessionState::for_trial(config),
        events: Vec::new(),
    };
    let status = match runner.run() {
        Ok(()) => TrialStatus::Complete,
        Err(Stop::Backend(e)) => {
            log::warn!("trial {} aborted: {e}", config.trial_id);
            TrialStatus::Aborted {
                reason: e.to_string(),
            }
        }
        Err(Stop::Fatal(e)) => return Err(e),
    };
    sink.finish(config.trial_id, &status)?;
    Ok(Transcript {
        trial_config: config.clone(),
        roster_snapshot: classroom.roster.clone(),
        events: runner.events,
        status,
    })
}

/// Rebuilds per-agent questionnaire sheets from a transcript's events.
pub fn score_sheets(transcript: &Transcript) -> Vec<ScoreSheet> {
    let mut sheets: BTreeMap<(Phase, AgentId), ScoreSheet> = BTreeMap::new();
    for e in &transcript.events {
        let (
            EventKind::QuestionnaireItem {
                phase,
                item_id,
                score,
                ..
            },
            Some(agent_id),
        ) = (&e.kind, e.agent_id)
        else {
            continue;
        };
        let label = transcript
            .roster_snapshot
            .iter()
            .find(|a| a.agent_id == agent_id)
            .map(|a| a.label().to_string())
            .unwrap_or_default();
        let sheet = sheets
            .entry((*phase, agent_id))
            .or_insert_with(|| ScoreSheet {
                agent_id,
                trait_label: label,
                phase: *phase,
                trial_id: transcript.trial_config.trial_id,
                scores: BTreeMap::new(),
                missing: Vec::new(),
            });
        match score {
            Some(s) => {
                sheet.scores.insert(item_id.clone(), *s);
            }
            None => sheet.missing.push(item_id.clone()),
        }
    }
    sheets.into_values().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockBackend;
    use crate::persist::{to_jsonl, NullSink};
    use std::sync::Mutex;

    fn counts(t: &Transcript) -> (usize, usize) {
        (t.presentations().count(), t.evaluations().count())
    }

    #[test]
    fn default_trial_shape() {
        let classroom = Classroom::default();
        let config = TrialConfig::new(0, 42, &classroom.roster);
        let t = run_trial(&config, &classroom, &MockBackend::calibrated(), &NullSink).unwrap();
        assert!(t.is_complete());
        assert_eq!(counts(&t), (10, 90));
        for (i, e) in t.events.iter().enumerate() {
            assert_eq!(e.sequence_no, i as u64 + 1);
        }
        for id in 1..=10 {
            let n = t.evaluations().filter(|e| e.agent_id == Some(id)).count();
            assert_eq!(n, 9);
        }
        // 10 agents x 4 items x 2 phases
        let q = t
            .events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::QuestionnaireItem { .. }))
            .count();
        assert_eq!(q, 80);
        assert_eq!(score_sheets(&t).len(), 20);
    }

    #[test]
    fn deterministic() {
        let classroom = Classroom::default();
        let config = TrialConfig::new(0, 42, &classroom.roster);
        let a = run_trial(&config, &classroom, &MockBackend::calibrated(), &NullSink).unwrap();
        let b = run_trial(&config, &classroom, &MockBackend::calibrated(), &NullSink).unwrap();
        assert_eq!(to_jsonl(&a).unwrap(), to_jsonl(&b).unwrap());
    }

    #[test]
    fn consistency_off_skips_questionnaires() {
        let classroom = Classroom::default();
        let mut config = TrialConfig::new(0, 42, &classroom.roster);
        config.consistency_enabled = false;
        let t = run_trial(&config, &classroom, &MockBackend::calibrated(), &NullSink).unwrap();
        assert!(t
            .events
            .iter()
            .all(|e| !matches!(e.kind, EventKind::QuestionnaireItem { .. })));
        assert_eq!(counts(&t), (10, 90));
    }

    struct SilentAgentFive<B>(B);

    impl<B: ChatBackend> ChatBackend for SilentAgentFive<B> {
        fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
            if let Some(RequestTag {
                agent_label,
                purpose: Purpose::Evaluation { round_no: 2, .. },
                ..
            }) = &request.tag
            {
                if agent_label == "outgoing" {
                    return Ok(String::new());
                }
            }
            self.0.complete(request)
        }
        fn name(&self) -> &str {
            "silent-five"
        }
    }

    #[test]
    fn empty_reply_is_recorded_and_trial_continues() {
        let classroom = Classroom::default();
        assert_eq!(classroom.roster[4].label(), "outgoing");
        let config = TrialConfig::new(0, 42, &classroom.roster);
        let t = run_trial(
            &config,
            &classroom,
            &SilentAgentFive(MockBackend::calibrated()),
            &NullSink,
        )
        .unwrap();
        assert!(t.is_complete());
        let e = t
            .evaluations()
            .find(|e| e.agent_id == Some(5) && e.round_no == Some(2))
            .unwrap();
        assert_eq!(e.raw_text, "");
        assert_eq!(e.channel_texts, Some(ChannelTexts::default()));
        assert_eq!(counts(&t), (10, 90));
    }

    struct FailAfter {
        inner: MockBackend,
        left: Mutex<usize>,
    }

    impl ChatBackend for FailAfter {
        fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
            let mut left = self.left.lock().unwrap();
            if *left == 0 {
                return Err(BackendError::Transport("connection refused".into()));
            }
            *left -= 1;
            self.inner.complete(request)
        }
        fn name(&self) -> &str {
            "fail-after"
        }
    }

    #[test]
    fn backend_failure_aborts_with_partial_transcript() {
        let classroom = Classroom::default();
        let config = TrialConfig::new(0, 42, &classroom.roster);
        let backend = FailAfter {
            inner: MockBackend::calibrated(),
            left: Mutex::new(60),
        };
        let t = run_trial(&config, &classroom, &backend, &NullSink).unwrap();
        assert!(matches!(t.status, TrialStatus::Aborted { .. }));
        assert!(!t.events.is_empty());
        assert!(t.evaluations().count() < 90);
    }

    #[test]
    fn bad_order_is_config_error() {
        let classroom = Classroom::default();
        let mut config = TrialConfig::new(0, 42, &classroom.roster);
        config.rounds_order[0] = 2;
        assert!(matches!(
            run_trial(&config, &classroom, &MockBackend::calibrated(), &NullSink),
            Err(TrialError::InvalidConfig(_))
        ));
    }

    #[test]
    fn custom_order_is_followed() {
        let classroom = Classroom::default();
        let mut config = TrialConfig::new(0, 42, &classroom.roster);
        config.rounds_order.reverse();
        let t = run_trial(&config, &classroom, &MockBackend::calibrated(), &NullSink).unwrap();
        let presenters: Vec<_> = t.presentations().map(|e| e.agent_id.unwrap()).collect();
        assert_eq!(presenters, (1..=10).rev().collect::<Vec<_>>());
    }
}
