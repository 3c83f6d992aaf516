//! Channel parsing and Accept/Reject/Silent classification of evaluations.

mod lexicon;
mod parse;

pub use lexicon::{classify_rule_based, LexiconError, PriorityRule, StanceLexicon};
pub use parse::{parse_channels, ChannelTexts};

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    BackendError, ChatBackend, ChatMessage, ChatRequest, Purpose, RequestTag, SamplingParams,
};
use crate::domain::{AgentId, AgentProfile, ClaimId};
use crate::protocol::{EventKind, TranscriptEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stance {
    Accept,
    Reject,
    Silent,
}

impl Stance {
    pub fn is_classified(self) -> bool {
        self != Stance::Silent
    }

    pub fn negated(self) -> Stance {
        match self {
            Stance::Accept => Stance::Reject,
            Stance::Reject => Stance::Accept,
            Stance::Silent => Stance::Silent,
        }
    }
}

/// One evaluator's classified (speak, think) stance on one claim.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StancePair {
    pub evaluator_id: AgentId,
    pub presenter_id: AgentId,
    pub claim_id: ClaimId,
    pub round_no: u32,
    pub trial_id: u32,
    pub speak: Stance,
    pub think: Stance,
}

impl StancePair {
    /// Counted pairs have a definite stance on both channels.
    pub fn is_counted(&self) -> bool {
        self.speak.is_classified() && self.think.is_classified()
    }

    pub fn is_mismatch(&self) -> bool {
        self.speak != self.think
    }
}

/// Stance of one channel, with a note when the classifier had to fall back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classification {
    pub stance: Stance,
    pub warning: Option<String>,
}

impl From<Stance> for Classification {
    fn from(stance: Stance) -> Self {
        Self {
            stance,
            warning: None,
        }
    }
}

pub const JUDGE_SYSTEM_PROMPT: &str =
    "You label classroom discussion responses. Reply with exactly one word: ACCEPT, REJECT or UNCLEAR.";

fn judge_prompt(claim: &str, text: &str) -> String {
    format!(
        "Claim under discussion: \"{claim}\"\n\
         Student response: \"{text}\"\n\
         Does the response accept the claim as true (ACCEPT), reject it (REJECT), \
         or neither (UNCLEAR)? Answer with one word."
    )
}

/// Asks `judge` for a one-word verdict. Absent or blank text is `Silent`
/// without a request; a verdict outside ACCEPT/REJECT/UNCLEAR is `Silent`
/// with a warning.
pub fn classify_with_judge(
    text: Option<&str>,
    claim: &str,
    judge: &dyn ChatBackend,
    params: &SamplingParams,
) -> Result<Classification, BackendError> {
    let Some(text) = text.filter(|t| !t.trim().is_empty()) else {
        return Ok(Stance::Silent.into());
    };
    let request = ChatRequest::new(
        vec![
            ChatMessage::system(JUDGE_SYSTEM_PROMPT),
            ChatMessage::user(judge_prompt(claim, text)),
        ],
        params,
    )
    .tagged(RequestTag {
        trial_seed: 0,
        agent_label: "judge".into(),
        purpose: Purpose::Judge {
            response_text: text.to_string(),
        },
    });
    let reply = judge.complete(&request)?;
    let verdict = reply
        .trim()
        .trim_matches(|c: char| !c.is_ascii_alphabetic())
        .to_ascii_uppercase();
    Ok(match verdict.as_str() {
        "ACCEPT" => Stance::Accept.into(),
        "REJECT" => Stance::Reject.into(),
        "UNCLEAR" => Stance::Silent.into(),
        _ => Classification {
            stance: Stance::Silent,
            warning: Some(format!(
                "judge returned unrecognised verdict {:?}",
                reply.trim()
            )),
        },
    })
}

/// How channel text is turned into a stance.
#[derive(Clone, Copy)]
pub enum StanceMode<'a> {
    Rule(&'a StanceLexicon),
    Judge {
        backend: &'a dyn ChatBackend,
        params: &'a SamplingParams,
    },
}

impl StanceMode<'_> {
    pub fn classify(
        &self,
        text: Option<&str>,
        claim: &str,
    ) -> Result<Classification, BackendError> {
        match self {
            StanceMode::Rule(lexicon) => Ok(classify_rule_based(text, Some(claim), lexicon).into()),
            StanceMode::Judge { backend, params } => {
                classify_with_judge(text, claim, *backend, params)
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum StanceError {
    #[error("event {sequence_no} is a {kind}, not an evaluation")]
    NotAnEvaluation {
        sequence_no: u64,
        kind: &'static str,
    },
    #[error("event {sequence_no}: no agent presents claim {claim_id}")]
    UnknownClaim { sequence_no: u64, claim_id: ClaimId },
    #[error("event {sequence_no} has no evaluator id")]
    MissingAgent { sequence_no: u64 },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Parses an evaluation's channels and classifies each independently against
/// the presented claim. Returns the pair and any classifier warnings.
pub fn to_stance_pair(
    event: &TranscriptEvent,
    trial_id: u32,
    roster: &[AgentProfile],
    mode: StanceMode<'_>,
) -> Result<(StancePair, Vec<String>), StanceError> {
    let EventKind::Evaluation {
        presenter_id,
        claim_id,
    } = event.kind
    else {
        return Err(StanceError::NotAnEvaluation {
            sequence_no: event.sequence_no,
            kind: event.kind.name(),
        });
    };
    let evaluator_id = event.agent_id.ok_or(StanceError::MissingAgent {
        sequence_no: event.sequence_no,
    })?;
    let claim = roster
        .iter()
        .find(|a| a.claim.claim_id == claim_id)
        .map(|a| a.claim.text.as_str())
        .ok_or(StanceError::UnknownClaim {
            sequence_no: event.sequence_no,
            claim_id,
        })?;

    let channels = parse_channels(&event.raw_text);
    let speak = mode.classify(channels.speak_text.as_deref(), claim)?;
    let think = mode.classify(channels.think_text.as_deref(), claim)?;
    let warnings = speak.warning.into_iter().chain(think.warning).collect();
    let pair = StancePair {
        evaluator_id,
        presenter_id,
        claim_id,
        round_no: event.round_no.unwrap_or_default(),
        trial_id,
        speak: speak.stance,
        think: think.stance,
    };
    Ok((pair, warnings))
}

/// One line of the annotated stance corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedItem {
    pub raw_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim: Option<String>,
    pub speak: Stance,
    pub think: Stance,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read corpus: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

pub fn parse_corpus(text: &str) -> Result<Vec<AnnotatedItem>, CorpusError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|source| CorpusError::Parse {
                line: i + 1,
                source,
            })
        })
        .collect()
}

pub fn load_corpus(path: &Path) -> Result<Vec<AnnotatedItem>, CorpusError> {
    parse_corpus(&std::fs::read_to_string(path)?)
}

/// The bundled annotated corpus.
pub fn bundled_corpus() -> Vec<AnnotatedItem> {
    parse_corpus(include_str!("../../data/stance_corpus.jsonl")).expect("bundled corpus parses")
}

/// Fraction of items whose rule-based (speak, think) matches the annotation
/// on both channels.
pub fn corpus_agreement(items: &[AnnotatedItem], lexicon: &StanceLexicon) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    let agree = items
        .iter()
        .filter(|item| {
            let channels = parse_channels(&item.raw_text);
            let claim = item.claim.as_deref();
            classify_rule_based(channels.speak_text.as_deref(), claim, lexicon) == item.speak
                && classify_rule_based(channels.think_text.as_deref(), claim, lexicon) == item.think
        })
        .count();
    agree as f64 / items.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::default_roster;
    use crate::protocol::ModeratorCue;

    struct Scripted(Result<String, BackendError>);

    impl ChatBackend for Scripted {
        fn complete(&self, _request: &ChatRequest) -> Result<String, BackendError> {
            self.0.clone()
        }
        fn name(&self) -> &str {
            "scripted"
        }
    }

    fn judge(reply: Result<&str, BackendError>) -> Result<Classification, BackendError> {
        let backend = Scripted(reply.map(str::to_string));
        classify_with_judge(
            Some("some text"),
            "claim",
            &backend,
            &SamplingParams::default(),
        )
    }

    #[test]
    fn judge_accept_maps() {
        assert_eq!(judge(Ok("ACCEPT")).unwrap(), Stance::Accept.into());
        assert_eq!(judge(Ok(" reject.\n")).unwrap(), Stance::Reject.into());
        assert_eq!(judge(Ok("UNCLEAR")).unwrap(), Stance::Silent.into());
    }

    #[test]
    fn judge_garbage_is_silent_with_warning() {
        let c = judge(Ok("maybe?")).unwrap();
        assert_eq!(c.stance, Stance::Silent);
        assert!(c.warning.unwrap().contains("maybe?"));
    }

    #[test]
    fn judge_error_propagates() {
        let err = judge(Err(BackendError::Transport("down".into()))).unwrap_err();
        assert_eq!(err, BackendError::Transport("down".into()));
    }

    fn evaluation(raw: &str) -> TranscriptEvent {
        TranscriptEvent {
            sequence_no: 7,
            kind: EventKind::Evaluation {
                presenter_id: 1,
                claim_id: 1,
            },
            agent_id: Some(2),
            round_no: Some(1),
            raw_text: raw.to_string(),
            channel_texts: Some(parse_channels(raw)),
        }
    }

    #[test]
    fn pair_from_mixed_evaluation() {
        let lexicon = StanceLexicon::default();
        let event = evaluation("[Speak]: Yes, that is fascinating. [Think]: No, surely false.");
        let (pair, warnings) =
            to_stance_pair(&event, 3, &default_roster(), StanceMode::Rule(&lexicon)).unwrap();
        assert_eq!((pair.speak, pair.think), (Stance::Accept, Stance::Reject));
        assert_eq!(
            (pair.evaluator_id, pair.presenter_id, pair.trial_id),
            (2, 1, 3)
        );
        assert!(warnings.is_empty());
        assert!(pair.is_counted() && pair.is_mismatch());
    }

    #[test]
    fn empty_evaluation_is_silent_pair() {
        let lexicon = StanceLexicon::default();
        let (pair, _) = to_stance_pair(
            &evaluation(""),
            0,
            &default_roster(),
            StanceMode::Rule(&lexicon),
        )
        .unwrap();
        assert_eq!((pair.speak, pair.think), (Stance::Silent, Stance::Silent));
        assert!(!pair.is_counted());
    }

    #[test]
    fn presentation_is_not_an_evaluation() {
        let lexicon = StanceLexicon::default();
        let mut event = evaluation("x");
        event.kind = EventKind::Presentation { claim_id: 1 };
        assert!(matches!(
            to_stance_pair(&event, 0, &default_roster(), StanceMode::Rule(&lexicon)),
            Err(StanceError::NotAnEvaluation { .. })
        ));
        event.kind = EventKind::ModeratorUtterance {
            cue: ModeratorCue::Opening,
        };
        assert!(to_stance_pair(&event, 0, &default_roster(), StanceMode::Rule(&lexicon)).is_err());
    }

    #[test]
    fn channels_classified_independently() {
        // The think channel is judged alone even when speak would flip it.
        let lexicon = StanceLexicon::default();
        let a = to_stance_pair(
            &evaluation("[Speak]: It's true. [Think]: I doubt it."),
            0,
            &default_roster(),
            StanceMode::Rule(&lexicon),
        )
        .unwrap()
        .0;
        let b = to_stance_pair(
            &evaluation("[Speak]: It's false. [Think]: I doubt it."),
            0,
            &default_roster(),
            StanceMode::Rule(&lexicon),
        )
        .unwrap()
        .0;
        assert_eq!(a.think, b.think);
    }

    #[test]
    fn judge_mode_skips_absent_channel() {
        struct Panics;
        impl ChatBackend for Panics {
            fn complete(&self, _: &ChatRequest) -> Result<String, BackendError> {
                panic!("must not be called")
            }
            fn name(&self) -> &str {
                "panics"
            }
        }
        let c = classify_with_judge(None, "c", &Panics, &SamplingParams::default()).unwrap();
        assert_eq!(c.stance, Stance::Silent);
    }
}
