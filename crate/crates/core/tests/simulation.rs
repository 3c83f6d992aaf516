//! Whole trials against the mock backend: persistence, context privacy and
//! questionnaire scoring.

use std::sync::Mutex;

use traitsim_core::backend::{BackendError, ChatBackend, ChatRequest, Purpose, Role};
use traitsim_core::persist::{read_transcript, to_jsonl, JsonlDirSink, MemorySink, NullSink};
use traitsim_core::protocol::score_sheets;
use traitsim_core::{
    run_trial, stability_metrics, Classroom, MockBackend, Phase, ScoreSheet, TrialConfig,
};

/// Records every request it forwards.
struct Recording {
    inner: MockBackend,
    seen: Mutex<Vec<ChatRequest>>,
}

impl Recording {
    fn new() -> Self {
        Self {
            inner: MockBackend::calibrated().with_think_memos(true),
            seen: Mutex::new(Vec::new()),
        }
    }
}

impl ChatBackend for Recording {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        self.seen.lock().unwrap().push(request.clone());
        self.inner.complete(request)
    }
    fn name(&self) -> &str {
        "recording"
    }
}

fn evaluation_prompts(seen: &[ChatRequest], round: u32) -> Vec<String> {
    seen.iter()
        .filter(|r| matches!(r.tag.as_ref().map(|t| &t.purpose), Some(Purpose::Evaluation { round_no, .. }) if *round_no == round))
        .map(|r| r.messages.iter().filter(|m| m.role == Role::User).map(|m| m.content.clone()).collect())
        .collect()
}

#[test]
fn jsonl_sink_file_reads_back_as_returned_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let sink = JsonlDirSink::new(dir.path()).unwrap();
    let classroom = Classroom::default();
    let config = TrialConfig::new(3, 45, &classroom.roster);
    let transcript = run_trial(&config, &classroom, &MockBackend::calibrated(), &sink).unwrap();
    let read = read_transcript(&sink.path_for(3)).unwrap();
    assert_eq!(read, transcript);

    let memory = MemorySink::new();
    run_trial(&config, &classroom, &MockBackend::calibrated(), &memory).unwrap();
    assert_eq!(memory.contents(3).unwrap(), to_jsonl(&transcript).unwrap());
}

#[test]
fn seeds_change_replies_but_not_shape() {
    let classroom = Classroom::default();
    let backend = MockBackend::calibrated();
    let a = run_trial(
        &TrialConfig::new(0, 1, &classroom.roster),
        &classroom,
        &backend,
        &NullSink,
    )
    .unwrap();
    let b = run_trial(
        &TrialConfig::new(0, 2, &classroom.roster),
        &classroom,
        &backend,
        &NullSink,
    )
    .unwrap();
    assert_eq!(a.events.len(), b.events.len());
    assert_ne!(a.events, b.events);
}

#[test]
fn shared_context_shows_earlier_presentations_private_does_not() {
    let classroom = Classroom::default();
    let first_claim = &classroom.roster[0].claim.text;
    for sharing in [true, false] {
        let backend = Recording::new();
        let mut config = TrialConfig::new(0, 9, &classroom.roster);
        config.context_sharing = sharing;
        config.consistency_enabled = false;
        run_trial(&config, &classroom, &backend, &NullSink).unwrap();
        let seen = backend.seen.lock().unwrap();
        let later = evaluation_prompts(&seen, 3);
        assert_eq!(later.len(), 9);
        assert!(
            later.iter().all(|p| p.contains(first_claim) == sharing),
            "sharing={sharing}"
        );
    }
}

#[test]
fn think_memos_never_reach_another_request() {
    let classroom = Classroom::default();
    let backend = Recording::new();
    let config = TrialConfig::new(0, 11, &classroom.roster);
    let transcript = run_trial(&config, &classroom, &backend, &NullSink).unwrap();
    let seen = backend.seen.lock().unwrap();
    let memos: Vec<String> = transcript
        .evaluations()
        .filter_map(|e| e.channel_texts.as_ref()?.think_text.clone())
        .filter_map(|t| {
            t.split("(memo ")
                .nth(1)
                .map(|m| m.trim_end_matches(')').to_string())
        })
        .collect();
    assert!(!memos.is_empty());
    for request in seen.iter() {
        for m in &request.messages {
            assert!(
                memos.iter().all(|memo| !m.content.contains(memo.as_str())),
                "{}",
                m.content
            );
        }
    }
}

#[test]
fn questionnaire_scores_follow_the_persona_pole() {
    let classroom = Classroom::default();
    let backend = MockBackend::calibrated();
    let mut sheets: Vec<ScoreSheet> = Vec::new();
    for trial in 0..10 {
        let t = run_trial(
            &TrialConfig::new(trial, 100 + u64::from(trial), &classroom.roster),
            &classroom,
            &backend,
            &NullSink,
        )
        .unwrap();
        sheets.extend(score_sheets(&t));
    }
    assert_eq!(sheets.len(), 10 * 2 * classroom.roster.len());
    let of = |label: &str, phase: Phase| -> Vec<ScoreSheet> {
        sheets
            .iter()
            .filter(|s| s.trait_label == label && s.phase == phase)
            .cloned()
            .collect()
    };
    for (label, high) in [
        ("confident", true),
        ("sensitive", false),
        ("curious", true),
        ("careless", false),
    ] {
        let r =
            stability_metrics(label, &of(label, Phase::Pre), &of(label, Phase::Post), 0.5).unwrap();
        assert_eq!(r.trial_count, 10);
        if high {
            assert!(r.mean_pre > 4.0, "{label} {}", r.mean_pre);
        } else {
            assert!(r.mean_pre < 2.0, "{label} {}", r.mean_pre);
        }
        assert!(r.mean_abs_diff < 1.0, "{label} {}", r.mean_abs_diff);
    }
}
