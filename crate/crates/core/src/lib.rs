//! Deterministic simulation of a classroom misinformation experiment with
//! Big-Five persona agents: the trial protocol, chat backends (a seeded mock
//! and an OpenAI-compatible HTTP client), stance classification of the
//! public and private response channels, questionnaire consistency, and the
//! per-trait tallies.

pub mod analytics;
pub mod backend;
pub mod consistency;
pub mod domain;
pub mod persist;
pub mod protocol;
pub mod reference;
pub mod stance;
pub mod templates;
pub mod validation;

pub use analytics::{
    figure_series, rates, tally, validate_table, FigureRecord, RateSummary, ResponseTable,
};
pub use backend::{
    ChatBackend, ChatMessage, ChatRequest, HttpBackend, MockBackend, SamplingParams,
};
pub use consistency::{stability_metrics, ConsistencyResult, Phase, Questionnaire, ScoreSheet};
pub use domain::{default_roster, AgentId, AgentProfile, ClaimId, Dimension, Polarity, TraitPole};
pub use persist::{JsonlDirSink, MemorySink, NullSink, TranscriptSink};
pub use protocol::{run_trial, Classroom, Transcript, TranscriptEvent, TrialConfig, TrialStatus};
pub use stance::{Stance, StanceLexicon, StanceMode, StancePair};
pub use templates::TemplateSet;
pub use validation::ValidationReport;
