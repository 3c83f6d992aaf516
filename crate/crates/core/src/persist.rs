//! Line-delimited transcript records. Each trial file holds a config header,
//! a roster header, one line per event, and a closing status line.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::domain::AgentProfile;
use crate::protocol::{Transcript, TranscriptEvent, TrialConfig, TrialStatus};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SinkError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("trial {0} was appended to before begin")]
    NotStarted(u32),
    #[error("trial {0} was already started")]
    AlreadyStarted(u32),
    #[error("serialization failed: {0}")]
    Serialize(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TranscriptParseError {
    #[error("line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("line {line}: unknown schema_version {version}")]
    UnknownSchema { line: usize, version: String },
    #[error("line {line}: expected {expected} header")]
    MissingHeader { line: usize, expected: &'static str },
    #[error("line {line}: transcript ends without a status record")]
    MissingStatus { line: usize },
    #[error("line {line}: sequence_no {found} out of order (expected {expected})")]
    OutOfOrder {
        line: usize,
        expected: u64,
        found: u64,
    },
}

#[derive(Serialize)]
struct Line<'a, T: Serialize> {
    schema_version: u32,
    record: &'a str,
    #[serde(flatten)]
    body: T,
}

#[derive(Serialize, Deserialize)]
struct ConfigBody<C> {
    trial_config: C,
}

#[derive(Serialize, Deserialize)]
struct RosterBody<R> {
    agents: R,
}

#[derive(Serialize, Deserialize)]
struct StatusBody<S> {
    status: S,
}

fn line<T: Serialize>(record: &str, body: T) -> Result<String, SinkError> {
    let mut s = serde_json::to_string(&Line {
        schema_version: SCHEMA_VERSION,
        record,
        body,
    })
    .map_err(|e| SinkError::Serialize(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn config_line(config: &TrialConfig) -> Result<String, SinkError> {
    line(
        "config",
        ConfigBody {
            trial_config: config,
        },
    )
}

pub fn roster_line(roster: &[AgentProfile]) -> Result<String, SinkError> {
    line("roster", RosterBody { agents: roster })
}

pub fn event_line(event: &TranscriptEvent) -> Result<String, SinkError> {
    line("event", event)
}

pub fn status_line(status: &TrialStatus) -> Result<String, SinkError> {
    line("status", StatusBody { status })
}

/// The exact bytes a sink writes for `transcript`.
pub fn to_jsonl(transcript: &Transcript) -> Result<String, SinkError> {
    let mut out = config_line(&transcript.trial_config)?;
    out.push_str(&roster_line(&transcript.roster_snapshot)?);
    for e in &transcript.events {
        out.push_str(&event_line(e)?);
    }
    out.push_str(&status_line(&transcript.status)?);
    Ok(out)
}

pub fn parse_transcript(text: &str) -> Result<Transcript, TranscriptParseError> {
    let mut config: Option<TrialConfig> = None;
    let mut roster: Option<Vec<AgentProfile>> = None;
    let mut events: Vec<TranscriptEvent> = Vec::new();
    let mut status: Option<TrialStatus> = None;
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        if raw.trim().is_empty() {
            continue;
        }
        let corrupt = |message: String| TranscriptParseError::Corrupt { line, message };
        let value: Value = serde_json::from_str(raw).map_err(|e| corrupt(e.to_string()))?;
        match value.get("schema_version") {
            Some(v) if v.as_u64() == Some(SCHEMA_VERSION as u64) => {}
            Some(v) => {
                return Err(TranscriptParseError::UnknownSchema {
                    line,
                    version: v.to_string(),
                })
            }
            None => return Err(corrupt("missing schema_version".into())),
        }
        if status.is_some() {
            return Err(corrupt("record after the status line".into()));
        }
        let record = value
            .get("record")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        match record.as_str() {
            "config" if config.is_none() => {
                let body: ConfigBody<TrialConfig> =
                    serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;
                config = Some(body.trial_config);
            }
            "roster" if config.is_some() && roster.is_none() => {
                let body: RosterBody<Vec<AgentProfile>> =
                    serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;
                roster = Some(body.agents);
            }
            _ if config.is_none() => {
                return Err(TranscriptParseError::MissingHeader {
                    line,
                    expected: "config",
                })
            }
            _ if roster.is_none() => {
                return Err(TranscriptParseError::MissingHeader {
                    line,
                    expected: "roster",
                })
            }
            "event" => {
                let event: TranscriptEvent =
                    serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;
                let expected = events.last().map_or(1, |e| e.sequence_no + 1);
                if event.sequence_no != expected {
                    return Err(TranscriptParseError::OutOfOrder {
                        line,
                        expected,
                        found: event.sequence_no,
                    });
                }
                events.push(event);
            }
            "status" => {
                let body: StatusBody<TrialStatus> =
                    serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;
                status = Some(body.status);
            }
            other => return Err(corrupt(format!("unexpected record {other:?}"))),
        }
    }

    let (Some(trial_config), Some(roster_snapshot)) = (config, roster) else {
        return Err(TranscriptParseError::MissingHeader {
            line: last_line + 1,
            expected: "config",
        });
    };
    let status = status.ok_or(TranscriptParseError::MissingStatus {
        line: last_line + 1,
    })?;
    Ok(Transcript {
        trial_config,
        roster_snapshot,
        events,
        status,
    })
}

#[derive(Debug, Error)]
pub enum ReadTranscriptError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: TranscriptParseError,
    },
}

pub fn read_transcript(path: &Path) -> Result<Transcript, ReadTranscriptError> {
    let text = fs::read_to_string(path).map_err(|source| ReadTranscriptError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_transcript(&text).map_err(|source| ReadTranscriptError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

pub fn transcript_file_name(trial_id: u32) -> String {
    format!("trial_{trial_id:04}.jsonl")
}

/// Receives a trial's records as they happen. Shared between concurrently
/// running trials, keyed by trial id.
pub trait TranscriptSink: Send + Sync {
    fn begin(&self, config: &TrialConfig, roster: &[AgentProfile]) -> Result<(), SinkError>;
    fn append(&self, trial_id: u32, event: &TranscriptEvent) -> Result<(), SinkError>;
    fn finish(&self, trial_id: u32, status: &TrialStatus) -> Result<(), SinkError>;
}

/// Discards everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl TranscriptSink for NullSink {
    fn begin(&self, _: &TrialConfig, _: &[AgentProfile]) -> Result<(), SinkError> {
        Ok(())
    }
    fn append(&self, _: u32, _: &TranscriptEvent) -> Result<(), SinkError> {
        Ok(())
    }
    fn finish(&self, _: u32, _: &TrialStatus) -> Result<(), SinkError> {
        Ok(())
    }
}

/// Keeps each trial's serialized lines in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    trials: Mutex<HashMap<u32, String>>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contents(&self, trial_id: u32) -> Option<String> {
        self.trials
            .lock()
            .expect("sink lock")
            .get(&trial_id)
            .cloned()
    }

    fn push(&self, trial_id: u32, text: String) -> Result<(), SinkError> {
        let mut trials = self.trials.lock().expect("sink lock");
        trials
            .get_mut(&trial_id)
            .ok_or(SinkError::NotStarted(trial_id))?
            .push_str(&text);
        Ok(())
    }
}

impl TranscriptSink for MemorySink {
    fn begin(&self, config: &TrialConfig, roster: &[AgentProfile]) -> Result<(), SinkError> {
        let text = config_line(config)? + &roster_line(roster)?;
        let mut trials = self.trials.lock().expect("sink lock");
        if trials.contains_key(&config.trial_id) {
            return Err(SinkError::AlreadyStarted(config.trial_id));
        }
        trials.insert(config.trial_id, text);
        Ok(())
    }
    fn append(&self, trial_id: u32, event: &TranscriptEvent) -> Result<(), SinkError> {
        self.push(trial_id, event_line(event)?)
    }
    fn finish(&self, trial_id: u32, status: &TrialStatus) -> Result<(), SinkError> {
        self.push(trial_id, status_line(status)?)
    }
}

/// Writes `trial_NNNN.jsonl` files into a directory, flushing every line so
/// an interrupted run leaves readable prefixes behind.
#[derive(Debug)]
pub struct JsonlDirSink {
    dir: PathBuf,
    open: Mutex<HashMap<u32, (PathBuf, BufWriter<File>)>>,
}

impl JsonlDirSink {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, SinkError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| SinkError::Io {
            path: dir.clone(),
            source,
        })?;
        Ok(Self {
            dir,
            open: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, trial_id: u32) -> PathBuf {
        self.dir.join(transcript_file_name(trial_id))
    }

    fn write(&self, trial_id: u32, text: &str, close: bool) -> Result<(), SinkError> {
        let mut open = self.open.lock().expect("sink lock");
        let (path, writer) = open
            .get_mut(&trial_id)
            .ok_or(SinkError::NotStarted(trial_id))?;
        let io = |source| SinkError::Io {
            path: path.clone(),
            source,
        };
        writer.write_all(text.as_bytes()).map_err(io)?;
        writer.flush().map_err(io)?;
        if close {
            open.remove(&trial_id);
        }
        Ok(())
    }
}

impl TranscriptSink for JsonlDirSink {
    fn begin(&self, config: &TrialConfig, roster: &[AgentProfile]) -> Result<(), SinkError> {
        let path = self.path_for(config.trial_id);
        let file = File::create(&path).map_err(|source| SinkError::Io {
            path: path.clone(),
            source,
        })?;
        {
            let mut open = self.open.lock().expect("sink lock");
            if open.contains_key(&config.trial_id) {
                return Err(SinkError::AlreadyStarted(config.trial_id));
            }
            open.insert(config.trial_id, (path, BufWriter::new(file)));
        }
        self.write(
            config.trial_id,
            &(config_line(config)? + &roster_line(roster)?),
            false,
        )
    }
    fn append(&self, trial_id: u32, event: &TranscriptEvent) -> Result<(), SinkError> {
        self.write(trial_id, &event_line(event)?, false)
    }
    fn finish(&self, trial_id: u32, status: &TrialStatus) -> Result<(), SinkError> {
        self.write(trial_id, &status_line(status)?, true)
    }
}
