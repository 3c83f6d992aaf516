//! Per-trait response tables, rates, feasibility checks and the
//! discrepancy-ordered figure series.

use std::collections::BTreeMap;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AgentId, AgentProfile};
use crate::stance::{Stance, StancePair};
use crate::validation::{Rule, ValidationReport};

/// Speak/Think acceptance tallies for one trait over counted pairs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResponseTable {
    pub trait_label: String,
    pub speak_yes: u64,
    pub speak_no: u64,
    pub think_yes: u64,
    pub think_no: u64,
    pub diff: u64,
    pub total: u64,
}

impl ResponseTable {
    pub fn new(
        label: &str,
        speak_yes: u64,
        speak_no: u64,
        think_yes: u64,
        think_no: u64,
        diff: u64,
        total: u64,
    ) -> Self {
        Self {
            trait_label: label.to_string(),
            speak_yes,
            speak_no,
            think_yes,
            think_no,
            diff,
            total,
        }
    }

    pub fn empty(label: &str) -> Self {
        Self::new(label, 0, 0, 0, 0, 0, 0)
    }

    fn record(&mut self, pair: &StancePair) {
        self.total += 1;
        match pair.speak {
            Stance::Accept => self.speak_yes += 1,
            _ => self.speak_no += 1,
        }
        match pair.think {
            Stance::Accept => self.think_yes += 1,
            _ => self.think_no += 1,
        }
        if pair.is_mismatch() {
            self.diff += 1;
        }
    }
}

impl AddAssign<&ResponseTable> for ResponseTable {
    fn add_assign(&mut self, rhs: &ResponseTable) {
        self.speak_yes += rhs.speak_yes;
        self.speak_no += rhs.speak_no;
        self.think_yes += rhs.think_yes;
        self.think_no += rhs.think_no;
        self.diff += rhs.diff;
        self.total += rhs.total;
    }
}

impl Add<&ResponseTable> for ResponseTable {
    type Output = ResponseTable;

    fn add(mut self, rhs: &ResponseTable) -> ResponseTable {
        self += rhs;
        self
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("stance pair from trial {trial_id} names evaluator {evaluator_id}, which is not in the roster")]
    UnknownEvaluator {
        evaluator_id: AgentId,
        trial_id: u32,
    },
    #[error("trait `{0}` has no counted responses")]
    ZeroTotal(String),
    #[error("trait `{label}`: {total} responses exceed {opportunities} opportunities")]
    Opportunities {
        label: String,
        total: u64,
        opportunities: u64,
    },
    #[error("table line {line}: {message}")]
    Parse { line: u64, message: String },
}

/// One table per roster agent, in roster order. Pairs with a silent channel
/// are dropped before counting.
pub fn tally(
    pairs: &[StancePair],
    roster: &[AgentProfile],
) -> Result<Vec<ResponseTable>, AnalyticsError> {
    let index: BTreeMap<AgentId, usize> = roster
        .iter()
        .enumerate()
        .map(|(i, a)| (a.agent_id, i))
        .collect();
    let mut tables: Vec<ResponseTable> = roster
        .iter()
        .map(|a| ResponseTable::empty(a.label()))
        .collect();
    for pair in pairs {
        let &slot = index
            .get(&pair.evaluator_id)
            .ok_or(AnalyticsError::UnknownEvaluator {
                evaluator_id: pair.evaluator_id,
                trial_id: pair.trial_id,
            })?;
        if pair.is_counted() {
            tables[slot].record(pair);
        }
    }
    Ok(tables)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub trait_label: String,
    pub speak_accept_rate: f64,
    pub think_accept_rate: f64,
    pub discrepancy_rate: f64,
    pub response_rate: f64,
}

impl RateSummary {
    pub fn speak_reject_rate(&self) -> f64 {
        1.0 - self.speak_accept_rate
    }

    pub fn think_reject_rate(&self) -> f64 {
        1.0 - self.think_accept_rate
    }
}

pub fn rates(table: &ResponseTable, opportunities: u64) -> Result<RateSummary, AnalyticsError> {
    if table.total == 0 {
        return Err(AnalyticsError::ZeroTotal(table.trait_label.clone()));
    }
    if opportunities < table.total {
        return Err(AnalyticsError::Opportunities {
            label: table.trait_label.clone(),
            total: table.total,
            opportunities,
        });
    }
    let total = table.total as f64;
    Ok(RateSummary {
        trait_label: table.trait_label.clone(),
        speak_accept_rate: table.speak_yes as f64 / total,
        think_accept_rate: table.think_yes as f64 / total,
        discrepancy_rate: table.diff as f64 / total,
        response_rate: total / opportunities as f64,
    })
}

/// Checks that a table could arise from instance-level pairs: both channels
/// sum to `total`, and `diff` is reachable given the marginals
/// (`|sy - ty| <= diff <= min(sy, tn) + min(sn, ty)`, same parity as
/// `sy - ty`).
pub fn validate_table(table: &ResponseTable) -> ValidationReport {
    let mut report = ValidationReport::default();
    let t = table;
    let label = &t.trait_label;
    if t.speak_yes + t.speak_no != t.total {
        report.push(
            Rule::SpeakMarginal,
            format!(
                "{label}: speak yes {} + no {} != total {}",
                t.speak_yes, t.speak_no, t.total
            ),
        );
    }
    if t.think_yes + t.think_no != t.total {
        report.push(
            Rule::ThinkMarginal,
            format!(
                "{label}: think yes {} + no {} != total {}",
                t.think_yes, t.think_no, t.total
            ),
        );
    }
    let floor = t.speak_yes.abs_diff(t.think_yes);
    if t.diff < floor {
        report.push(
            Rule::DiffFloor,
            format!(
                "{label}: diff {} below |speak yes - think yes| = {floor}",
                t.diff
            ),
        );
    }
    if t.diff % 2 != floor % 2 {
        report.push(
            Rule::DiffParity,
            format!("{label}: diff {} and {floor} differ in parity", t.diff),
        );
    }
    let cap = t.speak_yes.min(t.think_no) + t.speak_no.min(t.think_yes);
    if t.diff > cap {
        report.push(
            Rule::DiffCap,
            format!("{label}: diff {} above attainable maximum {cap}", t.diff),
        );
    }
    report
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FigureRecord {
    pub trait_label: String,
    pub speak_yes: u64,
    pub speak_no: u64,
    pub think_yes: u64,
    pub think_no: u64,
    pub diff: u64,
}

/// Grouped Speak/Think bars ordered by discrepancy, largest first; equal
/// discrepancies are ordered by trait label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FigureSeries {
    pub records: Vec<FigureRecord>,
}

pub fn figure_series(tables: &[ResponseTable]) -> FigureSeries {
    let mut records: Vec<FigureRecord> = tables
        .iter()
        .map(|t| FigureRecord {
            trait_label: t.trait_label.clone(),
            speak_yes: t.speak_yes,
            speak_no: t.speak_no,
            think_yes: t.think_yes,
            think_no: t.think_no,
            diff: t.diff,
        })
        .collect();
    records.sort_by(|a, b| {
        b.diff
            .cmp(&a.diff)
            .then_with(|| a.trait_label.cmp(&b.trait_label))
    });
    FigureSeries { records }
}

pub const TABLE4_HEADER: [&str; 7] = [
    "Personality",
    "Speak Yes",
    "Speak No",
    "Think Yes",
    "Think No",
    "Diff",
    "Total",
];

/// Tab-separated response tables with a header row.
pub fn table4_tsv(tables: &[ResponseTable]) -> String {
    let mut writer = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .from_writer(Vec::new());
    writer.write_record(TABLE4_HEADER).expect("in-memory write");
    for t in tables {
        writer
            .write_record([
                t.trait_label.clone(),
                t.speak_yes.to_string(),
                t.speak_no.to_string(),
                t.think_yes.to_string(),
                t.think_no.to_string(),
                t.diff.to_string(),
                t.total.to_string(),
            ])
            .expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("flush")).expect("utf-8")
}

pub fn parse_table4_tsv(text: &str) -> Result<Vec<ResponseTable>, AnalyticsError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .from_reader(text.as_bytes());
    let mut tables = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| AnalyticsError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or_default(),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or_default();
        if record.len() != TABLE4_HEADER.len() {
            return Err(AnalyticsError::Parse {
                line,
                message: format!("expected 7 columns, got {}", record.len()),
            });
        }
        let n = |i: usize| {
            record[i]
                .trim()
                .parse::<u64>()
                .map_err(|e| AnalyticsError::Parse {
                    line,
                    message: format!("column `{}`: {e}", TABLE4_HEADER[i]),
                })
        };
        tables.push(ResponseTable::new(
            &record[0],
            n(1)?,
            n(2)?,
            n(3)?,
            n(4)?,
            n(5)?,
            n(6)?,
        ));
    }
    Ok(tables)
}

pub fn rates_tsv(summaries: &[RateSummary]) -> String {
    let mut out = String::from(
        "Personality\tSpeak accept\tSpeak reject\tThink accept\tDiscrepancy\tResponse rate\n",
    );
    for s in summaries {
        out.push_str(&format!(
            "{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\n",
            s.trait_label,
            s.speak_accept_rate,
            s.speak_reject_rate(),
            s.think_accept_rate,
            s.discrepancy_rate,
            s.response_rate
        ));
    }
    out
}
