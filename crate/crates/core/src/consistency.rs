//! Pre/post Likert questionnaires and personality-stability metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backend::{
    BackendError, ChatBackend, ChatMessage, ChatRequest, Purpose, RequestTag, SamplingParams,
};
use crate::domain::{AgentId, AgentProfile, Dimension, TraitPole};
use crate::templates::{TemplateKind, TemplateSet};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pre,
    Post,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Pre => "pre",
            Phase::Post => "post",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Keying {
    Positive,
    Reverse,
}

impl Keying {
    /// Reverse-keyed items score `6 - raw`.
    pub fn apply(self, raw: u8) -> u8 {
        match self {
            Keying::Positive => raw,
            Keying::Reverse => 6 - raw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LikertItem {
    pub item_id: String,
    pub statement: String,
    pub dimension: Dimension,
    pub keying: Keying,
}

#[derive(Debug, Error)]
pub enum QuestionnaireError {
    #[error("failed to read questionnaire: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed questionnaire: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("questionnaire item `{0}` is duplicated")]
    DuplicateItem(String),
    #[error("questionnaire item `{0}` has an empty statement")]
    EmptyStatement(String),
    #[error("questionnaire has no items for {0}")]
    NoItems(Dimension),
}

/// Every statement of a questionnaire, across dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Questionnaire {
    items: Vec<LikertItem>,
}

impl Questionnaire {
    pub fn new(items: Vec<LikertItem>) -> Result<Self, QuestionnaireError> {
        let mut ids = BTreeSet::new();
        for item in &items {
            if !ids.insert(item.item_id.as_str()) {
                return Err(QuestionnaireError::DuplicateItem(item.item_id.clone()));
            }
            if item.statement.trim().is_empty() {
                return Err(QuestionnaireError::EmptyStatement(item.item_id.clone()));
            }
        }
        for dimension in Dimension::ALL {
            if !items.iter().any(|i| i.dimension == dimension) {
                return Err(QuestionnaireError::NoItems(dimension));
            }
        }
        Ok(Self { items })
    }

    pub fn load(path: &Path) -> Result<Self, QuestionnaireError> {
        let text = std::fs::read_to_string(path)?;
        Self::new(serde_json::from_str(&text)?)
    }

    pub fn items(&self) -> &[LikertItem] {
        &self.items
    }

    /// Items targeting the pole's dimension. Both poles of a dimension get the
    /// same statements.
    pub fn for_trait(&self, pole: &TraitPole) -> Vec<LikertItem> {
        self.items
            .iter()
            .filter(|i| i.dimension == pole.dimension)
            .cloned()
            .collect()
    }

    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(
            serde_json::to_vec(&self.items).expect("items serialize"),
        ))
    }
}

impl Default for Questionnaire {
    fn default() -> Self {
        let items = serde_json::from_str(include_str!("../data/questionnaire.json"))
            .expect("bundled questionnaire");
        Self::new(items).expect("bundled questionnaire is valid")
    }
}

/// Four statements for the pole's dimension from the bundled questionnaire.
pub fn default_questionnaire(pole: &TraitPole) -> Vec<LikertItem> {
    Questionnaire::default().for_trait(pole)
}

static OUT_OF_FIVE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b([1-5])\s*(?:/|out of)\s*5\b").expect("regex"));
static SCALE_MENTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b1\s*(?:to|-|–)\s*5\b").expect("regex"));
static INTEGER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(\d+)\b").expect("regex"));

/// Lenient 1..5 extraction: "n/5" or "n out of 5" first, else the first
/// integer (ignoring mentions of the 1-to-5 scale), else agreement wording.
pub fn parse_rating(text: &str) -> Option<u8> {
    if let Some(cap) = OUT_OF_FIVE.captures(text) {
        return cap[1].parse().ok();
    }
    let stripped = SCALE_MENTION.replace_all(text, " ");
    if let Some(cap) = INTEGER.captures(&stripped) {
        return cap[1].parse::<u8>().ok().filter(|n| (1..=5).contains(n));
    }
    let lower = text.to_lowercase();
    [
        ("strongly disagree", 1),
        ("strongly agree", 5),
        ("disagree", 2),
        ("neutral", 3),
        ("neither", 3),
        ("agree", 4),
    ]
    .iter()
    .find(|(phrase, _)| lower.contains(phrase))
    .map(|(_, score)| *score)
}

/// One item's exchange during administration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemAnswer {
    pub item_id: String,
    /// Reply text; the re-ask reply when the first could not be parsed.
    pub raw_text: String,
    pub raw_score: Option<u8>,
    /// Keyed score, `None` when both attempts were unparseable.
    pub score: Option<u8>,
    pub attempts: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreSheet {
    pub agent_id: AgentId,
    pub trait_label: String,
    pub phase: Phase,
    pub trial_id: u32,
    /// item_id to keyed score in 1..5.
    pub scores: BTreeMap<String, u8>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing: Vec<String>,
}

impl ScoreSheet {
    pub fn is_flagged(&self) -> bool {
        !self.missing.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Administration {
    pub sheet: ScoreSheet,
    pub answers: Vec<ItemAnswer>,
}

pub struct AdministerContext<'a> {
    pub templates: &'a TemplateSet,
    pub params: &'a SamplingParams,
    pub trial_id: u32,
    pub trial_seed: u64,
}

/// Asks `agent` every item, one request each. An unparseable reply is
/// re-asked once; a second failure records the item as missing.
pub fn administer(
    agent: &AgentProfile,
    items: &[LikertItem],
    backend: &dyn ChatBackend,
    phase: Phase,
    ctx: &AdministerContext<'_>,
) -> Result<Administration, BackendError> {
    let mut sheet = ScoreSheet {
        agent_id: agent.agent_id,
        trait_label: agent.label().to_string(),
        phase,
        trial_id: ctx.trial_id,
        scores: BTreeMap::new(),
        missing: Vec::new(),
    };
    let mut answers = Vec::with_capacity(items.len());
    for item in items {
        let tag = RequestTag {
            trial_seed: ctx.trial_seed,
            agent_label: agent.label().to_string(),
            purpose: Purpose::Questionnaire {
                item_id: item.item_id.clone(),
                phase,
                keying: item.keying,
                dimension: item.dimension,
                polarity: agent.trait_pole.polarity,
            },
        };
        let mut messages = vec![
            ChatMessage::system(agent.persona_prompt.clone()),
            ChatMessage::user(ctx.templates.render(
                TemplateKind::Questionnaire,
                &[("statement", &item.statement)],
            )),
        ];
        let mut reply = backend
            .complete(&ChatRequest::new(messages.clone(), ctx.params).tagged(tag.clone()))?;
        let mut raw_score = parse_rating(&reply);
        let mut attempts = 1;
        if raw_score.is_none() {
            messages.push(ChatMessage::assistant(reply.clone()));
            messages.push(ChatMessage::user(
                ctx.templates.render(TemplateKind::Reask, &[]),
            ));
            reply = backend.complete(&ChatRequest::new(messages, ctx.params).tagged(tag))?;
            raw_score = parse_rating(&reply);
            attempts = 2;
        }
        let score = raw_score.map(|raw| item.keying.apply(raw));
        match score {
            Some(s) => {
                sheet.scores.insert(item.item_id.clone(), s);
            }
            None => sheet.missing.push(item.item_id.clone()),
        }
        answers.push(ItemAnswer {
            item_id: item.item_id.clone(),
            raw_text: reply,
            raw_score,
            score,
            attempts,
        });
    }
    Ok(Administration { sheet, answers })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyResult {
    pub trait_label: String,
    pub mean_pre: f64,
    pub mean_post: f64,
    /// Mean over trials of the per-trial mean |pre - post| across items.
    pub mean_abs_diff: f64,
    pub sub_threshold_count: usize,
    pub trial_count: usize,
    pub threshold: f64,
}

impl ConsistencyResult {
    pub fn sub_threshold_proportion(&self) -> f64 {
        self.sub_threshold_count as f64 / self.trial_count as f64
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConsistencyError {
    #[error("no score sheets supplied")]
    Empty,
    #[error("trial {trial_id} has a {phase:?} sheet but no matching {other:?} sheet")]
    Unpaired {
        trial_id: u32,
        phase: Phase,
        other: Phase,
    },
    #[error("trial {trial_id} has more than one {phase:?} sheet")]
    DuplicateTrial { trial_id: u32, phase: Phase },
    #[error("trial {trial_id}: pre and post sheets cover different items")]
    ItemMismatch { trial_id: u32 },
    #[error("trial {trial_id}: sheets cover no items")]
    NoItems { trial_id: u32 },
    #[error("trial {trial_id}: score {score} outside 1..5")]
    OutOfRange { trial_id: u32, score: u8 },
}

fn by_trial(
    sheets: &[ScoreSheet],
    phase: Phase,
) -> Result<BTreeMap<u32, &ScoreSheet>, ConsistencyError> {
    let mut map = BTreeMap::new();
    for sheet in sheets {
        if map.insert(sheet.trial_id, sheet).is_some() {
            return Err(ConsistencyError::DuplicateTrial {
                trial_id: sheet.trial_id,
                phase,
            });
        }
        if let Some(&score) = sheet.scores.values().find(|s| !(1..=5).contains(*s)) {
            return Err(ConsistencyError::OutOfRange {
                trial_id: sheet.trial_id,
                score,
            });
        }
    }
    Ok(map)
}

/// Grand pre/post means, mean per-trial absolute difference and the number
/// of trials whose difference is strictly below `threshold`.
pub fn stability_metrics(
    trait_label: &str,
    pre: &[ScoreSheet],
    post: &[ScoreSheet],
    threshold: f64,
) -> Result<ConsistencyResult, ConsistencyError> {
    if pre.is_empty() && post.is_empty() {
        return Err(ConsistencyError::Empty);
    }
    let pre = by_trial(pre, Phase::Pre)?;
    let post = by_trial(post, Phase::Post)?;
    if let Some(t) = pre.keys().find(|t| !post.contains_key(t)) {
        return Err(ConsistencyError::Unpaired {
            trial_id: *t,
            phase: Phase::Pre,
            other: Phase::Post,
        });
    }
    if let Some(t) = post.keys().find(|t| !pre.contains_key(t)) {
        return Err(ConsistencyError::Unpaired {
            trial_id: *t,
            phase: Phase::Post,
            other: Phase::Pre,
        });
    }

    let (mut pre_sum, mut post_sum, mut n_items) = (0u64, 0u64, 0u64);
    let mut diff_sum = 0.0;
    let mut below = 0;
    for (trial_id, pre_sheet) in &pre {
        let post_sheet = post[trial_id];
        if !pre_sheet.scores.keys().eq(post_sheet.scores.keys()) {
            return Err(ConsistencyError::ItemMismatch {
                trial_id: *trial_id,
            });
        }
        if pre_sheet.scores.is_empty() {
            return Err(ConsistencyError::NoItems {
                trial_id: *trial_id,
            });
        }
        let mut abs = 0u64;
        for (item, &a) in &pre_sheet.scores {
            let b = post_sheet.scores[item];
            pre_sum += u64::from(a);
            post_sum += u64::from(b);
            abs += u64::from(a.abs_diff(b));
        }
        n_items += pre_sheet.scores.len() as u64;
        let diff = abs as f64 / pre_sheet.scores.len() as f64;
        diff_sum += diff;
        if diff < threshold {
            below += 1;
        }
    }
    let trials = pre.len();
    Ok(ConsistencyResult {
        trait_label: trait_label.to_string(),
        mean_pre: pre_sum as f64 / n_items as f64,
        mean_post: post_sum as f64 / n_items as f64,
        mean_abs_diff: diff_sum / trials as f64,
        sub_threshold_count: below,
        trial_count: trials,
        threshold,
    })
}

/// Tab-separated rows in the column order
/// trait, pre mean, post mean, mean difference, below-threshold count(%).
pub fn table3_tsv(results: &[ConsistencyResult]) -> String {
    let mut out = String::from("Personality\tPre-test\tPost-test\tDifference\tBelow threshold\n");
    for r in results {
        let _ = writeln!(
            out,
            "{}\t{:.4}\t{:.4}\t{:.4}\t{}({:.0}%)",
            r.trait_label,
            r.mean_pre,
            r.mean_post,
            r.mean_abs_diff,
            r.sub_threshold_count,
            100.0 * r.sub_threshold_proportion()
        );
    }
    out
}

#[derive(Debug, Error)]
pub enum ScoreFileError {
    #[error("failed to read score file: {0}")]
    Io(#[from] std::io::Error),
    #[error("score file line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// One JSON [`ScoreSheet`] per line.
pub fn parse_score_sheets(text: &str) -> Result<Vec<ScoreSheet>, ScoreFileError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|source| ScoreFileError::Parse {
                line: i + 1,
                source,
            })
        })
        .collect()
}

pub fn read_score_sheets(path: &Path) -> Result<Vec<ScoreSheet>, ScoreFileError> {
    parse_score_sheets(&std::fs::read_to_string(path)?)
}

pub fn write_score_sheets(sheets: &[ScoreSheet]) -> String {
    sheets
        .iter()
        .map(|s| serde_json::to_string(s).expect("sheet serializes") + "\n")
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::default_roster;
    use proptest::prelude::*;

    fn sheet(trial_id: u32, phase: Phase, scores: &[u8]) -> ScoreSheet {
        ScoreSheet {
            agent_id: 1,
            trait_label: "curious".into(),
            phase,
            trial_id,
            scores: scores
                .iter()
                .enumerate()
                .map(|(i, s)| (format!("O{}", i + 1), *s))
                .collect(),
            missing: vec![],
        }
    }

    struct Fixed(&'static [&'static str], std::sync::atomic::AtomicUsize);

    impl ChatBackend for Fixed {
        fn complete(&self, _: &ChatRequest) -> Result<String, BackendError> {
            let i = self.1.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            Ok(self.0[i % self.0.len()].to_string())
        }
        fn name(&self) -> &str {
            "fixed"
        }
    }

    fn ctx<'a>(templates: &'a TemplateSet, params: &'a SamplingParams) -> AdministerContext<'a> {
        AdministerContext {
            templates,
            params,
            trial_id: 0,
            trial_seed: 0,
        }
    }

    #[test]
    fn reverse_keying_arithmetic() {
        assert_eq!(Keying::Reverse.apply(4), 2);
        assert_eq!(Keying::Positive.apply(4), 4);
    }

    #[test]
    fn lenient_rating_extraction() {
        assert_eq!(parse_rating("strongly agree (5/5)"), Some(5));
        assert_eq!(parse_rating("4"), Some(4));
        assert_eq!(parse_rating("On a scale of 1 to 5, I'd say 2."), Some(2));
        assert_eq!(parse_rating("I'd say 3 out of 5."), Some(3));
        assert_eq!(parse_rating("Strongly disagree."), Some(1));
        assert_eq!(parse_rating("I agree."), Some(4));
        assert_eq!(parse_rating("7"), None);
        assert_eq!(parse_rating("hmm"), None);
    }

    #[test]
    fn always_five_positive_items() {
        let templates = TemplateSet::default();
        let params = SamplingParams::default();
        let agent = &default_roster()[0];
        let items: Vec<_> = default_questionnaire(&agent.trait_pole)
            .into_iter()
            .map(|i| LikertItem {
                keying: Keying::Positive,
                ..i
            })
            .collect();
        let backend = Fixed(&["5"], Default::default());
        let adm = administer(
            agent,
            &items,
            &backend,
            Phase::Pre,
            &ctx(&templates, &params),
        )
        .unwrap();
        assert!(adm.sheet.scores.values().all(|s| *s == 5));
        assert_eq!(adm.sheet.scores.len(), 4);
    }

    #[test]
    fn reverse_item_stores_complement() {
        let templates = TemplateSet::default();
        let params = SamplingParams::default();
        let agent = &default_roster()[0];
        let item = LikertItem {
            item_id: "R".into(),
            statement: "s".into(),
            dimension: Dimension::Openness,
            keying: Keying::Reverse,
        };
        let backend = Fixed(&["4"], Default::default());
        let adm = administer(
            agent,
            &[item],
            &backend,
            Phase::Post,
            &ctx(&templates, &params),
        )
        .unwrap();
        assert_eq!(adm.sheet.scores["R"], 2);
        assert_eq!(adm.answers[0].raw_score, Some(4));
    }

    #[test]
    fn reask_then_missing() {
        let templates = TemplateSet::default();
        let params = SamplingParams::default();
        let agent = &default_roster()[0];
        let items = default_questionnaire(&agent.trait_pole);
        let backend = Fixed(&["no idea", "still no idea"], Default::default());
        let adm = administer(
            agent,
            &items[..1],
            &backend,
            Phase::Pre,
            &ctx(&templates, &params),
        )
        .unwrap();
        assert!(adm.sheet.is_flagged());
        assert_eq!(adm.answers[0].attempts, 2);
        assert_eq!(adm.sheet.missing, vec![items[0].item_id.clone()]);

        let backend = Fixed(&["no idea", "3"], Default::default());
        let adm = administer(
            agent,
            &items[..1],
            &backend,
            Phase::Pre,
            &ctx(&templates, &params),
        )
        .unwrap();
        assert!(!adm.sheet.is_flagged());
        assert_eq!(adm.answers[0].attempts, 2);
    }

    #[test]
    fn opposing_poles_share_statements() {
        let roster = default_roster();
        for pair in roster.chunks(2) {
            let a = default_questionnaire(&pair[0].trait_pole);
            let b = default_questionnaire(&pair[1].trait_pole);
            assert_eq!(a.len(), 4);
            assert_eq!(a, b);
            assert!(a
                .iter()
                .all(|i| i.dimension == pair[0].trait_pole.dimension));
            assert!(a.iter().all(|i| !i.statement.is_empty()));
            let ids: BTreeSet<_> = a.iter().map(|i| &i.item_id).collect();
            assert_eq!(ids.len(), 4);
        }
    }

    #[test]
    fn identity_fifty_trials() {
        let pre: Vec<_> = (0..50)
            .map(|t| sheet(t, Phase::Pre, &[5, 5, 5, 5]))
            .collect();
        let post: Vec<_> = (0..50)
            .map(|t| sheet(t, Phase::Post, &[5, 5, 5, 5]))
            .collect();
        let r = stability_metrics("curious", &pre, &post, DEFAULT_THRESHOLD).unwrap();
        assert_eq!((r.mean_pre, r.mean_post, r.mean_abs_diff), (5.0, 5.0, 0.0));
        assert_eq!((r.sub_threshold_count, r.trial_count), (50, 50));
    }

    #[test]
    fn single_trial_full_swing() {
        let pre = [sheet(0, Phase::Pre, &[5, 1])];
        let post = [sheet(0, Phase::Post, &[1, 5])];
        let r = stability_metrics("x", &pre, &post, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(r.mean_abs_diff, 4.0);
        assert_eq!(r.sub_threshold_count, 0);
        assert_eq!((r.mean_pre, r.mean_post), (3.0, 3.0));
    }

    #[test]
    fn pairing_errors() {
        let pre = [sheet(0, Phase::Pre, &[5]), sheet(1, Phase::Pre, &[5])];
        let post = [sheet(0, Phase::Post, &[5])];
        assert_eq!(
            stability_metrics("x", &pre, &post, 0.5).unwrap_err(),
            ConsistencyError::Unpaired {
                trial_id: 1,
                phase: Phase::Pre,
                other: Phase::Post
            }
        );
        let post = [sheet(0, Phase::Post, &[5, 5]), sheet(1, Phase::Post, &[5])];
        assert_eq!(
            stability_metrics("x", &pre, &post, 0.5).unwrap_err(),
            ConsistencyError::ItemMismatch { trial_id: 0 }
        );
        assert_eq!(
            stability_metrics("x", &[], &[], 0.5).unwrap_err(),
            ConsistencyError::Empty
        );
    }

    #[test]
    fn table_formatting() {
        let r = ConsistencyResult {
            trait_label: "curious".into(),
            mean_pre: 4.905,
            mean_post: 4.88,
            mean_abs_diff: 0.145,
            sub_threshold_count: 44,
            trial_count: 50,
            threshold: 0.5,
        };
        assert!(table3_tsv(&[r]).ends_with("curious\t4.9050\t4.8800\t0.1450\t44(88%)\n"));
    }

    fn sheets() -> impl Strategy<Value = Vec<(Vec<u8>, Vec<u8>)>> {
        proptest::collection::vec(
            (
                proptest::collection::vec(1u8..=5, 4),
                proptest::collection::vec(1u8..=5, 4),
            ),
            1..30,
        )
    }

    proptest! {
        #[test]
        fn permutation_invariant_and_monotone(data in sheets(), shift in 0usize..30, t1 in 0.0f64..5.0, dt in 0.0f64..2.0) {
            let pre: Vec<_> = data.iter().enumerate().map(|(i, (a, _))| sheet(i as u32, Phase::Pre, a)).collect();
            let post: Vec<_> = data.iter().enumerate().map(|(i, (_, b))| sheet(i as u32, Phase::Post, b)).collect();
            let base = stability_metrics("x", &pre, &post, t1).unwrap();
            let mut rotated = pre.clone();
            let k = shift % rotated.len();
            rotated.rotate_left(k);
            let rot = stability_metrics("x", &rotated, &post, t1).unwrap();
            prop_assert_eq!(&base, &rot);
            let higher = stability_metrics("x", &pre, &post, t1 + dt).unwrap();
            prop_assert!(higher.sub_threshold_count >= base.sub_threshold_count);
            prop_assert!((1.0..=5.0).contains(&base.mean_pre) && (1.0..=5.0).contains(&base.mean_post));
            prop_assert!(base.sub_threshold_count <= base.trial_count);
        }
    }
}
