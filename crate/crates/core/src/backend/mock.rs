//! Seeded stand-in for the persona LLM.
//!
//! Each evaluation draws three uniforms (respond, private acceptance, public
//! flip) from a keyed additive-recurrence generator: the key
//! `(trait, claim, round)` fixes a per-stream offset and the trial seed is the
//! counter, `u_j = frac(offset_j + seed * alpha_j)`. The three `alpha_j` are
//! the components of the R3 low-discrepancy sequence, so consecutive trial
//! seeds fill the unit cube evenly and empirical rates converge much faster
//! than with independent draws. Draws for one agent never depend on what any
//! other agent did or on evaluation order.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{unit_interval, BackendError, ChatBackend, ChatRequest, Purpose};
use crate::analytics::{validate_table, ResponseTable};
use crate::consistency::{Keying, Phase};
use crate::domain::{ClaimId, Dimension, Polarity};
use crate::stance::{classify_rule_based, ChannelTexts, Stance, StanceLexicon};

/// Fixed-point R3 increments: (1/g)^k mod 1 for g the unique positive root of
/// x^4 = x + 1, scaled by 2^64.
const R3_STEPS: [u64; 3] = [
    (0.819_172_513_396_164_5 * 18_446_744_073_709_551_616.0) as u64,
    (0.671_043_606_703_789_3 * 18_446_744_073_709_551_616.0) as u64,
    (0.549_700_477_901_970_3 * 18_446_744_073_709_551_616.0) as u64,
];

const DEFAULT_LIKERT_DRIFT: f64 = 0.1;

fn default_likert_drift() -> f64 {
    DEFAULT_LIKERT_DRIFT
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraitParams {
    /// Probability the evaluation yields a classified stance pair.
    pub p_respond: f64,
    /// Probability the private stance is acceptance.
    pub p_think_yes: f64,
    /// Probability the public stance negates the private one.
    pub p_flip: f64,
    /// Probability a questionnaire answer moves one step toward the midpoint.
    #[serde(default = "default_likert_drift")]
    pub p_likert_drift: f64,
}

impl TraitParams {
    pub fn new(p_respond: f64, p_think_yes: f64, p_flip: f64) -> Self {
        Self {
            p_respond,
            p_think_yes,
            p_flip,
            p_likert_drift: DEFAULT_LIKERT_DRIFT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MockPersonaParams {
    pub traits: BTreeMap<String, TraitParams>,
}

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("trait `{label}`: {field} = {value} is outside [0, 1]")]
    OutOfRange {
        label: String,
        field: &'static str,
        value: f64,
    },
    #[error("trait `{0}` has zero counted responses; ratios are undefined")]
    ZeroTotal(String),
    #[error("trait `{label}` has total {total} above {opportunities} opportunities")]
    TooManyResponses {
        label: String,
        total: u64,
        opportunities: u64,
    },
    #[error("trait `{label}` table is infeasible: {report}")]
    InvalidTable { label: String, report: String },
    #[error("opportunities must be positive")]
    NoOpportunities,
}

impl MockPersonaParams {
    pub fn get(&self, label: &str) -> Result<&TraitParams, BackendError> {
        self.traits
            .get(label)
            .ok_or_else(|| BackendError::UnknownTrait(label.to_string()))
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        for (label, p) in &self.traits {
            for (field, value) in [
                ("p_respond", p.p_respond),
                ("p_think_yes", p.p_think_yes),
                ("p_flip", p.p_flip),
                ("p_likert_drift", p.p_likert_drift),
            ] {
                if !(0.0..=1.0).contains(&value) {
                    return Err(CalibrationError::OutOfRange {
                        label: label.clone(),
                        field,
                        value,
                    });
                }
            }
        }
        Ok(())
    }

    /// Parameters calibrated from the published response table with
    /// 50 trials x 9 evaluations per trait.
    pub fn calibrated_default() -> Self {
        calibrate_from_table(&crate::reference::table4(), crate::reference::OPPORTUNITIES)
            .expect("published table calibrates")
    }
}

/// `p_respond = Total/opportunities`, `p_think_yes = ThinkYes/Total`,
/// `p_flip = Diff/Total` per trait.
pub fn calibrate_from_table(
    tables: &[ResponseTable],
    opportunities: u64,
) -> Result<MockPersonaParams, CalibrationError> {
    if opportunities == 0 {
        return Err(CalibrationError::NoOpportunities);
    }
    let mut traits = BTreeMap::new();
    for table in tables {
        let label = table.trait_label.clone();
        if table.total == 0 {
            return Err(CalibrationError::ZeroTotal(label));
        }
        let report = validate_table(table);
        if !report.is_valid() {
            return Err(CalibrationError::InvalidTable {
                label,
                report: report.to_string(),
            });
        }
        if table.total > opportunities {
            return Err(CalibrationError::TooManyResponses {
                label,
                total: table.total,
                opportunities,
            });
        }
        let total = table.total as f64;
        traits.insert(
            label,
            TraitParams::new(
                total / opportunities as f64,
                table.think_yes as f64 / total,
                table.diff as f64 / total,
            ),
        );
    }
    Ok(MockPersonaParams { traits })
}

fn key_hash(parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"traitsim/mock");
    for part in parts {
        hasher.update([0x1f]);
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn weyl(offset: u64, step: u64, seed: u64) -> f64 {
    unit_interval(offset.wrapping_add(seed.wrapping_mul(step)))
}

/// The three stochastic choices behind one mock evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MockDraw {
    pub speak: Stance,
    pub think: Stance,
}

impl MockDraw {
    pub fn responded(&self) -> bool {
        self.speak != Stance::Silent
    }
}

/// Position of one evaluation in a trait's draw sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DrawSlot {
    pub trial_seed: u64,
    pub evaluation_no: u32,
    pub evaluations_per_trial: u32,
}

impl DrawSlot {
    fn index(self) -> u64 {
        self.trial_seed
            .wrapping_mul(u64::from(self.evaluations_per_trial.max(1)))
            .wrapping_add(u64::from(self.evaluation_no))
    }
}

pub fn mock_draw(
    params: &MockPersonaParams,
    trait_label: &str,
    slot: DrawSlot,
) -> Result<MockDraw, BackendError> {
    let p = params.get(trait_label)?;
    // One sequence per trait: consecutive seeds walk one contiguous stretch
    // of it, so a trait's rates track its parameters closely over a run.
    let index = slot.index();
    let u: Vec<f64> = (0..3)
        .map(|j| {
            let stream = j.to_string();
            let offset = key_hash(&["eval", &stream, trait_label]);
            weyl(offset, R3_STEPS[j], index)
        })
        .collect();
    if u[0] >= p.p_respond {
        return Ok(MockDraw {
            speak: Stance::Silent,
            think: Stance::Silent,
        });
    }
    let think = if u[1] < p.p_think_yes {
        Stance::Accept
    } else {
        Stance::Reject
    };
    let speak = if u[2] < p.p_flip {
        think.negated()
    } else {
        think
    };
    Ok(MockDraw { speak, think })
}

const SPEAK_ACCEPT: &[&str] = &[
    "Yes, I believe this is true.",
    "I agree, that sounds plausible to me.",
    "That makes sense to me, I'm convinced.",
    "Interesting, I think it could well be correct.",
];
const SPEAK_REJECT: &[&str] = &[
    "No, I don't think that's credible.",
    "I disagree, this claim is false.",
    "I'm skeptical, there is no evidence for this.",
    "Honestly, that sounds like a myth to me.",
];
const SPEAK_SILENT: &[&str] = &[
    "I would like to hear more before I say anything.",
    "Let me listen to the others first.",
];
const THINK_ACCEPT: &[&str] = &[
    "This actually seems true to me.",
    "I'm inclined to believe it.",
    "Deep down I find it convincing.",
];
const THINK_REJECT: &[&str] = &[
    "I doubt this very much.",
    "Privately, I think this is nonsense.",
    "This is almost certainly false.",
];
const THINK_SILENT: &[&str] = &[
    "I am still turning this over.",
    "Hard to say what to make of it.",
];

fn phrases(stance: Stance, speak: bool) -> &'static [&'static str] {
    match (stance, speak) {
        (Stance::Accept, true) => SPEAK_ACCEPT,
        (Stance::Reject, true) => SPEAK_REJECT,
        (Stance::Silent, true) => SPEAK_SILENT,
        (Stance::Accept, false) => THINK_ACCEPT,
        (Stance::Reject, false) => THINK_REJECT,
        (Stance::Silent, false) => THINK_SILENT,
    }
}

fn phrase_rng(parts: &[&str], trial_seed: u64) -> ChaCha8Rng {
    let seed = trial_seed.to_string();
    let mut all: Vec<&str> = parts.to_vec();
    all.push(&seed);
    ChaCha8Rng::seed_from_u64(key_hash(&all))
}

fn render_draw(draw: MockDraw, rng: &mut ChaCha8Rng, memo: Option<&str>) -> String {
    let speak = phrases(draw.speak, true);
    let think = phrases(draw.think, false);
    let speak = speak[rng.random_range(0..speak.len())];
    let think = think[rng.random_range(0..think.len())];
    let mut texts = ChannelTexts::new(Some(speak.to_string()), Some(think.to_string()));
    if let (Some(memo), Some(t)) = (memo, texts.think_text.as_mut()) {
        t.push_str(&format!(" (memo {memo})"));
    }
    texts.render()
}

/// Tagged `[Speak]`/`[Think]` text whose channels classify, under the
/// default lexicon, to the stances drawn by [`mock_draw`].
pub fn mock_evaluate(
    params: &MockPersonaParams,
    trait_label: &str,
    claim_id: ClaimId,
    slot: DrawSlot,
) -> Result<String, BackendError> {
    evaluate_with_memo(params, trait_label, claim_id, slot, None)
}

fn evaluate_with_memo(
    params: &MockPersonaParams,
    trait_label: &str,
    claim_id: ClaimId,
    slot: DrawSlot,
    memo: Option<&str>,
) -> Result<String, BackendError> {
    let draw = mock_draw(params, trait_label, slot)?;
    let claim = claim_id.to_string();
    let mut rng = phrase_rng(&["text", trait_label, &claim], slot.trial_seed);
    Ok(render_draw(draw, &mut rng, memo))
}

pub fn mock_presentation(claim_text: &str) -> String {
    format!("[Speak]: I want to share something I read recently. {claim_text} I am quite sure about it.")
}

/// Raw 1..5 answer of a mock persona to one questionnaire item, with its
/// reply text. Persona-congruent agreement is 5, opposite is 1; a drift draw
/// moves one step toward 3.
#[allow(clippy::too_many_arguments)]
pub fn mock_rating(
    params: &MockPersonaParams,
    trait_label: &str,
    item_id: &str,
    phase: Phase,
    keying: Keying,
    dimension: Dimension,
    polarity: Polarity,
    trial_seed: u64,
) -> Result<(u8, String), BackendError> {
    let p = params.get(trait_label)?;
    let congruent = (polarity == dimension.scored_pole()) == (keying == Keying::Positive);
    let phase_key = phase.as_str();
    let offset = key_hash(&["likert", trait_label, item_id, phase_key]);
    let drift = weyl(offset, R3_STEPS[0], trial_seed) < p.p_likert_drift;
    let raw = match (congruent, drift) {
        (true, false) => 5,
        (true, true) => 4,
        (false, false) => 1,
        (false, true) => 2,
    };
    let mut rng = phrase_rng(
        &["likert-text", trait_label, item_id, phase_key],
        trial_seed,
    );
    let text = match rng.random_range(0..3) {
        0 => raw.to_string(),
        1 => format!("I'd say {raw} out of 5."),
        _ => format!("{raw} - that is how I see myself."),
    };
    Ok((raw, text))
}

/// Stateless mock backend driven by request tags.
#[derive(Debug, Clone)]
pub struct MockBackend {
    params: MockPersonaParams,
    think_memos: bool,
    lexicon: StanceLexicon,
}

impl MockBackend {
    pub fn new(params: MockPersonaParams) -> Self {
        Self {
            params,
            think_memos: false,
            lexicon: StanceLexicon::default(),
        }
    }

    /// Parameters fitted to the published per-trait tables.
    pub fn calibrated() -> Self {
        Self::new(MockPersonaParams::calibrated_default())
    }

    /// Appends a unique memo to every private channel so leaks of private
    /// text into later contexts can be detected by substring search.
    pub fn with_think_memos(mut self, enabled: bool) -> Self {
        self.think_memos = enabled;
        self
    }

    pub fn params(&self) -> &MockPersonaParams {
        &self.params
    }
}

impl ChatBackend for MockBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        request.validate()?;
        let tag = request.tag.as_ref().ok_or(BackendError::MissingTag)?;
        let label = tag.agent_label.as_str();
        match &tag.purpose {
            Purpose::Presentation { claim_text, .. } => {
                self.params.get(label)?;
                Ok(mock_presentation(claim_text))
            }
            Purpose::Evaluation {
                claim_id,
                round_no,
                evaluation_no,
                evaluations_per_trial,
                ..
            } => {
                let memo = self
                    .think_memos
                    .then(|| format!("s{}-{}-c{}-r{}", tag.trial_seed, label, claim_id, round_no));
                let slot = DrawSlot {
                    trial_seed: tag.trial_seed,
                    evaluation_no: *evaluation_no,
                    evaluations_per_trial: *evaluations_per_trial,
                };
                evaluate_with_memo(&self.params, label, *claim_id, slot, memo.as_deref())
            }
            Purpose::Questionnaire {
                item_id,
                phase,
                keying,
                dimension,
                polarity,
            } => mock_rating(
                &self.params,
                label,
                item_id,
                *phase,
                *keying,
                *dimension,
                *polarity,
                tag.trial_seed,
            )
            .map(|(_, text)| text),
            Purpose::Judge { response_text } => {
                let verdict = match classify_rule_based(Some(response_text), None, &self.lexicon) {
                    Stance::Accept => "ACCEPT",
                    Stance::Reject => "REJECT",
                    Stance::Silent => "UNCLEAR",
                };
                Ok(verdict.to_string())
            }
        }
    }

    fn name(&self) -> &str {
        "mock"
    }
}
