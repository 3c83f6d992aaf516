//! Cue-phrase lexicon and the rule-based channel classifier.
//!
//! Text is lower-cased and split into words and clause breaks (sentence
//! punctuation plus the lexicon's `clause_breaks` words). Cues are matched
//! longest-first. A cue is flipped when an odd number of negation markers
//! occurs within `negation_window` words before it in the same clause.
//! Neutral cues are consumed without producing a hit, so "no idea" does not
//! count as the reject cue "no".

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::Stance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorityRule {
    /// Any conflict between accept and reject hits is `Silent`.
    Exclusive,
    /// More hits wins; ties are `Silent`.
    Majority,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StanceLexicon {
    pub version: String,
    pub priority_rule: PriorityRule,
    pub negation_window: usize,
    pub accept_cues: Vec<String>,
    pub reject_cues: Vec<String>,
    #[serde(default)]
    pub neutral_cues: Vec<String>,
    /// Whole words, or `*suffix` to match any word ending in `suffix`.
    pub negation_markers: Vec<String>,
    #[serde(default)]
    pub clause_breaks: Vec<String>,
}

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("failed to read lexicon: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed lexicon: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("cue `{0}` appears in more than one cue list")]
    Overlap(String),
    #[error("lexicon contains an empty cue")]
    EmptyCue,
    #[error("lexicon has no accept or no reject cues")]
    NoCues,
}

const DEFAULT_LEXICON: &str = include_str!("../../data/lexicon.json");

impl Default for StanceLexicon {
    fn default() -> Self {
        let lexicon: Self = serde_json::from_str(DEFAULT_LEXICON).expect("bundled lexicon parses");
        lexicon.validate().expect("bundled lexicon is valid");
        lexicon
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Word(String),
    Break,
}

fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    let flush = |word: &mut String, tokens: &mut Vec<Token>| {
        let w = word.trim_matches('\'');
        if !w.is_empty() {
            tokens.push(Token::Word(w.to_string()));
        }
        word.clear();
    };
    for ch in text.chars().flat_map(char::to_lowercase) {
        let ch = if matches!(ch, '\u{2018}' | '\u{2019}') {
            '\''
        } else {
            ch
        };
        if ch.is_alphanumeric() || ch == '\'' {
            word.push(ch);
        } else {
            flush(&mut word, &mut tokens);
            if matches!(
                ch,
                '.' | ','
                    | ';'
                    | ':'
                    | '!'
                    | '?'
                    | '('
                    | ')'
                    | '"'
                    | '\n'
                    | '\u{201c}'
                    | '\u{201d}'
            ) {
                tokens.push(Token::Break);
            }
        }
    }
    flush(&mut word, &mut tokens);
    tokens
}

fn words(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter_map(|t| match t {
            Token::Word(w) => Some(w),
            Token::Break => None,
        })
        .collect()
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum CueKind {
    Accept,
    Reject,
    Neutral,
}

impl StanceLexicon {
    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let text = std::fs::read_to_string(path)?;
        let lexicon: Self = serde_json::from_str(&text)?;
        lexicon.validate()?;
        Ok(lexicon)
    }

    pub fn validate(&self) -> Result<(), LexiconError> {
        if self.accept_cues.is_empty() || self.reject_cues.is_empty() {
            return Err(LexiconError::NoCues);
        }
        let mut seen: Vec<(Vec<String>, usize)> = Vec::new();
        for (list_no, list) in [&self.accept_cues, &self.reject_cues, &self.neutral_cues]
            .iter()
            .enumerate()
        {
            for cue in list.iter() {
                let key = words(cue);
                if key.is_empty() {
                    return Err(LexiconError::EmptyCue);
                }
                if seen.iter().any(|(k, n)| *k == key && *n != list_no) {
                    return Err(LexiconError::Overlap(cue.clone()));
                }
                seen.push((key, list_no));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form; recorded alongside analysis output.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("lexicon serializes");
        hex::encode(Sha256::digest(bytes))
    }

    fn is_negator(&self, word: &str) -> bool {
        self.negation_markers
            .iter()
            .any(|m| match m.strip_prefix('*') {
                Some(suffix) => word.len() > suffix.len() && word.ends_with(suffix),
                None => m == word,
            })
    }

    fn compiled(&self) -> Vec<(Vec<String>, CueKind)> {
        let mut cues: Vec<(Vec<String>, CueKind)> = self
            .accept_cues
            .iter()
            .map(|c| (words(c), CueKind::Accept))
            .chain(self.reject_cues.iter().map(|c| (words(c), CueKind::Reject)))
            .chain(
                self.neutral_cues
                    .iter()
                    .map(|c| (words(c), CueKind::Neutral)),
            )
            .collect();
        cues.sort_by_key(|c| std::cmp::Reverse(c.0.len()));
        cues
    }

    /// Returns (accept hits, reject hits) after negation handling.
    fn hits(&self, text: &str, claim: Option<&str>) -> (usize, usize) {
        let mut tokens = tokenize(text);
        if let Some(claim) = claim {
            strip_sequence(&mut tokens, &words(claim));
        }
        let breaks: BTreeSet<&str> = self.clause_breaks.iter().map(String::as_str).collect();
        let cues = self.compiled();

        let (mut accept, mut reject) = (0, 0);
        let mut clause: Vec<&str> = Vec::new();
        let mut clauses: Vec<Vec<&str>> = Vec::new();
        for token in &tokens {
            match token {
                Token::Word(w) if !breaks.contains(w.as_str()) => clause.push(w),
                _ => clauses.push(std::mem::take(&mut clause)),
            }
        }
        clauses.push(clause);

        for clause in clauses {
            let mut i = 0;
            while i < clause.len() {
                let matched = cues.iter().find(|(cue, _)| {
                    clause.len() - i >= cue.len()
                        && cue.iter().zip(&clause[i..]).all(|(c, w)| c == w)
                });
                let Some((cue, kind)) = matched else {
                    i += 1;
                    continue;
                };
                let start = i.saturating_sub(self.negation_window);
                let negations = clause[start..i]
                    .iter()
                    .filter(|w| self.is_negator(w))
                    .count();
                let negated = negations % 2 == 1;
                match (kind, negated) {
                    (CueKind::Accept, false) | (CueKind::Reject, true) => accept += 1,
                    (CueKind::Reject, false) | (CueKind::Accept, true) => reject += 1,
                    (CueKind::Neutral, _) => {}
                }
                i += cue.len();
            }
        }
        (accept, reject)
    }
}

fn strip_sequence(tokens: &mut Vec<Token>, needle: &[String]) {
    if needle.is_empty() {
        return;
    }
    let mut i = 0;
    while i + needle.len() <= tokens.len() {
        let hit = needle
            .iter()
            .zip(&tokens[i..])
            .all(|(n, t)| matches!(t, Token::Word(w) if w == n));
        if hit {
            tokens.splice(i..i + needle.len(), [Token::Break]);
        }
        i += 1;
    }
}

/// Rule-based stance of one channel. `claim` is the claim under discussion;
/// verbatim quotations of it are ignored so that the claim's own wording
/// ("... is incorrect") does not read as a verdict.
pub fn classify_rule_based(
    text: Option<&str>,
    claim: Option<&str>,
    lexicon: &StanceLexicon,
) -> Stance {
    let Some(text) = text.filter(|t| !t.trim().is_empty()) else {
        return Stance::Silent;
    };
    let (accept, reject) = lexicon.hits(text, claim);
    match lexicon.priority_rule {
        PriorityRule::Exclusive => match (accept > 0, reject > 0) {
            (true, false) => Stance::Accept,
            (false, true) => Stance::Reject,
            _ => Stance::Silent,
        },
        PriorityRule::Majority => match accept.cmp(&reject) {
            std::cmp::Ordering::Greater => Stance::Accept,
            std::cmp::Ordering::Less => Stance::Reject,
            std::cmp::Ordering::Equal => Stance::Silent,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rule(text: &str) -> Stance {
        classify_rule_based(Some(text), None, &StanceLexicon::default())
    }

    #[test]
    fn direct_accept() {
        assert_eq!(rule("Yes, I believe this is true."), Stance::Accept);
    }

    #[test]
    fn negated_accept_rejects() {
        assert_eq!(rule("I don't think that's credible."), Stance::Reject);
        assert_eq!(rule("I\u{2019}m not convinced at all"), Stance::Reject);
    }

    #[test]
    fn negated_reject_accepts() {
        assert_eq!(rule("I don't doubt it for a second."), Stance::Accept);
    }

    #[test]
    fn absent_and_blank_are_silent() {
        let lexicon = StanceLexicon::default();
        assert_eq!(classify_rule_based(None, None, &lexicon), Stance::Silent);
        assert_eq!(
            classify_rule_based(Some("   "), None, &lexicon),
            Stance::Silent
        );
    }

    #[test]
    fn both_or_neither_is_silent() {
        assert_eq!(rule("Yes, but it is also false."), Stance::Silent);
        assert_eq!(rule("Interesting topic for class."), Stance::Silent);
    }

    #[test]
    fn neutral_phrase_masks_reject_cue() {
        assert_eq!(rule("I have no idea."), Stance::Silent);
    }

    #[test]
    fn negation_does_not_cross_clauses() {
        assert_eq!(
            rule("I'm not a scientist, but it sounds plausible."),
            Stance::Accept
        );
    }

    #[test]
    fn multiword_cue_wins_over_single() {
        assert_eq!(rule("There is no doubt about it."), Stance::Accept);
        assert_eq!(rule("There is no evidence."), Stance::Reject);
    }

    #[test]
    fn quoted_claim_is_ignored() {
        let lexicon = StanceLexicon::default();
        let claim = "The theory of evolution is incorrect.";
        let text = "I agree that the theory of evolution is incorrect.";
        assert_eq!(
            classify_rule_based(Some(text), Some(claim), &lexicon),
            Stance::Accept
        );
        assert_eq!(
            classify_rule_based(Some(text), None, &lexicon),
            Stance::Silent
        );
    }

    #[test]
    fn majority_rule() {
        let lexicon = StanceLexicon {
            priority_rule: PriorityRule::Majority,
            ..StanceLexicon::default()
        };
        let text = "Yes, I agree, though one detail is wrong.";
        assert_eq!(
            classify_rule_based(Some(text), None, &lexicon),
            Stance::Accept
        );
    }

    #[test]
    fn overlapping_lists_rejected() {
        let mut lexicon = StanceLexicon::default();
        lexicon.reject_cues.push("Plausible".into());
        assert!(matches!(lexicon.validate(), Err(LexiconError::Overlap(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = StanceLexicon::default();
        let mut b = a.clone();
        assert_eq!(a.content_hash(), b.content_hash());
        b.accept_cues.push("indeed".into());
        assert_ne!(a.content_hash(), b.content_hash());
    }

    #[test]
    fn tokenizer_keeps_contractions() {
        assert_eq!(
            tokenize("Don't - 'quoted'."),
            vec![
                Token::Word("don't".into()),
                Token::Word("quoted".into()),
                Token::Break
            ]
        );
    }
}
