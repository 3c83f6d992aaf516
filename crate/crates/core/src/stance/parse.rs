use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

static TAG_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\[\s*(speak|think)\s*\]").expect("tag regex"));

/// Public and private channel text of one response. A channel whose tag is
/// absent is `None`; a present tag with nothing after it is `Some("")`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChannelTexts {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speak_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub think_text: Option<String>,
}

impl ChannelTexts {
    pub fn new(speak_text: Option<String>, think_text: Option<String>) -> Self {
        Self {
            speak_text,
            think_text,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.speak_text.is_none() && self.think_text.is_none()
    }

    /// Canonical tagged form: `[Speak]: ...` then `[Think]: ...`, one per line.
    pub fn render(&self) -> String {
        let mut lines = Vec::with_capacity(2);
        if let Some(s) = &self.speak_text {
            lines.push(format!("[Speak]: {s}"));
        }
        if let Some(t) = &self.think_text {
            lines.push(format!("[Think]: {t}"));
        }
        lines.join("\n")
    }
}

fn clean_block(block: &str) -> String {
    let block = block.trim_start();
    let block = block
        .strip_prefix(':')
        .or_else(|| block.strip_prefix('：'))
        .or_else(|| block.strip_prefix('-'))
        .unwrap_or(block);
    block.trim().to_string()
}

/// Extracts the text following each `[Speak]` / `[Think]` tag up to the next
/// tag or the end of input. Tags are case-insensitive and may be followed by a
/// colon; when a tag repeats, the first block wins.
pub fn parse_channels(raw_text: &str) -> ChannelTexts {
    let tags: Vec<_> = TAG_RE.captures_iter(raw_text).collect();
    let mut out = ChannelTexts::default();
    for (i, cap) in tags.iter().enumerate() {
        let whole = cap.get(0).expect("match");
        let end = tags
            .get(i + 1)
            .map(|next| next.get(0).expect("match").start())
            .unwrap_or(raw_text.len());
        let body = clean_block(&raw_text[whole.end()..end]);
        let slot = if cap[1].eq_ignore_ascii_case("speak") {
            &mut out.speak_text
        } else {
            &mut out.think_text
        };
        if slot.is_none() {
            *slot = Some(body);
        }
    }
    out
}
