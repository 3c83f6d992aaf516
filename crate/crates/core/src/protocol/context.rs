use super::{ProtocolError, PublicUtterance};
use crate::backend::ChatMessage;
use crate::domain::{AgentId, AgentProfile, MisinformationItem};
use crate::templates::{TemplateKind, TemplateSet};

#[derive(Debug, Clone, Copy)]
pub struct ContextOptions<'a> {
    pub templates: &'a TemplateSet,
    pub context_sharing: bool,
    pub moderator_name: &'a str,
}

fn speaker(id: Option<AgentId>, roster: &[AgentProfile], moderator: &str) -> String {
    match id {
        None => moderator.to_string(),
        Some(id) => roster
            .iter()
            .find(|a| a.agent_id == id)
            .map(AgentProfile::display_name)
            .unwrap_or_else(|| format!("Student {id}")),
    }
}

fn history_block(
    history: &[PublicUtterance],
    roster: &[AgentProfile],
    opts: &ContextOptions<'_>,
) -> String {
    if !opts.context_sharing || history.is_empty() {
        return String::new();
    }
    let lines: Vec<String> = history
        .iter()
        .map(|u| {
            format!(
                "{}: {}",
                speaker(u.agent_id, roster, opts.moderator_name),
                u.text
            )
        })
        .collect();
    opts.templates
        .render(TemplateKind::History, &[("history", &lines.join("\n"))])
}

/// Messages for `evaluator` judging `presenter`'s claim. Only public text is
/// ever passed in, so private reasoning cannot leak through here.
pub fn build_evaluator_context(
    evaluator: &AgentProfile,
    presenter: &AgentProfile,
    claim: &MisinformationItem,
    history: &[PublicUtterance],
    roster: &[AgentProfile],
    opts: &ContextOptions<'_>,
) -> Result<Vec<ChatMessage>, ProtocolError> {
    if evaluator.agent_id == presenter.agent_id {
        return Err(ProtocolError::SelfEvaluation(evaluator.agent_id));
    }
    let block = history_block(history, roster, opts);
    let presenter_name = presenter.display_name();
    let user = opts.templates.render(
        TemplateKind::Evaluate,
        &[
            ("presenter", &presenter_name),
            ("claim", &claim.text),
            ("history", &block),
        ],
    );
    Ok(vec![
        ChatMessage::system(evaluator.persona_prompt.clone()),
        ChatMessage::user(user),
    ])
}

pub fn build_presenter_context(
    presenter: &AgentProfile,
    history: &[PublicUtterance],
    roster: &[AgentProfile],
    opts: &ContextOptions<'_>,
) -> Vec<ChatMessage> {
    let block = history_block(history, roster, opts);
    let user = opts.templates.render(
        TemplateKind::Present,
        &[("claim", &presenter.claim.text), ("history", &block)],
    );
    vec![
        ChatMessage::system(presenter.persona_prompt.clone()),
        ChatMessage::user(user),
    ]
}
