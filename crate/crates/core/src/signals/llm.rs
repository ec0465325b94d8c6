//! LLM-backed signal extraction over a chat-completion endpoint.

use std::collections::BTreeMap;

use serde_json::{json, Value};
use thiserror::Error;

use super::{Signal, Utterance, WireSignal};
use crate::chat::{ChatClient, ChatCompletion, ChatError, ChatMessage, ChatRequest};
use crate::scenario::{PublicParty, PublicScenario};

pub const SIGNAL_PROMPT_TEMPLATE: &str = include_str!("../../assets/signal_extraction_prompt.txt");
/// Bump whenever the template asset changes; fixtures record it.
pub const SIGNAL_PROMPT_VERSION: &str = "1";
pub const SIGNAL_TOOL_NAME: &str = "record_signals";

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ExtractError {
    #[error(transparent)]
    Transport(#[from] ChatError),
    #[error("unparseable extraction response ({reason}): {raw}")]
    Unparseable { reason: String, raw: String },
    #[error("extraction returned no signals: {raw}")]
    Empty { raw: String },
}

/// Parsed extraction keyed by party id, each list in response order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Extraction {
    pub signals: BTreeMap<String, Vec<Signal>>,
    /// Response keys that matched no party in the transcript.
    pub dropped_agents: Vec<String>,
}

impl Extraction {
    pub fn total(&self) -> usize {
        self.signals.values().map(Vec::len).sum()
    }

    pub fn for_agent(&self, id: &str) -> &[Signal] {
        self.signals.get(id).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Rules paragraph substituted for `{negotiation_rule}`.
pub fn negotiation_rules(public: &PublicScenario) -> String {
    let mut out = String::new();
    let names: Vec<String> = public
        .parties
        .iter()
        .map(|p| if p.veto { format!("{} (veto)", p.name) } else { p.name.clone() })
        .collect();
    out.push_str(&format!("Parties: {}.\n", names.join(", ")));
    out.push_str("A deal selects exactly one option for every issue.\n");
    for issue in &public.issues {
        let opts: Vec<String> = issue
            .options
            .iter()
            .enumerate()
            .map(|(o, text)| format!("{}{}: {}", issue.id, o + 1, text))
            .collect();
        out.push_str(&format!("Issue {} ({}): {}\n", issue.id, issue.name, opts.join("; ")));
    }
    let vetoes: Vec<&str> = public
        .parties
        .iter()
        .filter(|p| p.veto)
        .map(|p| p.name.as_str())
        .collect();
    out.push_str(&format!(
        "A deal passes when at least {} parties accept it",
        public.min_agree
    ));
    if vetoes.is_empty() {
        out.push_str(".\n");
    } else {
        out.push_str(&format!(", including every veto party ({}).\n", vetoes.join(", ")));
    }
    out.push_str(&format!(
        "The negotiation lasts {} rounds. Each round one party proposes a deal and explains it; the final round's deal is the outcome.",
        public.rounds
    ));
    out
}

/// One line per utterance, speaker shown by display name.
pub fn render_chat_history(history: &[Utterance], roster: &[PublicParty]) -> String {
    history
        .iter()
        .map(|u| {
            let name = roster
                .iter()
                .find(|p| p.id == u.speaker)
                .map(|p| p.name.as_str())
                .unwrap_or(&u.speaker);
            format!("Round {} - {}: {}", u.round, name, u.text)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_signal_prompt(rules_text: &str, chat_history: &str) -> String {
    SIGNAL_PROMPT_TEMPLATE
        .replace("{negotiation_rule}", rules_text)
        .replace("{chat_history}", chat_history)
}

pub fn signal_tool_schema() -> Value {
    json!({
        "type": "function",
        "function": {
            "name": SIGNAL_TOOL_NAME,
            "description": "Opponent modeling signals per agent, keyed by agent name.",
            "parameters": {
                "type": "object",
                "additionalProperties": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "properties": {
                            "entity": { "type": "string", "enum": ["issue", "option"] },
                            "signal_type": { "type": "string", "enum": ["point", "comparison"] },
                            "target": { "type": "string" },
                            "stance": { "type": "string", "enum": ["prefer", "oppose"] }
                        },
                        "required": ["entity", "signal_type", "target", "stance"],
                        "additionalProperties": false
                    }
                }
            }
        }
    })
}

pub fn build_extraction_request(model: &str, rules_text: &str, history: &[Utterance], roster: &[PublicParty]) -> ChatRequest {
    let prompt = render_signal_prompt(rules_text, &render_chat_history(history, roster));
    ChatRequest {
        model: model.to_string(),
        messages: vec![ChatMessage::user(prompt)],
        temperature: 0.0,
        tools: Some(vec![signal_tool_schema()]),
        tool_choice: Some(json!({ "type": "function", "function": { "name": SIGNAL_TOOL_NAME } })),
    }
}

fn strip_fences(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let rest = rest.trim_start_matches(|c: char| c.is_ascii_alphabetic());
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

fn resolve_agent<'a>(key: &str, speakers: &[&'a PublicParty]) -> Option<&'a PublicParty> {
    let key = key.trim();
    speakers
        .iter()
        .copied()
        .find(|p| p.id == key)
        .or_else(|| speakers.iter().copied().find(|p| p.name.eq_ignore_ascii_case(key) || p.id.eq_ignore_ascii_case(key)))
}

/// Parses the function-call arguments object. Any structural or target
/// grammar error rejects the whole payload. Keys naming parties that did
/// not speak in the transcript are dropped.
pub fn parse_extraction_response(
    payload: &str,
    history: &[Utterance],
    roster: &[PublicParty],
) -> Result<Extraction, ExtractError> {
    let unparseable = |reason: String| ExtractError::Unparseable {
        reason,
        raw: payload.to_string(),
    };
    let decoded: BTreeMap<String, Vec<WireSignal>> =
        serde_json::from_str(strip_fences(payload)).map_err(|e| unparseable(e.to_string()))?;
    let speakers: Vec<&PublicParty> = roster
        .iter()
        .filter(|p| history.iter().any(|u| u.speaker == p.id))
        .collect();
    let mut out = Extraction::default();
    for (key, wires) in decoded {
        let Some(party) = resolve_agent(&key, &speakers) else {
            log::warn!("extraction named `{key}`, who is not in the transcript; dropped");
            out.dropped_agents.push(key);
            continue;
        };
        let mut parsed = Vec::with_capacity(wires.len());
        for w in &wires {
            parsed.push(Signal::from_wire(party.id.clone(), w).map_err(|e| unparseable(format!("{key}: {e}")))?);
        }
        out.signals.entry(party.id.clone()).or_default().extend(parsed);
    }
    out.signals.retain(|_, v| !v.is_empty());
    if out.total() == 0 {
        return Err(ExtractError::Empty {
            raw: payload.to_string(),
        });
    }
    Ok(out)
}

/// Arguments of the signal tool call, else the message content.
pub fn extraction_payload(completion: &ChatCompletion) -> Result<&str, ExtractError> {
    if let Some(call) = completion
        .tool_calls
        .iter()
        .find(|c| c.name == SIGNAL_TOOL_NAME)
        .or_else(|| completion.tool_calls.first())
    {
        return Ok(&call.arguments);
    }
    completion
        .content
        .as_deref()
        .filter(|c| !c.trim().is_empty())
        .ok_or_else(|| ExtractError::Unparseable {
            reason: "no tool call and no content".into(),
            raw: completion.raw.clone(),
        })
}

pub fn llm_extract(
    client: &ChatClient,
    history: &[Utterance],
    rules_text: &str,
    roster: &[PublicParty],
) -> Result<Extraction, ExtractError> {
    let request = build_extraction_request(client.model(), rules_text, history, roster);
    let completion = client.complete(&request)?;
    parse_extraction_response(extraction_payload(&completion)?, history, roster)
}
