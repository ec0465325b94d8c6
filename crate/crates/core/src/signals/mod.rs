//! Structured linguistic signals: a target (issue or option, single or
//! compared pair) plus a prefer/oppose stance, attributed to one agent.
//!
//! Signals travel in the flat wire form `{entity, signal_type, target, stance}`
//! and are resolved against the scenario's issues before they reach the
//! opponent model.

pub mod llm;
pub mod oracle;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{option_label, parse_option_label, Issue};

pub use llm::{
    build_extraction_request, llm_extract, negotiation_rules, parse_extraction_response,
    extraction_payload, render_chat_history, render_signal_prompt, signal_tool_schema, Extraction, ExtractError,
    SIGNAL_PROMPT_TEMPLATE, SIGNAL_PROMPT_VERSION, SIGNAL_TOOL_NAME,
};
pub use oracle::{oracle_extract, SignalMix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Entity {
    Issue,
    Option,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalType {
    Point,
    Comparison,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stance {
    Prefer,
    Oppose,
}

/// Issue id or issue-qualified 0-based option.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TargetRef {
    Issue(String),
    Option { issue: String, option: usize },
}

impl TargetRef {
    pub fn entity(&self) -> Entity {
        match self {
            TargetRef::Issue(_) => Entity::Issue,
            TargetRef::Option { .. } => Entity::Option,
        }
    }
}

impl fmt::Display for TargetRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetRef::Issue(id) => f.write_str(id),
            TargetRef::Option { issue, option } => f.write_str(&option_label(issue, *option)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Target {
    Point(TargetRef),
    Comparison(TargetRef, TargetRef),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "AgentWireSignal", into = "AgentWireSignal")]
pub struct Signal {
    pub agent: String,
    pub target: Target,
    pub stance: Stance,
}

/// The four-field record of the extraction function schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireSignal {
    pub entity: Entity,
    pub signal_type: SignalType,
    pub target: String,
    pub stance: Stance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AgentWireSignal {
    agent: String,
    #[serde(flatten)]
    wire: WireSignal,
}

impl TryFrom<AgentWireSignal> for Signal {
    type Error = SignalRejection;

    fn try_from(value: AgentWireSignal) -> Result<Self, Self::Error> {
        Signal::from_wire(value.agent, &value.wire)
    }
}

impl From<Signal> for AgentWireSignal {
    fn from(s: Signal) -> Self {
        AgentWireSignal {
            wire: s.to_wire(),
            agent: s.agent,
        }
    }
}

/// Why a signal was not admitted to the opponent model.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum SignalRejection {
    #[error("malformed target `{0}`")]
    MalformedTarget(String),
    #[error("{signal_type:?} signal needs {expected} target(s), got {found}")]
    Arity {
        signal_type: SignalType,
        expected: usize,
        found: usize,
    },
    #[error("unknown issue `{0}`")]
    UnknownIssue(String),
    #[error("issue `{issue}` has no option {number}")]
    UnknownOption { issue: String, number: usize },
    #[error("comparison mixes an issue and an option")]
    MixedComparison,
    #[error("comparison of `{0}` with itself")]
    SelfComparison(String),
}

fn parse_ref(entity: Entity, token: &str) -> Result<TargetRef, SignalRejection> {
    let token = token.trim();
    if token.is_empty() {
        return Err(SignalRejection::MalformedTarget(token.to_string()));
    }
    match entity {
        Entity::Issue => Ok(TargetRef::Issue(token.to_string())),
        Entity::Option => parse_option_label(token)
            .map(|(issue, option)| TargetRef::Option {
                issue: issue.to_string(),
                option,
            })
            .ok_or_else(|| SignalRejection::MalformedTarget(token.to_string())),
    }
}

impl Signal {
    pub fn point(agent: impl Into<String>, target: TargetRef, stance: Stance) -> Self {
        Signal {
            agent: agent.into(),
            target: Target::Point(target),
            stance,
        }
    }

    pub fn comparison(agent: impl Into<String>, first: TargetRef, second: TargetRef, stance: Stance) -> Self {
        Signal {
            agent: agent.into(),
            target: Target::Comparison(first, second),
            stance,
        }
    }

    /// Parses the wire record. Only the target grammar is checked here; names
    /// are checked against a scenario by [`validate_signal`].
    pub fn from_wire(agent: impl Into<String>, wire: &WireSignal) -> Result<Self, SignalRejection> {
        let parts: Vec<&str> = wire.target.split(',').collect();
        let expected = match wire.signal_type {
            SignalType::Point => 1,
            SignalType::Comparison => 2,
        };
        if parts.len() != expected {
            return Err(SignalRejection::Arity {
                signal_type: wire.signal_type,
                expected,
                found: parts.len(),
            });
        }
        let target = match wire.signal_type {
            SignalType::Point => Target::Point(parse_ref(wire.entity, parts[0])?),
            SignalType::Comparison => Target::Comparison(
                parse_ref(wire.entity, parts[0])?,
                parse_ref(wire.entity, parts[1])?,
            ),
        };
        Ok(Signal {
            agent: agent.into(),
            target,
            stance: wire.stance,
        })
    }

    pub fn signal_type(&self) -> SignalType {
        match self.target {
            Target::Point(_) => SignalType::Point,
            Target::Comparison(..) => SignalType::Comparison,
        }
    }

    /// Entity of the first target (a mixed comparison reports the first).
    pub fn entity(&self) -> Entity {
        match &self.target {
            Target::Point(t) | Target::Comparison(t, _) => t.entity(),
        }
    }

    pub fn target_text(&self) -> String {
        match &self.target {
            Target::Point(t) => t.to_string(),
            Target::Comparison(a, b) => format!("{a}, {b}"),
        }
    }

    pub fn to_wire(&self) -> WireSignal {
        WireSignal {
            entity: self.entity(),
            signal_type: self.signal_type(),
            target: self.target_text(),
            stance: self.stance,
        }
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let stance = match self.stance {
            Stance::Prefer => "prefer",
            Stance::Oppose => "oppose",
        };
        write!(f, "{}: {stance} {}", self.agent, self.target_text())
    }
}

/// A signal checked against the scenario and reduced to index form.
///
/// An opposed comparison "x, y" is read as a preference for y over x.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ResolvedSignal {
    PreferIssue(usize),
    OpposeIssue(usize),
    IssueOver { preferred: usize, other: usize },
    PreferOption { issue: usize, option: usize },
    OpposeOption { issue: usize, option: usize },
    OptionOver { preferred: (usize, usize), other: (usize, usize) },
}

enum Resolved {
    Issue(usize),
    Option(usize, usize),
}

fn resolve_ref(target: &TargetRef, issues: &[Issue]) -> Result<Resolved, SignalRejection> {
    let find = |id: &str| {
        issues
            .iter()
            .position(|i| i.id == id)
            .ok_or_else(|| SignalRejection::UnknownIssue(id.to_string()))
    };
    match target {
        TargetRef::Issue(id) => Ok(Resolved::Issue(find(id)?)),
        TargetRef::Option { issue, option } => {
            let m = find(issue)?;
            if *option >= issues[m].option_count() {
                return Err(SignalRejection::UnknownOption {
                    issue: issue.clone(),
                    number: option + 1,
                });
            }
            Ok(Resolved::Option(m, *option))
        }
    }
}

/// Checks that targets exist, options belong to their issue, and compared
/// targets are of one kind and distinct.
pub fn validate_signal(signal: &Signal, issues: &[Issue]) -> Result<ResolvedSignal, SignalRejection> {
    let prefer = signal.stance == Stance::Prefer;
    match &signal.target {
        Target::Point(t) => Ok(match (resolve_ref(t, issues)?, prefer) {
            (Resolved::Issue(x), true) => ResolvedSignal::PreferIssue(x),
            (Resolved::Issue(x), false) => ResolvedSignal::OpposeIssue(x),
            (Resolved::Option(m, o), true) => ResolvedSignal::PreferOption { issue: m, option: o },
            (Resolved::Option(m, o), false) => ResolvedSignal::OpposeOption { issue: m, option: o },
        }),
        Target::Comparison(a, b) => {
            if a.entity() != b.entity() {
                return Err(SignalRejection::MixedComparison);
            }
            if a == b {
                return Err(SignalRejection::SelfComparison(a.to_string()));
            }
            let (first, second) = (resolve_ref(a, issues)?, resolve_ref(b, issues)?);
            let (first, second) = if prefer { (first, second) } else { (second, first) };
            Ok(match (first, second) {
                (Resolved::Issue(x), Resolved::Issue(y)) => ResolvedSignal::IssueOver {
                    preferred: x,
                    other: y,
                },
                (Resolved::Option(m, o), Resolved::Option(n, p)) => ResolvedSignal::OptionOver {
                    preferred: (m, o),
                    other: (n, p),
                },
                _ => return Err(SignalRejection::MixedComparison),
            })
        }
    }
}

/// One natural-language message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub round: u32,
    pub speaker: String,
    pub text: String,
}
