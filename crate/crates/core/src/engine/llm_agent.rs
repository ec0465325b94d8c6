//! Prompt-only negotiating agent over a chat-completion endpoint.

use rand_chacha::ChaCha8Rng;

use super::policy::{AgentPolicy, Proposal, TurnContext};
use super::PolicyError;
use crate::chat::{ChatClient, ChatMessage, ChatRequest};
use crate::scenario::{option_label, Deal, Satisfaction};
use crate::signals::negotiation_rules;

pub const AGENT_PROMPT_TEMPLATE: &str = "You are {name}, one of the parties in a multi-issue negotiation.

Negotiation rules:
{rules}

Your private scores for each option (higher is better):
{scores}
You accept a deal only if your total score is {acceptance} {threshold}.

This is round {round} of {rounds}. Proposals so far:
{history}

Propose a deal for this round and explain it to the other parties. Reply in exactly two lines:
DEAL: <one option per issue, for example {example}>
MESSAGE: <your message to the other parties>";

pub struct LlmAgentPolicy {
    pub client: ChatClient,
    pub template: String,
}

pub fn llm_agent_policy(client: ChatClient, template: Option<String>) -> LlmAgentPolicy {
    LlmAgentPolicy {
        client,
        template: template.unwrap_or_else(|| AGENT_PROMPT_TEMPLATE.to_string()),
    }
}

fn render_prompt(template: &str, ctx: &TurnContext<'_>) -> String {
    let public = ctx.public;
    let scores = public
        .issues
        .iter()
        .zip(ctx.me.scores.rows())
        .map(|(issue, row)| {
            let cells: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(o, s)| format!("{}={s}", option_label(&issue.id, o)))
                .collect();
            format!("{} ({}): {}", issue.id, issue.name, cells.join(" "))
        })
        .collect::<Vec<_>>()
        .join("\n");
    let history = if ctx.history.is_empty() {
        "(none yet)".to_string()
    } else {
        ctx.history
            .iter()
            .map(|r| {
                let name = public
                    .parties
                    .iter()
                    .find(|p| p.id == r.speaker)
                    .map(|p| p.name.as_str())
                    .unwrap_or(&r.speaker);
                format!("Round {} - {}: DEAL {}. {}", r.round, name, r.deal_text, r.utterance)
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    let example = public
        .issues
        .iter()
        .map(|i| option_label(&i.id, 0))
        .collect::<Vec<_>>()
        .join(",");
    let acceptance = match public.satisfaction {
        Satisfaction::AtLeast => "at least",
        Satisfaction::Exceeds => "more than",
    };
    template
        .replace("{name}", &ctx.me.name)
        .replace("{rules}", &negotiation_rules(public))
        .replace("{scores}", &scores)
        .replace("{acceptance}", acceptance)
        .replace("{threshold}", &ctx.me.threshold.to_string())
        .replace("{round}", &ctx.round.to_string())
        .replace("{rounds}", &public.rounds.to_string())
        .replace("{history}", &history)
        .replace("{example}", &example)
}

/// Extracts `DEAL:` and `MESSAGE:` lines. A missing message leaves the
/// utterance empty.
pub fn parse_agent_reply(text: &str, ctx: &TurnContext<'_>) -> Result<(Deal, String), String> {
    let field = |key: &str| {
        text.lines().find_map(|l| {
            let l = l.trim().trim_start_matches(['*', '#', ' ']);
            l.get(..key.len())
                .filter(|head| head.eq_ignore_ascii_case(key))
                .map(|_| l[key.len()..].trim().trim_matches('*').trim())
        })
    };
    let deal_text = field("DEAL:").ok_or_else(|| "reply has no `DEAL:` line".to_string())?;
    let deal = ctx.public.parse_deal(deal_text).map_err(|e| e.to_string())?;
    let message = field("MESSAGE:").unwrap_or("").to_string();
    Ok((deal, message))
}

impl AgentPolicy for LlmAgentPolicy {
    fn propose(&mut self, ctx: &TurnContext<'_>, _rng: &mut ChaCha8Rng) -> Result<Proposal, PolicyError> {
        let fail = |reason: String| PolicyError::new(&ctx.me.id, reason);
        let mut messages = vec![ChatMessage::user(render_prompt(&self.template, ctx))];
        for attempt in 0..2 {
            let reply = self
                .client
                .complete(&ChatRequest::text(self.client.model(), messages.clone()))
                .map_err(|e| fail(e.to_string()))?;
            let text = reply.content.unwrap_or_default();
            match parse_agent_reply(&text, ctx) {
                Ok((deal, utterance)) => return Ok(Proposal { deal, utterance }),
                Err(why) if attempt == 0 => {
                    log::warn!("{}: unusable reply ({why}); re-prompting", ctx.me.id);
                    messages.push(ChatMessage {
                        role: "assistant".into(),
                        content: text,
                    });
                    messages.push(ChatMessage::user(format!(
                        "That reply could not be used: {why}. Answer again with exactly one valid option per issue, in the same two-line format."
                    )));
                }
                Err(why) => return Err(fail(format!("invalid deal after re-prompt: {why}"))),
            }
        }
        unreachable!("loop returns on the second attempt")
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;
    use std::sync::Arc;

    use rand::SeedableRng;

    use super::*;
    use crate::chat::{completion_body, MockTransport, RetryPolicy};
    use crate::scenario::Scenario;

    fn policy(replies: &[&str]) -> (LlmAgentPolicy, Arc<MockTransport>) {
        let mock = Arc::new(MockTransport::new(
            replies.iter().map(|r| Ok(completion_body(Some(r), None))),
        ));
        let client = ChatClient::new(mock.clone(), "m", RetryPolicy::none(), 1);
        (llm_agent_policy(client, None), mock)
    }

    #[test]
    fn fixed_deal_reply_is_parsed() {
        let s = Scenario::harbour_sport_park();
        let public = s.public_view();
        let est = BTreeMap::new();
        let ctx = TurnContext {
            public: &public,
            me: s.party("Mayor").unwrap(),
            round: 3,
            history: &[],
            estimates: &est,
        };
        let (mut p, mock) = policy(&["DEAL: A2,B2,C1,D2,E3\nMESSAGE: Jobs first."]);
        let out = p.propose(&ctx, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(s.render_deal(&out.deal), "A2,B2,C1,D2,E3");
        assert_eq!(out.utterance, "Jobs first.");
        let prompt = mock.requests()[0]["messages"][0]["content"].as_str().unwrap().to_string();
        assert!(prompt.contains("You are Mayor") && prompt.contains("at least 55"));
        // another party's private score row must not leak
        assert!(!prompt.contains("E=[60"));
    }

    #[test]
    fn invalid_option_reprompts_once_then_aborts() {
        let s = Scenario::harbour_sport_park();
        let public = s.public_view();
        let est = BTreeMap::new();
        let ctx = TurnContext {
            public: &public,
            me: s.party("Env").unwrap(),
            round: 3,
            history: &[],
            estimates: &est,
        };
        let (mut p, mock) = policy(&["DEAL: A9,B2,C1,D2,E3", "DEAL: A9,B2,C1,D2,E3", "DEAL: A1,B1,C1,D1,E1"]);
        let err = p.propose(&ctx, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(err.reason.contains("after re-prompt"));
        assert_eq!(mock.requests().len(), 2);

        let (mut p, _) = policy(&["DEAL: A9,B2,C1,D2,E3", "**DEAL:** A3,B3,C1,D1,E1\nMESSAGE: ok"]);
        let out = p.propose(&ctx, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(s.render_deal(&out.deal), "A3,B3,C1,D1,E1");
    }
}
