//! Round-based negotiation protocol: one proposal (deal plus utterance) per
//! round, signals extracted from each utterance, listener beliefs updated
//! about the speaker, outcome judged on the last round's deal.

pub mod llm_agent;
pub mod policy;

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chat::ChatClient;
use crate::model::{
    point_estimate, update_belief, BeliefState, EstimateMode, EstimateTable, HypothesisSpace, UpdateConfig,
};
use crate::scenario::{Deal, Issue, Party, PublicParty, Scenario};
use crate::signals::{llm_extract, negotiation_rules, oracle_extract, validate_signal, Signal, SignalMix, Utterance};

pub use llm_agent::{llm_agent_policy, LlmAgentPolicy, AGENT_PROMPT_TEMPLATE};
pub use policy::{
    plan_proposal, scripted_concession_policy, template_utterance, AgentPolicy, ConcessionParams,
    ConcessionPolicy, Proposal, TurnContext,
};

#[derive(Debug, Clone, Error, PartialEq)]
#[error("policy of `{agent}` failed: {reason}")]
pub struct PolicyError {
    pub agent: String,
    pub reason: String,
}

impl PolicyError {
    pub fn new(agent: &str, reason: impl Into<String>) -> Self {
        PolicyError {
            agent: agent.to_string(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("no policy for party `{0}`")]
    MissingPolicy(String),
    #[error("policy given for unknown party `{0}`")]
    UnknownPolicy(String),
    #[error("invalid estimator configuration: {0}")]
    Config(String),
}

/// Speaker of `round` (1-based) among `parties`: round-robin from the first
/// party, except that the last round always goes back to the first party.
pub fn speaker_index(round: u32, parties: usize, horizon: u32) -> usize {
    if round == horizon {
        0
    } else {
        (round as usize - 1) % parties
    }
}

pub fn schedule(parties: usize, horizon: u32) -> Vec<usize> {
    (1..=horizon).map(|t| speaker_index(t, parties, horizon)).collect()
}

/// Which agents maintain beliefs about the others.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimators {
    None,
    /// Only the first party (the leader).
    Leader,
    All,
}

/// Where estimating agents get their opponent tables from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateSource {
    Posterior,
    /// True score tables; for planner checks only.
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub estimators: Estimators,
    pub source: EstimateSource,
    pub update: UpdateConfig,
    pub estimate_mode: EstimateMode,
    /// Hypotheses kept per belief snapshot.
    pub trace_top: usize,
}

impl EstimatorConfig {
    pub fn new(estimators: Estimators, horizon: u32) -> Self {
        EstimatorConfig {
            estimators,
            source: EstimateSource::Posterior,
            update: UpdateConfig::new(horizon),
            estimate_mode: EstimateMode::PosteriorMean,
            trace_top: 10,
        }
    }

    fn estimates(&self, party_index: usize) -> bool {
        match self.estimators {
            Estimators::None => false,
            Estimators::Leader => party_index == 0,
            Estimators::All => true,
        }
    }

    fn wants_signals(&self) -> bool {
        self.estimators != Estimators::None
            && self.source == EstimateSource::Posterior
            && self.update.use_signals
    }
}

pub struct ExtractInput<'a> {
    pub round: u32,
    /// Ground truth of the speaker; only the oracle may read it.
    pub speaker: &'a Party,
    pub issues: &'a [Issue],
    pub roster: &'a [PublicParty],
    pub rules: &'a str,
    pub utterance: &'a Utterance,
    pub seed: u64,
}

/// Turns the speaker's utterance into signals about the speaker.
pub trait SignalExtractor: Send + Sync {
    fn extract(&self, input: &ExtractInput<'_>) -> Result<Vec<Signal>, String>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleExtractor {
    pub per_utterance: usize,
    pub mix: SignalMix,
}

impl SignalExtractor for OracleExtractor {
    fn extract(&self, input: &ExtractInput<'_>) -> Result<Vec<Signal>, String> {
        oracle_extract(input.speaker, input.issues, input.seed, self.per_utterance, &self.mix).map_err(|e| e.to_string())
    }
}

/// Sends the latest utterance through the extraction prompt and keeps the
/// signals attributed to its speaker.
pub struct LlmExtractor {
    pub client: ChatClient,
}

impl SignalExtractor for LlmExtractor {
    fn extract(&self, input: &ExtractInput<'_>) -> Result<Vec<Signal>, String> {
        let history = std::slice::from_ref(input.utterance);
        let ex = llm_extract(&self.client, history, input.rules, input.roster).map_err(|e| e.to_string())?;
        Ok(ex.for_agent(&input.utterance.speaker).to_vec())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub speaker: String,
    pub deal: Deal,
    pub deal_text: String,
    pub utterance: String,
    /// Signals admitted to the opponent models.
    pub signals: Vec<Signal>,
    /// Extracted signals that failed validation, with the reason.
    pub rejected: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopHypothesis {
    pub index: usize,
    pub prob: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefSnapshot {
    pub round: u32,
    pub entropy: f64,
    pub map_index: usize,
    pub top: Vec<TopHypothesis>,
    pub estimate: EstimateTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefTrace {
    pub observer: String,
    pub opponent: String,
    pub snapshots: Vec<BeliefSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub history: Vec<RoundRecord>,
    pub final_deal: Option<Deal>,
    pub satisfied_count: usize,
    pub vetoes_satisfied: bool,
    pub full_agreement: bool,
    pub partial_agreement: bool,
    pub latent_hit: bool,
    /// Diagnostic when the trial was cut short; such trials count as no
    /// agreement of any kind.
    pub aborted: Option<String>,
    pub beliefs: Vec<BeliefTrace>,
}

impl TrialResult {
    pub fn trace(&self, observer: &str, opponent: &str) -> Option<&BeliefTrace> {
        self.beliefs
            .iter()
            .find(|b| b.observer == observer && b.opponent == opponent)
    }

    /// Latest estimate `observer` holds about `opponent`.
    pub fn final_estimate(&self, observer: &str, opponent: &str) -> Option<&EstimateTable> {
        self.trace(observer, opponent)?.snapshots.last().map(|s| &s.estimate)
    }
}

pub type Agents = BTreeMap<String, Box<dyn AgentPolicy>>;

/// One concession policy per party.
pub fn concession_agents(scenario: &Scenario, params: ConcessionParams) -> Agents {
    scenario
        .parties
        .iter()
        .map(|p| (p.id.clone(), Box::new(scripted_concession_policy(params)) as Box<dyn AgentPolicy>))
        .collect()
}

struct Listener {
    beliefs: BTreeMap<String, BeliefState>,
    estimates: BTreeMap<String, EstimateTable>,
}

fn snapshot(
    space: &HypothesisSpace,
    belief: &BeliefState,
    estimate: &EstimateTable,
    issue_ids: &[String],
    top: usize,
) -> BeliefSnapshot {
    BeliefSnapshot {
        round: belief.round(),
        entropy: belief.entropy(),
        map_index: belief.map_index(),
        top: belief
            .top(top)
            .into_iter()
            .map(|(index, prob)| TopHypothesis {
                index,
                prob,
                label: space.describe(index, issue_ids),
            })
            .collect(),
        estimate: estimate.clone(),
    }
}

/// Plays one trial.
///
/// `space` is only consulted for posterior estimation; `extractor` only when
/// some agent estimates from signals.
pub fn run_negotiation(
    scenario: &Scenario,
    space: &HypothesisSpace,
    agents: &mut Agents,
    cfg: &EstimatorConfig,
    extractor: Option<&dyn SignalExtractor>,
    seed: u64,
) -> Result<TrialResult, EngineError> {
    for p in &scenario.parties {
        if !agents.contains_key(&p.id) {
            return Err(EngineError::MissingPolicy(p.id.clone()));
        }
    }
    if let Some(id) = agents.keys().find(|id| scenario.party_index(id).is_none()) {
        return Err(EngineError::UnknownPolicy(id.clone()));
    }
    cfg.update.validate().map_err(|e| EngineError::Config(e.to_string()))?;
    let posterior = cfg.estimators != Estimators::None && cfg.source == EstimateSource::Posterior;
    if posterior && space.option_counts() != scenario.option_counts().as_slice() {
        return Err(EngineError::Config("hypothesis space does not match the scenario's issues".into()));
    }

    let public = scenario.public_view();
    let rules = negotiation_rules(&public);
    let issue_ids: Vec<String> = scenario.issues.iter().map(|i| i.id.clone()).collect();
    let n = scenario.parties.len();
    let horizon = scenario.rounds;

    let mut extract_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy_rngs: Vec<ChaCha8Rng> = (0..n)
        .map(|i| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(1 + i as u64);
            r
        })
        .collect();

    let mut listeners: Vec<Option<Listener>> = Vec::with_capacity(n);
    let mut traces: Vec<BeliefTrace> = Vec::new();
    let prior = posterior.then(|| {
        let b = BeliefState::uniform("", space);
        let est = point_estimate(space, &b, cfg.estimate_mode, 100.0);
        (b, est)
    });
    for (i, me) in scenario.parties.iter().enumerate() {
        if !cfg.estimates(i) {
            listeners.push(None);
            continue;
        }
        let mut listener = Listener {
            beliefs: BTreeMap::new(),
            estimates: BTreeMap::new(),
        };
        for other in scenario.parties.iter().filter(|p| p.id != me.id) {
            match &prior {
                Some((uniform, est)) => {
                    let b = BeliefState::uniform(other.id.clone(), space);
                    traces.push(BeliefTrace {
                        observer: me.id.clone(),
                        opponent: other.id.clone(),
                        snapshots: vec![snapshot(space, uniform, est, &issue_ids, cfg.trace_top)],
                    });
                    listener.beliefs.insert(other.id.clone(), b);
                }
                None => {
                    listener
                        .estimates
                        .insert(other.id.clone(), EstimateTable::from_scores(&other.scores));
                }
            }
        }
        listeners.push(Some(listener));
    }

    let empty = BTreeMap::new();
    let mut history: Vec<RoundRecord> = Vec::new();
    let mut aborted = None;

    for round in 1..=horizon {
        let si = speaker_index(round, n, horizon);
        let speaker = &scenario.parties[si];
        let estimates = listeners[si].as_ref().map(|l| &l.estimates).unwrap_or(&empty);
        let ctx = TurnContext {
            public: &public,
            me: speaker,
            round,
            history: &history,
            estimates,
        };
        let policy = agents.get_mut(&speaker.id).expect("checked above");
        let proposal = match policy.propose(&ctx, &mut policy_rngs[si]) {
            Ok(p) => p,
            Err(e) => {
                aborted = Some(format!("round {round}: {e}"));
                break;
            }
        };
        if let Err(e) = scenario.validate_deal(&proposal.deal) {
            aborted = Some(format!("round {round}: `{}` proposed an invalid deal: {e}", speaker.id));
            break;
        }

        let extract_seed = extract_rng.next_u64();
        let mut signals = Vec::new();
        let mut resolved = Vec::new();
        let mut rejected = Vec::new();
        if cfg.wants_signals() {
            if let Some(extractor) = extractor {
                let utterance = Utterance {
                    round,
                    speaker: speaker.id.clone(),
                    text: proposal.utterance.clone(),
                };
                let input = ExtractInput {
                    round,
                    speaker,
                    issues: &scenario.issues,
                    roster: &public.parties,
                    rules: &rules,
                    utterance: &utterance,
                    seed: extract_seed,
                };
                match extractor.extract(&input) {
                    Ok(found) => {
                        for sig in found {
                            match validate_signal(&sig, &scenario.issues) {
                                Ok(r) => {
                                    resolved.push(r);
                                    signals.push(sig);
                                }
                                Err(why) => {
                                    log::info!("round {round}: dropped signal `{sig}`: {why}");
                                    rejected.push(format!("{sig}: {why}"));
                                }
                            }
                        }
                    }
                    Err(e) => {
                        aborted = Some(format!("round {round}: signal extraction failed: {e}"));
                        break;
                    }
                }
            }
        }

        for (li, listener) in listeners.iter_mut().enumerate() {
            let Some(listener) = listener else { continue };
            if li == si {
                continue;
            }
            let Some(belief) = listener.beliefs.get(&speaker.id) else {
                continue;
            };
            let next = update_belief(space, belief, Some(&proposal.deal), &resolved, round, &cfg.update)
                .map_err(|e| EngineError::Config(e.to_string()))?;
            let est = point_estimate(space, &next, cfg.estimate_mode, 100.0);
            let observer = &scenario.parties[li].id;
            if let Some(trace) = traces
                .iter_mut()
                .find(|t| &t.observer == observer && t.opponent == speaker.id)
            {
                trace.snapshots.push(snapshot(space, &next, &est, &issue_ids, cfg.trace_top));
            }
            listener.estimates.insert(speaker.id.clone(), est);
            listener.beliefs.insert(speaker.id.clone(), next);
        }

        history.push(RoundRecord {
            round,
            speaker: speaker.id.clone(),
            deal_text: scenario.render_deal(&proposal.deal),
            deal: proposal.deal,
            utterance: proposal.utterance,
            signals,
            rejected,
        });
    }

    let mut result = TrialResult {
        seed,
        final_deal: None,
        satisfied_count: 0,
        vetoes_satisfied: false,
        full_agreement: false,
        partial_agreement: false,
        latent_hit: false,
        aborted,
        beliefs: traces,
        history,
    };
    if result.aborted.is_none() {
        let last = result.history.last().expect("at least one round").deal.clone();
        let level = scenario.agreement_level(&last);
        result.satisfied_count = level.satisfied_count;
        result.vetoes_satisfied = level.vetoes_satisfied;
        result.full_agreement = level.is_full();
        result.partial_agreement = level.is_partial();
        result.latent_hit = result
            .history
            .iter()
            .any(|r| scenario.agreement_level(&r.deal).is_partial());
        result.final_deal = Some(last);
    }
    Ok(result)
}
