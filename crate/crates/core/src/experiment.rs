//! Method presets and the seeded, parallel trial runner.

use std::path::PathBuf;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chat::{ChatClient, EndpointConfig};
use crate::engine::{
    concession_agents, llm_agent_policy, run_negotiation, AgentPolicy, Agents, ConcessionParams, EngineError,
    EstimatorConfig, Estimators, LlmExtractor, OracleExtractor, SignalExtractor, TrialResult,
};
use crate::metrics::{aggregate, mse_summary, MetricsError, MetricsReport};
use crate::model::{ConcessionCurve, EstimateMode, HypothesisSpace, ModelError, UpdateConfig};
use crate::scenario::{load_scenario, Scenario, ScenarioError};
use crate::signals::SignalMix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Offers and signals, leader estimates.
    ProposedP1,
    /// Offers and signals, everyone estimates.
    ProposedAll,
    /// Offers only, leader estimates.
    BaseOmP1,
    /// Offers only, everyone estimates.
    BaseOmAll,
    /// Concession agents with no opponent model.
    NoEstimation,
    /// Estimation by prompting the LLM directly (hook; needs an endpoint).
    LlmPeP1,
    LlmPeAll,
    /// Prompt-only LLM agents (needs an endpoint).
    BaseLlm,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::ProposedP1,
        Method::ProposedAll,
        Method::BaseOmP1,
        Method::BaseOmAll,
        Method::NoEstimation,
        Method::LlmPeP1,
        Method::LlmPeAll,
        Method::BaseLlm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::ProposedP1 => "proposed-p1",
            Method::ProposedAll => "proposed-all",
            Method::BaseOmP1 => "base-om-p1",
            Method::BaseOmAll => "base-om-all",
            Method::NoEstimation => "no-estimation",
            Method::LlmPeP1 => "llm-pe-p1",
            Method::LlmPeAll => "llm-pe-all",
            Method::BaseLlm => "base-llm",
        }
    }

    pub fn needs_endpoint(self) -> bool {
        matches!(self, Method::LlmPeP1 | Method::LlmPeAll | Method::BaseLlm)
    }

    fn estimators(self) -> Estimators {
        match self {
            Method::ProposedP1 | Method::BaseOmP1 | Method::LlmPeP1 => Estimators::Leader,
            Method::ProposedAll | Method::BaseOmAll | Method::LlmPeAll => Estimators::All,
            Method::NoEstimation | Method::BaseLlm => Estimators::None,
        }
    }

    fn uses_signals(self) -> bool {
        matches!(self, Method::ProposedP1 | Method::ProposedAll)
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
                format!("unknown method `{s}` (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalSourceKind {
    Oracle,
    Llm,
}

/// Assumed opponent concession curve, `u'(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConcessionSettings {
    pub start: f64,
    pub end: f64,
    pub beta: f64,
}

impl Default for ConcessionSettings {
    fn default() -> Self {
        ConcessionSettings {
            start: 1.0,
            end: 0.4,
            beta: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Scenario file; the bundled scenario when absent.
    pub scenario: Option<PathBuf>,
    pub method: Method,
    pub trials: usize,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub signal_source: SignalSourceKind,
    pub signals_per_utterance: usize,
    pub signal_mix: SignalMix,
    pub sigma: f64,
    pub concession: ConcessionSettings,
    pub agent: ConcessionParams,
    pub estimate_mode: EstimateMode,
    pub endpoint: Option<EndpointConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: None,
            method: Method::ProposedP1,
            trials: 100,
            seed: 0,
            workers: 0,
            signal_source: SignalSourceKind::Oracle,
            signals_per_utterance: 3,
            signal_mix: SignalMix::default(),
            sigma: 1.0,
            concession: ConcessionSettings::default(),
            agent: ConcessionParams::default(),
            estimate_mode: EstimateMode::PosteriorMean,
            endpoint: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid `{field}`: {reason}")]
    Config { field: &'static str, reason: String },
    #[error("method `{0}` needs an `endpoint` section")]
    EndpointRequired(&'static str),
    #[error("method `{0}` is a configuration hook with no runner in this build")]
    Unsupported(&'static str),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

fn config_error(field: &'static str, reason: impl Into<String>) -> ExperimentError {
    ExperimentError::Config {
        field,
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.trials == 0 {
            return Err(config_error("trials", "must be at least 1"));
        }
        if self.signals_per_utterance == 0 {
            return Err(config_error("signals_per_utterance", "must be at least 1"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(config_error("sigma", format!("must be positive, got {}", self.sigma)));
        }
        ConcessionCurve::new(self.concession.start, self.concession.end, self.concession.beta, 1)
            .map_err(|e| config_error("concession", e.to_string()))?;
        ConcessionCurve::new(self.agent.start, self.agent.end, self.agent.beta, 1)
            .map_err(|e| config_error("agent", e.to_string()))?;
        if self.method.needs_endpoint() && self.endpoint.is_none() {
            return Err(ExperimentError::EndpointRequired(self.method.name()));
        }
        if self.signal_source == SignalSourceKind::Llm && self.method.uses_signals() && self.endpoint.is_none() {
            return Err(config_error("signal_source", "`llm` needs an `endpoint` section"));
        }
        Ok(())
    }

    pub fn load_scenario(&self) -> Result<Scenario, ExperimentError> {
        Ok(match &self.scenario {
            Some(path) => Scenario::load(path)?,
            None => Scenario::harbour_sport_park(),
        })
    }

    fn estimator(&self, horizon: u32) -> EstimatorConfig {
        let mut cfg = EstimatorConfig::new(self.method.estimators(), horizon);
        cfg.update = UpdateConfig {
            sigma: self.sigma,
            use_offers: true,
            use_signals: self.method.uses_signals(),
            concession: ConcessionCurve {
                start: self.concession.start,
                end: self.concession.end,
                beta: self.concession.beta,
                horizon,
            },
        };
        cfg.estimate_mode = self.estimate_mode;
        cfg
    }
}

/// Hex SHA-256 over the result-relevant configuration and the scenario
/// source. The worker count is excluded.
pub fn fingerprint(cfg: &ExperimentConfig, scenario_source: &str) -> String {
    let mut canonical = cfg.clone();
    canonical.workers = 0;
    canonical.scenario = None;
    let mut h = Sha256::new();
    h.update(serde_json::to_string(&canonical).expect("config serializes"));
    h.update(b"\n");
    h.update(scenario_source.as_bytes());
    hex::encode(h.finalize())
}

/// Seed of trial `trial`: the master seed keyed by the trial counter, so any
/// trial can be replayed on its own.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(trial as u64);
    rng.next_u64()
}

pub struct ExperimentOutput {
    pub scenario: Scenario,
    pub results: Vec<TrialResult>,
    pub report: MetricsReport,
}

/// Runs `cfg` against its own scenario and endpoint.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, ExperimentError> {
    let source = match &cfg.scenario {
        Some(p) => std::fs::read_to_string(p).map_err(|source| ScenarioError::Io {
            path: p.display().to_string(),
            source,
        })?,
        None => Scenario::harbour_sport_park_source().to_string(),
    };
    let scenario = load_scenario(&source)?;
    let client = match &cfg.endpoint {
        Some(e) => Some(ChatClient::from_config(e).map_err(|err| config_error("endpoint", err.to_string()))?),
        None => None,
    };
    run_experiment_with(cfg, scenario, &source, client)
}

/// Runs `cfg` on an already loaded scenario, with an optional prebuilt chat
/// client (tests pass a mock here).
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    scenario: Scenario,
    scenario_source: &str,
    client: Option<ChatClient>,
) -> Result<ExperimentOutput, ExperimentError> {
    cfg.validate()?;
    if matches!(cfg.method, Method::LlmPeP1 | Method::LlmPeAll) {
        return Err(ExperimentError::Unsupported(cfg.method.name()));
    }
    let estimator = cfg.estimator(scenario.rounds);
    let space = HypothesisSpace::build(&scenario.option_counts())?;
    let extractor: Option<Box<dyn SignalExtractor>> = match (cfg.method.uses_signals(), cfg.signal_source) {
        (false, _) => None,
        (true, SignalSourceKind::Oracle) => Some(Box::new(OracleExtractor {
            per_utterance: cfg.signals_per_utterance,
            mix: cfg.signal_mix,
        })),
        (true, SignalSourceKind::Llm) => Some(Box::new(LlmExtractor {
            client: client
                .clone()
                .ok_or_else(|| config_error("endpoint", "no chat client for the llm signal source"))?,
        })),
    };
    let make_agents = |_: usize| -> Result<Agents, ExperimentError> {
        if cfg.method == Method::BaseLlm {
            let client = client.clone().ok_or(ExperimentError::EndpointRequired(cfg.method.name()))?;
            Ok(scenario
                .parties
                .iter()
                .map(|p| (p.id.clone(), Box::new(llm_agent_policy(client.clone(), None)) as Box<dyn AgentPolicy>))
                .collect())
        } else {
            Ok(concession_agents(&scenario, cfg.agent))
        }
    };

    let run_one = |trial: usize| -> Result<TrialResult, ExperimentError> {
        let mut agents = make_agents(trial)?;
        let seed = trial_seed(cfg.seed, trial);
        let result = run_negotiation(&scenario, &space, &mut agents, &estimator, extractor.as_deref(), seed)?;
        if let Some(why) = &result.aborted {
            log::warn!("trial {trial} aborted: {why}");
        }
        Ok(result)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| config_error("workers", e.to_string()))?;
    let results: Vec<TrialResult> = pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(run_one)
            .collect::<Result<Vec<_>, _>>()
    })?;

    let mut report = aggregate(&results)?;
    report.mse = mse_summary(&results, &scenario, &scenario.parties[0].id)?;
    report.fingerprint = fingerprint(cfg, scenario_source);
    Ok(ExperimentOutput {
        scenario,
        results,
        report,
    })
}
