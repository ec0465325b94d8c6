//! Bayesian opponent model: a finite hypothesis space over utility
//! functions, updated from observed deals and linguistic signals under a
//! Naive-Bayes factorization.

pub mod belief;
pub mod hypothesis;
pub mod likelihood;

use thiserror::Error;

pub use belief::{log_sum_exp, point_estimate, update_belief, BeliefState, EstimateMode, EstimateTable};
pub use hypothesis::{
    additive_utility, EvalShape, Hypothesis, HypothesisSpace, WeightHypothesis, DEFAULT_MAX_HYPOTHESES,
};
pub use likelihood::{
    luce_log_likelihood, offer_log_likelihood, signal_log_likelihood, ConcessionCurve, SignalTable, UpdateConfig,
    STRENGTH_FLOOR,
};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("hypothesis space {size} exceeds the budget of {budget} hypotheses")]
    Capacity { size: String, budget: usize },
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("round {round} outside 1..={horizon}")]
    RoundOutOfRange { round: u32, horizon: u32 },
    #[error("belief already updated through round {last}; cannot apply round {got}")]
    StaleRound { last: u32, got: u32 },
    #[error("non-finite log-probability at hypothesis {index}")]
    NonFinite { index: usize },
    #[error("belief has {found} entries, hypothesis space has {expected}")]
    Dimension { expected: usize, found: usize },
}
