//! Multilateral negotiation with Bayesian opponent modeling driven by
//! offers and linguistic signals.

pub mod chat;
pub mod engine;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod scenario;
pub mod signals;
pub mod trace;
