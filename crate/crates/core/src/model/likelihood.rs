//! Per-hypothesis evidence terms: the Gaussian offer likelihood around an
//! assumed concession target, and Luce choice likelihoods for signals.

use serde::{Deserialize, Serialize};

use super::hypothesis::HypothesisSpace;
use super::ModelError;
use crate::scenario::Deal;
use crate::signals::ResolvedSignal;

/// Strength floor applied before every Luce ratio.
pub const STRENGTH_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcessionCurve {
    pub start: f64,
    pub end: f64,
    pub beta: f64,
    pub horizon: u32,
}

impl ConcessionCurve {
    pub fn new(start: f64, end: f64, beta: f64, horizon: u32) -> Result<Self, ModelError> {
        let curve = ConcessionCurve {
            start,
            end,
            beta,
            horizon,
        };
        curve.validate()?;
        Ok(curve)
    }

    /// Linear descent from 1.0 to 0.4 over `horizon` rounds.
    pub fn linear(horizon: u32) -> Self {
        ConcessionCurve {
            start: 1.0,
            end: 0.4,
            beta: 1.0,
            horizon,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = self.start > 0.0
            && self.start <= 1.0
            && self.end >= 0.0
            && self.end < 1.0
            && self.start >= self.end
            && self.beta > 0.0
            && self.beta.is_finite()
            && self.horizon >= 1;
        if ok {
            Ok(())
        } else {
            Err(ModelError::InvalidConfig(format!(
                "concession curve needs 0 <= end <= start <= 1, end < 1, start > 0, beta > 0, horizon >= 1 (got {self:?})"
            )))
        }
    }

    /// `end + (start - end) · (1 - ((t-1)/(T-1))^β)` for rounds `1..=T`.
    pub fn target_utility(&self, round: u32) -> Result<f64, ModelError> {
        if round == 0 || round > self.horizon {
            return Err(ModelError::RoundOutOfRange {
                round,
                horizon: self.horizon,
            });
        }
        if self.horizon == 1 {
            return Ok(self.start);
        }
        let progress = (round - 1) as f64 / (self.horizon - 1) as f64;
        Ok(self.end + (self.start - self.end) * (1.0 - progress.powf(self.beta)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateConfig {
    pub sigma: f64,
    pub use_offers: bool,
    pub use_signals: bool,
    pub concession: ConcessionCurve,
}

impl UpdateConfig {
    pub fn new(horizon: u32) -> Self {
        UpdateConfig {
            sigma: 1.0,
            use_offers: true,
            use_signals: true,
            concession: ConcessionCurve::linear(horizon),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(ModelError::InvalidConfig(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        self.concession.validate()
    }
}

/// `-(û - target)² / (2σ²)`; the shared normalizing constant is dropped.
#[inline]
pub fn gaussian_log_kernel(estimated: f64, target: f64, sigma: f64) -> f64 {
    let r = estimated - target;
    -(r * r) / (2.0 * sigma * sigma)
}

pub fn offer_log_likelihood(
    space: &HypothesisSpace,
    k: usize,
    deal: &Deal,
    round: u32,
    cfg: &UpdateConfig,
) -> Result<f64, ModelError> {
    let target = cfg.concession.target_utility(round)?;
    Ok(gaussian_log_kernel(
        space.estimated_utility(k, deal),
        target,
        cfg.sigma,
    ))
}

#[inline]
fn floor(x: f64) -> f64 {
    x.max(STRENGTH_FLOOR)
}

/// Luce log-probability of `signal` given an issue-weight vector and a value
/// lookup `values(issue) -> shape values` for one hypothesis.
pub fn luce_log_likelihood<'a>(
    weights: &[f64],
    values: impl Fn(usize) -> &'a [f64],
    signal: &ResolvedSignal,
) -> f64 {
    match *signal {
        ResolvedSignal::PreferIssue(x) => {
            let total: f64 = weights.iter().map(|&w| floor(w)).sum();
            (floor(weights[x]) / total).ln()
        }
        ResolvedSignal::OpposeIssue(x) => {
            if weights.len() < 2 {
                return 0.0;
            }
            let total: f64 = weights.iter().map(|&w| floor(1.0 - w)).sum();
            (floor(1.0 - weights[x]) / total).ln()
        }
        ResolvedSignal::IssueOver { preferred, other } => {
            let a = floor(weights[preferred]);
            let b = floor(weights[other]);
            (a / (a + b)).ln()
        }
        ResolvedSignal::PreferOption { issue, option } => {
            let v = values(issue);
            let total: f64 = v.iter().map(|&x| floor(x)).sum();
            (floor(v[option]) / total).ln()
        }
        ResolvedSignal::OpposeOption { issue, option } => {
            let v = values(issue);
            let total: f64 = v.iter().map(|&x| floor(x)).sum();
            let complement = |x: f64| floor(1.0 - floor(x) / total);
            let denom: f64 = v.iter().map(|&x| complement(x)).sum();
            (complement(v[option]) / denom).ln()
        }
        ResolvedSignal::OptionOver { preferred, other } => {
            let a = floor(weights[preferred.0] * values(preferred.0)[preferred.1]);
            let b = floor(weights[other.0] * values(other.0)[other.1]);
            (a / (a + b)).ln()
        }
    }
}

pub fn signal_log_likelihood(space: &HypothesisSpace, k: usize, signal: &ResolvedSignal) -> f64 {
    let apexes = space.apexes_of(k);
    luce_log_likelihood(
        space.weights_of(k),
        |m| space.shape_values(m, apexes[m] as usize),
        signal,
    )
}

/// One signal's log-likelihood over the whole space, tabulated on the
/// coordinates it depends on: the weight ranking, one issue's apex, or a
/// ranking plus two apexes.
#[derive(Debug, Clone)]
pub enum SignalTable {
    Weight(Vec<f64>),
    Apex { issue: usize, table: Vec<f64> },
    WeightApexes { a: usize, b: usize, ka: usize, kb: usize, table: Vec<f64> },
}

impl SignalTable {
    pub fn build(space: &HypothesisSpace, signal: &ResolvedSignal) -> Self {
        let weights = space.weight_hypotheses();
        let counts = space.option_counts();
        match *signal {
            ResolvedSignal::PreferIssue(_) | ResolvedSignal::OpposeIssue(_) | ResolvedSignal::IssueOver { .. } => {
                SignalTable::Weight(
                    weights
                        .iter()
                        .map(|w| luce_log_likelihood(&w.weights, |m| space.shape_values(m, 0), signal))
                        .collect(),
                )
            }
            ResolvedSignal::PreferOption { issue, .. } | ResolvedSignal::OpposeOption { issue, .. } => {
                SignalTable::Apex {
                    issue,
                    table: (0..counts[issue])
                        .map(|apex| luce_log_likelihood(&weights[0].weights, |_| space.shape_values(issue, apex), signal))
                        .collect(),
                }
            }
            ResolvedSignal::OptionOver { preferred, other } => {
                let (a, b) = (preferred.0, other.0);
                let (ka, kb) = (counts[a], counts[b]);
                let mut table = Vec::with_capacity(weights.len() * ka * kb);
                for w in weights {
                    for xa in 0..ka {
                        for xb in 0..kb {
                            let values = |m: usize| {
                                if m == a {
                                    space.shape_values(a, xa)
                                } else {
                                    space.shape_values(b, xb)
                                }
                            };
                            table.push(luce_log_likelihood(&w.weights, values, signal));
                        }
                    }
                }
                SignalTable::WeightApexes { a, b, ka, kb, table }
            }
        }
    }

    #[inline]
    pub fn lookup(&self, weight_index: usize, apexes: &[u16]) -> f64 {
        match self {
            SignalTable::Weight(t) => t[weight_index],
            SignalTable::Apex { issue, table } => table[apexes[*issue] as usize],
            SignalTable::WeightApexes { a, b, ka, kb, table } => {
                table[(weight_index * ka + apexes[*a] as usize) * kb + apexes[*b] as usize]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::hypothesis::Hypothesis;

    #[test]
    fn tables_match_direct_evaluation() {
        let space = HypothesisSpace::build(&[3, 4, 2]).unwrap();
        let signals = [
            ResolvedSignal::PreferIssue(1),
            ResolvedSignal::OpposeIssue(2),
            ResolvedSignal::IssueOver { preferred: 2, other: 0 },
            ResolvedSignal::PreferOption { issue: 1, option: 3 },
            ResolvedSignal::OpposeOption { issue: 0, option: 0 },
            ResolvedSignal::OptionOver { preferred: (0, 2), other: (1, 1) },
            ResolvedSignal::OptionOver { preferred: (1, 0), other: (1, 2) },
        ];
        for sig in &signals {
            let t = SignalTable::build(&space, sig);
            for k in 0..space.len() {
                let (wi, _) = space.split(k);
                let direct = signal_log_likelihood(&space, k, sig);
                assert_eq!(t.lookup(wi, space.apexes_of(k)).to_bits(), direct.to_bits(), "{sig:?} k={k}");
            }
        }
    }

    #[test]
    fn concession_examples() {
        let c = ConcessionCurve::new(1.0, 0.4, 1.0, 24).unwrap();
        assert_eq!(c.target_utility(1).unwrap(), 1.0);
        assert!((c.target_utility(24).unwrap() - 0.4).abs() < 1e-15);
        let mid = c.target_utility(13).unwrap();
        assert!((mid - (1.0 - 0.6 * 12.0 / 23.0)).abs() < 1e-15);
        assert!((mid - 0.6870).abs() < 5e-5);
        assert!(c.target_utility(0).is_err());
        assert!(c.target_utility(25).is_err());
        assert!(ConcessionCurve::new(0.3, 0.4, 1.0, 24).is_err());
        assert!(ConcessionCurve::new(1.0, 0.4, 0.0, 24).is_err());
    }

    #[test]
    fn concession_is_non_increasing() {
        for beta in [0.3, 1.0, 2.5] {
            let c = ConcessionCurve::new(0.9, 0.2, beta, 24).unwrap();
            let targets: Vec<f64> = (1..=24).map(|t| c.target_utility(t).unwrap()).collect();
            assert!(targets.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn offer_kernel_examples() {
        assert_eq!(gaussian_log_kernel(0.7, 0.7, 1.0), 0.0);
        assert!((gaussian_log_kernel(0.5, 1.0, 1.0) + 0.125).abs() < 1e-15);
        let (r, sigma) = (0.2, 0.7);
        let diff = gaussian_log_kernel(0.5 + 2.0 * r, 0.5, sigma) - gaussian_log_kernel(0.5 + r, 0.5, sigma);
        assert!((diff + 3.0 * r * r / (2.0 * sigma * sigma)).abs() < 1e-15);
    }

    #[test]
    fn luce_examples() {
        let uniform = [0.2; 5];
        let none = |_: usize| -> &[f64] { &[] };
        let l = luce_log_likelihood(&uniform, none, &ResolvedSignal::PreferIssue(2));
        assert!((l - 0.2f64.ln()).abs() < 1e-15);
        let l = luce_log_likelihood(
            &[0.3, 0.3, 0.4],
            none,
            &ResolvedSignal::IssueOver { preferred: 0, other: 1 },
        );
        assert!((l - 0.5f64.ln()).abs() < 1e-15);

        let shape = [1.0, 0.5, 0.0];
        let l = luce_log_likelihood(
            &[1.0],
            |_| &shape,
            &ResolvedSignal::PreferOption { issue: 0, option: 0 },
        );
        assert!((l - (1.0 / (1.5 + STRENGTH_FLOOR)).ln()).abs() < 1e-15);
    }

    #[test]
    fn oppose_cases_use_normalized_complement() {
        let w = [0.5, 0.3, 0.2];
        let none = |_: usize| -> &[f64] { &[] };
        let l = luce_log_likelihood(&w, none, &ResolvedSignal::OpposeIssue(0));
        assert!((l - (0.5f64 / 2.0).ln()).abs() < 1e-15);

        let shape = [0.0, 0.5, 1.0];
        // v̄ = (ε, 0.5, 1) / (1.5 + ε)
        let total = 1.5 + STRENGTH_FLOOR;
        let c: Vec<f64> = shape.iter().map(|&x: &f64| 1.0 - x.max(STRENGTH_FLOOR) / total).collect();
        let l = luce_log_likelihood(&[1.0], |_| &shape, &ResolvedSignal::OpposeOption { issue: 0, option: 0 });
        assert!((l - (c[0] / c.iter().sum::<f64>()).ln()).abs() < 1e-15);
        assert!((c.iter().sum::<f64>() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_issue_oppose_is_uninformative() {
        let l = luce_log_likelihood(&[1.0], |_| &[1.0, 0.0][..], &ResolvedSignal::OpposeIssue(0));
        assert_eq!(l, 0.0);
    }

    #[test]
    fn space_lookup_matches_direct() {
        let space = HypothesisSpace::build(&[3, 4]).unwrap();
        let k = space.index_of(&Hypothesis { weight_index: 1, shape_indices: vec![2, 1] });
        // ranking (1, 0): w = (1/3, 2/3); v_A = (0, 0.5, 1), v_B = (0, 1, 0.5, 0)
        let sig = ResolvedSignal::OptionOver { preferred: (0, 2), other: (1, 2) };
        let expect = ((1.0 / 3.0) / (1.0 / 3.0 + 2.0 / 3.0 * 0.5f64)).ln();
        assert!((signal_log_likelihood(&space, k, &sig) - expect).abs() < 1e-15);
        let cfg = UpdateConfig::new(24);
        let deal = Deal::new(vec![2, 1]);
        assert_eq!(offer_log_likelihood(&space, k, &deal, 1, &cfg).unwrap(), 0.0);
    }
}
