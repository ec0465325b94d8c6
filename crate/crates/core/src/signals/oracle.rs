//! Truthful signal sampler driven by a party's real score table.
//!
//! Issue importance is the issue's maximum score over the sum of maxima.
//! Point signals are Luce draws (prefer: proportional to strength; oppose:
//! proportional to the normalized complement), and comparisons always order
//! the pair the way the true scores do.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Signal, Stance, TargetRef};
use crate::scenario::{Issue, Party};

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("signal count must be at least 1")]
    ZeroCount,
    #[error("party `{0}` has no positive score on any issue")]
    NoPreferences(String),
    #[error("signal mix needs at least one positive weight among the available kinds")]
    EmptyMix,
}

/// Relative frequency of each signal kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalMix {
    pub prefer_issue: f64,
    pub oppose_issue: f64,
    pub issue_comparison: f64,
    pub prefer_option: f64,
    pub oppose_option: f64,
    pub option_comparison: f64,
}

impl Default for SignalMix {
    fn default() -> Self {
        SignalMix {
            prefer_issue: 0.25,
            oppose_issue: 0.1,
            issue_comparison: 0.15,
            prefer_option: 0.25,
            oppose_option: 0.1,
            option_comparison: 0.15,
        }
    }
}

impl SignalMix {
    pub fn only_prefer_issue() -> Self {
        SignalMix {
            prefer_issue: 1.0,
            oppose_issue: 0.0,
            issue_comparison: 0.0,
            prefer_option: 0.0,
            oppose_option: 0.0,
            option_comparison: 0.0,
        }
    }
}

#[derive(Clone, Copy)]
enum Kind {
    PreferIssue,
    OpposeIssue,
    IssueComparison,
    PreferOption,
    OpposeOption,
    OptionComparison,
}

struct Truth<'a> {
    party: &'a Party,
    issues: &'a [Issue],
    issue_weights: Vec<f64>,
    issue_pairs: Vec<(usize, usize)>,
    option_pairs: Vec<Vec<(usize, usize)>>,
}

impl<'a> Truth<'a> {
    fn new(party: &'a Party, issues: &'a [Issue]) -> Result<Self, OracleError> {
        let maxima: Vec<f64> = (0..issues.len())
            .map(|m| party.scores.issue_max(m) as f64)
            .collect();
        let total: f64 = maxima.iter().sum();
        if total <= 0.0 {
            return Err(OracleError::NoPreferences(party.id.clone()));
        }
        let issue_weights: Vec<f64> = maxima.iter().map(|x| x / total).collect();
        let mut issue_pairs = Vec::new();
        for x in 0..issues.len() {
            for y in x + 1..issues.len() {
                if issue_weights[x] != issue_weights[y] {
                    issue_pairs.push((x, y));
                }
            }
        }
        let option_pairs = party
            .scores
            .rows()
            .iter()
            .map(|row| {
                let mut pairs = Vec::new();
                for a in 0..row.len() {
                    for b in a + 1..row.len() {
                        if row[a] != row[b] {
                            pairs.push((a, b));
                        }
                    }
                }
                pairs
            })
            .collect();
        Ok(Truth {
            party,
            issues,
            issue_weights,
            issue_pairs,
            option_pairs,
        })
    }

    fn issue_ref(&self, m: usize) -> TargetRef {
        TargetRef::Issue(self.issues[m].id.clone())
    }

    fn option_ref(&self, m: usize, o: usize) -> TargetRef {
        TargetRef::Option {
            issue: self.issues[m].id.clone(),
            option: o,
        }
    }

    fn issue_weights_where(&self, keep: impl Fn(usize) -> bool) -> Option<WeightedIndex<f64>> {
        let w: Vec<f64> = self
            .issue_weights
            .iter()
            .enumerate()
            .map(|(m, &w)| if keep(m) { w } else { 0.0 })
            .collect();
        WeightedIndex::new(w).ok()
    }

    fn sample(&self, kind: Kind, rng: &mut ChaCha8Rng) -> Signal {
        let agent = self.party.id.clone();
        let prefer_issue = WeightedIndex::new(&self.issue_weights).expect("positive total");
        match kind {
            Kind::PreferIssue => {
                let x = prefer_issue.sample(rng);
                Signal::point(agent, self.issue_ref(x), Stance::Prefer)
            }
            Kind::OpposeIssue => {
                let complement: Vec<f64> = self.issue_weights.iter().map(|w| 1.0 - w).collect();
                let x = WeightedIndex::new(complement).expect("two or more issues").sample(rng);
                Signal::point(agent, self.issue_ref(x), Stance::Oppose)
            }
            Kind::IssueComparison => {
                let (a, b) = self.issue_pairs[rng.random_range(0..self.issue_pairs.len())];
                let (hi, lo) = if self.issue_weights[a] > self.issue_weights[b] { (a, b) } else { (b, a) };
                Signal::comparison(agent, self.issue_ref(hi), self.issue_ref(lo), Stance::Prefer)
            }
            Kind::PreferOption => {
                let m = prefer_issue.sample(rng);
                let row = &self.party.scores.rows()[m];
                let o = WeightedIndex::new(row.iter().map(|&s| s as f64))
                    .expect("positive issue weight implies a positive score")
                    .sample(rng);
                Signal::point(agent, self.option_ref(m, o), Stance::Prefer)
            }
            Kind::OpposeOption => {
                let m = prefer_issue.sample(rng);
                let row = &self.party.scores.rows()[m];
                let total: f64 = row.iter().map(|&s| s as f64).sum();
                let o = WeightedIndex::new(row.iter().map(|&s| 1.0 - s as f64 / total))
                    .expect("at least two options")
                    .sample(rng);
                Signal::point(agent, self.option_ref(m, o), Stance::Oppose)
            }
            Kind::OptionComparison => {
                let m = self
                    .issue_weights_where(|m| !self.option_pairs[m].is_empty())
                    .expect("checked available")
                    .sample(rng);
                let pairs = &self.option_pairs[m];
                let (a, b) = pairs[rng.random_range(0..pairs.len())];
                let row = &self.party.scores.rows()[m];
                let (hi, lo) = if row[a] > row[b] { (a, b) } else { (b, a) };
                Signal::comparison(agent, self.option_ref(m, hi), self.option_ref(m, lo), Stance::Prefer)
            }
        }
    }
}

/// Samples `count` truthful signals for `truth`; identical output for
/// identical `seed`.
pub fn oracle_extract(
    truth: &Party,
    issues: &[Issue],
    seed: u64,
    count: usize,
    mix: &SignalMix,
) -> Result<Vec<Signal>, OracleError> {
    if count == 0 {
        return Err(OracleError::ZeroCount);
    }
    let t = Truth::new(truth, issues)?;
    let multi_issue = issues.len() >= 2;
    let has_option_pair = t.issue_weights_where(|m| !t.option_pairs[m].is_empty()).is_some();
    let kinds = [
        (Kind::PreferIssue, mix.prefer_issue, true),
        (Kind::OpposeIssue, mix.oppose_issue, multi_issue),
        (Kind::IssueComparison, mix.issue_comparison, !t.issue_pairs.is_empty()),
        (Kind::PreferOption, mix.prefer_option, true),
        (Kind::OpposeOption, mix.oppose_option, true),
        (Kind::OptionComparison, mix.option_comparison, has_option_pair),
    ];
    let weights: Vec<f64> = kinds
        .iter()
        .map(|&(_, w, available)| if available { w.max(0.0) } else { 0.0 })
        .collect();
    let kind_dist = WeightedIndex::new(&weights).map_err(|_| OracleError::EmptyMix)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| t.sample(kinds[kind_dist.sample(&mut rng)].0, &mut rng))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;
    use crate::signals::{validate_signal, ResolvedSignal};

    #[test]
    fn env_prefers_only_scored_issues() {
        let s = Scenario::harbour_sport_park();
        let env = s.party("Env").unwrap();
        let sigs = oracle_extract(env, &s.issues, 3, 2000, &SignalMix::only_prefer_issue()).unwrap();
        for sig in &sigs {
            match validate_signal(sig, &s.issues).unwrap() {
                ResolvedSignal::PreferIssue(x) => assert!(x == 0 || x == 1, "{sig}"),
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn zero_count_rejected() {
        let s = Scenario::harbour_sport_park();
        let p = s.party("DoT").unwrap();
        assert_eq!(oracle_extract(p, &s.issues, 1, 0, &SignalMix::default()), Err(OracleError::ZeroCount));
    }

    #[test]
    fn replay_is_identical() {
        let s = Scenario::harbour_sport_park();
        let p = s.party("Union").unwrap();
        let a = oracle_extract(p, &s.issues, 42, 50, &SignalMix::default()).unwrap();
        let b = oracle_extract(p, &s.issues, 42, 50, &SignalMix::default()).unwrap();
        let c = oracle_extract(p, &s.issues, 43, 50, &SignalMix::default()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn signals_are_truthful() {
        let s = Scenario::harbour_sport_park();
        for party in &s.parties {
            let sigs = oracle_extract(party, &s.issues, 9, 500, &SignalMix::default()).unwrap();
            let rows = party.scores.rows();
            for sig in &sigs {
                match validate_signal(sig, &s.issues).unwrap() {
                    ResolvedSignal::PreferIssue(x) => assert!(party.scores.issue_max(x) > 0),
                    ResolvedSignal::PreferOption { issue, option } => assert!(rows[issue][option] > 0),
                    ResolvedSignal::IssueOver { preferred, other } => {
                        assert!(party.scores.issue_max(preferred) > party.scores.issue_max(other))
                    }
                    ResolvedSignal::OptionOver { preferred, other } => {
                        assert!(rows[preferred.0][preferred.1] > rows[other.0][other.1])
                    }
                    ResolvedSignal::OpposeIssue(_) | ResolvedSignal::OpposeOption { .. } => {}
                }
            }
        }
    }
}
