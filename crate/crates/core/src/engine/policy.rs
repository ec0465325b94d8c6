//! Agent policies and the shared proposal rule.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PolicyError, RoundRecord};
use crate::model::{ConcessionCurve, EstimateTable};
use crate::scenario::{Deal, Party, PublicScenario};

/// Everything a policy may look at when it is its turn to speak.
///
/// There is deliberately no path from here to another party's score table:
/// opponents are visible only through `public` and the estimates the engine
/// chose to hand over.
pub struct TurnContext<'a> {
    pub public: &'a PublicScenario,
    pub me: &'a Party,
    pub round: u32,
    pub history: &'a [RoundRecord],
    /// Estimated score tables for opponents this agent models, by party id.
    pub estimates: &'a BTreeMap<String, EstimateTable>,
}

impl TurnContext<'_> {
    pub fn is_final(&self) -> bool {
        self.round == self.public.rounds
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub deal: Deal,
    pub utterance: String,
}

pub trait AgentPolicy: Send {
    fn propose(&mut self, ctx: &TurnContext<'_>, rng: &mut ChaCha8Rng) -> Result<Proposal, PolicyError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConcessionParams {
    /// Own aspiration curve, as a fraction of own maximum utility.
    pub start: f64,
    pub end: f64,
    pub beta: f64,
    /// Never propose below own reservation threshold while some deal meets it.
    pub keep_threshold: bool,
}

impl Default for ConcessionParams {
    fn default() -> Self {
        ConcessionParams {
            start: 1.0,
            end: 0.4,
            beta: 1.0,
            keep_threshold: true,
        }
    }
}

impl ConcessionParams {
    pub fn curve(&self, horizon: u32) -> ConcessionCurve {
        ConcessionCurve {
            start: self.start,
            end: self.end,
            beta: self.beta,
            horizon,
        }
    }
}

/// Lexicographic score of one candidate; larger is better.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
struct CandidateScore {
    vetoes: bool,
    satisfied: usize,
    min_margin: f64,
    closeness: f64,
}

/// The deal an agent with `estimates` would propose at `round`.
///
/// Candidates are deals whose own utility reaches the concession target (and
/// own threshold, with `keep_threshold`). Among them the rule maximizes, in
/// order: predicted veto satisfaction, predicted number of satisfied parties,
/// the smallest predicted margin over modeled opponents, and closeness of own
/// utility to the target. Opponents without an estimate are left out of the
/// prediction, so with no estimates this is a plain concession proposal.
/// Exact ties are broken uniformly with `rng`.
pub fn plan_proposal(
    public: &PublicScenario,
    me: &Party,
    round: u32,
    estimates: &BTreeMap<String, EstimateTable>,
    params: &ConcessionParams,
    rng: &mut ChaCha8Rng,
) -> Result<Deal, PolicyError> {
    let curve = params.curve(public.rounds);
    let target = curve
        .target_utility(round)
        .map_err(|e| PolicyError::new(&me.id, e.to_string()))?
        * me.scores.max_total() as f64;
    let known: Vec<(&EstimateTable, i64, bool)> = public
        .parties
        .iter()
        .filter(|p| p.id != me.id)
        .filter_map(|p| estimates.get(&p.id).map(|e| (e, p.threshold, p.veto)))
        .collect();

    let own = |d: &Deal| me.utility(d) as f64;
    let meets_floor = |d: &Deal| !params.keep_threshold || public.satisfaction.holds(own(d), me.threshold);
    let mut pool: Vec<Deal> = public
        .enumerate_deals()
        .filter(|d| own(d) >= target - 1e-9 && meets_floor(d))
        .collect();
    if pool.is_empty() {
        pool = public.enumerate_deals().filter(|d| own(d) >= target - 1e-9).collect();
    }
    if pool.is_empty() {
        let best = public.enumerate_deals().map(|d| me.utility(&d)).max().unwrap_or(0);
        pool = public.enumerate_deals().filter(|d| me.utility(d) == best).collect();
    }

    let score = |d: &Deal| {
        let mine = own(d);
        let mut vetoes = !me.veto || public.satisfaction.holds(mine, me.threshold);
        let mut satisfied = usize::from(public.satisfaction.holds(mine, me.threshold));
        let mut min_margin = f64::INFINITY;
        for &(est, tau, veto) in &known {
            let u = est.utility(d);
            let ok = public.satisfaction.holds(u, tau);
            satisfied += usize::from(ok);
            vetoes &= !veto || ok;
            min_margin = min_margin.min(u - tau as f64);
        }
        if known.is_empty() {
            min_margin = 0.0;
        }
        CandidateScore {
            vetoes,
            satisfied,
            min_margin,
            closeness: -(mine - target).abs(),
        }
    };

    let scored: Vec<(CandidateScore, Deal)> = pool.into_iter().map(|d| (score(&d), d)).collect();
    let best = scored
        .iter()
        .map(|(s, _)| *s)
        .reduce(|a, b| if b > a { b } else { a })
        .expect("pool is non-empty");
    let mut top: Vec<Deal> = scored.into_iter().filter(|(s, _)| *s == best).map(|(_, d)| d).collect();
    let pick = rng.random_range(0..top.len());
    Ok(top.swap_remove(pick))
}

/// Truthful template utterance: the proposal plus the speaker's top issue and
/// its best option.
pub fn template_utterance(public: &PublicScenario, me: &Party, deal: &Deal) -> String {
    let rows = me.scores.rows();
    let top = (0..public.issues.len())
        .max_by(|&a, &b| me.scores.issue_max(a).cmp(&me.scores.issue_max(b)).then(b.cmp(&a)))
        .expect("at least one issue");
    let issue = &public.issues[top];
    let best = (0..rows[top].len())
        .max_by(|&a, &b| rows[top][a].cmp(&rows[top][b]).then(b.cmp(&a)))
        .expect("at least one option");
    format!(
        "I propose {}. {} ({}) matters most to us, and we favour {}{}.",
        public.render_deal(deal),
        issue.name,
        issue.id,
        issue.id,
        best + 1
    )
}

/// Concession agent scoring deals with whatever estimates it is handed.
///
/// Used both as the scripted baseline (no estimates) and as the belief-driven
/// agent (the engine supplies posterior point estimates).
#[derive(Debug, Clone, Default)]
pub struct ConcessionPolicy {
    pub params: ConcessionParams,
}

impl AgentPolicy for ConcessionPolicy {
    fn propose(&mut self, ctx: &TurnContext<'_>, rng: &mut ChaCha8Rng) -> Result<Proposal, PolicyError> {
        let deal = plan_proposal(ctx.public, ctx.me, ctx.round, ctx.estimates, &self.params, rng)?;
        let utterance = template_utterance(ctx.public, ctx.me, &deal);
        Ok(Proposal { deal, utterance })
    }
}

pub fn scripted_concession_policy(params: ConcessionParams) -> ConcessionPolicy {
    ConcessionPolicy { params }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::scenario::Scenario;

    fn truth_estimates(s: &Scenario, except: &str) -> BTreeMap<String, EstimateTable> {
        s.parties
            .iter()
            .filter(|p| p.id != except)
            .map(|p| (p.id.clone(), EstimateTable::from_scores(&p.scores)))
            .collect()
    }

    #[test]
    fn round_one_is_own_best() {
        let s = Scenario::harbour_sport_park();
        let public = s.public_view();
        let me = s.party("SportCo").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = plan_proposal(&public, me, 1, &BTreeMap::new(), &ConcessionParams::default(), &mut rng).unwrap();
        assert_eq!(s.render_deal(&d), "A1,B1,C4,D1,E5");
        assert_eq!(me.utility(&d), 100);
        // estimates do not matter when the target pins own maximum
        let d2 = plan_proposal(&public, me, 1, &truth_estimates(&s, "SportCo"), &ConcessionParams::default(), &mut rng).unwrap();
        assert_eq!(d, d2);
    }

    #[test]
    fn ground_truth_final_proposal_is_full_agreement() {
        let s = Scenario::harbour_sport_park();
        let public = s.public_view();
        let me = s.party("SportCo").unwrap();
        let est = truth_estimates(&s, "SportCo");
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = plan_proposal(&public, me, s.rounds, &est, &ConcessionParams::default(), &mut rng).unwrap();
            assert!(s.agreement_level(&d).is_full(), "{}", s.render_deal(&d));
        }
    }

    #[test]
    fn no_estimates_tracks_target() {
        let s = Scenario::harbour_sport_park();
        let public = s.public_view();
        let me = s.party("Mayor").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = ConcessionParams {
            keep_threshold: false,
            ..ConcessionParams::default()
        };
        let target = params.curve(s.rounds).target_utility(12).unwrap() * 100.0;
        let d = plan_proposal(&public, me, 12, &BTreeMap::new(), &params, &mut rng).unwrap();
        let best_gap = s
            .enumerate_deals()
            .map(|d| me.utility(&d) as f64)
            .filter(|&u| u >= target - 1e-9)
            .map(|u| u - target)
            .fold(f64::INFINITY, f64::min);
        assert!((me.utility(&d) as f64 - target - best_gap).abs() < 1e-9);
    }

    #[test]
    fn threshold_floor_holds() {
        let s = Scenario::harbour_sport_park();
        let public = s.public_view();
        for p in &s.parties {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let d = plan_proposal(&public, p, s.rounds, &BTreeMap::new(), &ConcessionParams::default(), &mut rng).unwrap();
            assert!(p.utility(&d) >= p.threshold, "{}", p.id);
        }
    }

    #[test]
    fn utterance_names_top_issue() {
        let s = Scenario::harbour_sport_park();
        let public = s.public_view();
        let env = s.party("Env").unwrap();
        let d = s.parse_deal("A3,B3,C1,D1,E1").unwrap();
        assert_eq!(
            template_utterance(&public, env, &d),
            "I propose A3,B3,C1,D1,E1. Ecology (B) matters most to us, and we favour B3."
        );
    }
}
