use proptest::prelude::*;

use parley_core::engine::TrialResult;
use parley_core::metrics::{aggregate, score_mse};
use parley_core::model::{update_belief, BeliefState, EstimateTable, HypothesisSpace, UpdateConfig};
use parley_core::scenario::{Deal, Scenario, ScoreTable};
use parley_core::signals::ResolvedSignal;

const COUNTS: [usize; 3] = [3, 4, 2];

fn toy_signal() -> impl Strategy<Value = ResolvedSignal> {
    let option = (0..COUNTS.len()).prop_flat_map(|m| (Just(m), 0..COUNTS[m]));
    prop_oneof![
        (0..3usize).prop_map(ResolvedSignal::PreferIssue),
        (0..3usize).prop_map(ResolvedSignal::OpposeIssue),
        (0..3usize, 0..3usize)
            .prop_filter("distinct", |(a, b)| a != b)
            .prop_map(|(preferred, other)| ResolvedSignal::IssueOver { preferred, other }),
        option.clone().prop_map(|(issue, option)| ResolvedSignal::PreferOption { issue, option }),
        option.clone().prop_map(|(issue, option)| ResolvedSignal::OpposeOption { issue, option }),
        (option.clone(), option)
            .prop_filter("distinct", |(a, b)| a != b)
            .prop_map(|(preferred, other)| ResolvedSignal::OptionOver { preferred, other }),
    ]
}

fn toy_deal() -> impl Strategy<Value = Deal> {
    (0..COUNTS[0], 0..COUNTS[1], 0..COUNTS[2]).prop_map(|(a, b, c)| Deal::new(vec![a, b, c]))
}

fn result(full: bool, partial: bool, latent: bool) -> TrialResult {
    TrialResult {
        seed: 0,
        history: vec![],
        final_deal: None,
        satisfied_count: 0,
        vetoes_satisfied: partial,
        full_agreement: full,
        partial_agreement: partial,
        latent_hit: latent,
        aborted: None,
        beliefs: vec![],
    }
}

/// Outcome flags that respect full => partial => latent.
fn nested_outcome() -> impl Strategy<Value = TrialResult> {
    (0..4u8).prop_map(|level| result(level >= 3, level >= 2, level >= 1))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn posterior_stays_normalized(
        steps in prop::collection::vec((prop::option::of(toy_deal()), prop::collection::vec(toy_signal(), 0..5)), 1..5),
        sigma in 0.05f64..3.0,
    ) {
        let space = HypothesisSpace::build(&COUNTS).unwrap();
        let mut cfg = UpdateConfig::new(4);
        cfg.sigma = sigma;
        let mut belief = BeliefState::uniform("x", &space);
        for (round, (deal, signals)) in steps.iter().enumerate() {
            belief = update_belief(&space, &belief, deal.as_ref(), signals, round as u32 + 1, &cfg).unwrap();
            prop_assert!((belief.total_mass() - 1.0).abs() < 1e-9);
            prop_assert!(belief.probabilities().iter().all(|p| p.is_finite() && *p >= 0.0));
        }
    }

    #[test]
    fn signal_order_is_irrelevant(
        deal in toy_deal(),
        signals in prop::collection::vec(toy_signal(), 1..8),
        shift in 0usize..8,
    ) {
        let space = HypothesisSpace::build(&COUNTS).unwrap();
        let cfg = UpdateConfig::new(2);
        let prior = BeliefState::uniform("x", &space);
        let mut rotated = signals.clone();
        let n = rotated.len();
        rotated.rotate_left(shift % n);
        rotated.reverse();
        let a = update_belief(&space, &prior, Some(&deal), &signals, 1, &cfg).unwrap();
        let b = update_belief(&space, &prior, Some(&deal), &rotated, 1, &cfg).unwrap();
        for (p, q) in a.probabilities().iter().zip(b.probabilities()) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn aggregate_ignores_trial_order(
        mut results in prop::collection::vec(nested_outcome(), 1..60),
        seed in any::<u64>(),
    ) {
        let before = aggregate(&results).unwrap();
        prop_assert!(before.far.rate <= before.par.rate && before.par.rate <= before.lar.rate);
        let n = results.len();
        for i in 0..n {
            let j = (seed.rotate_left(i as u32) as usize) % n;
            results.swap(i, j);
        }
        prop_assert_eq!(aggregate(&results).unwrap(), before);
    }

    #[test]
    fn mse_ignores_issue_order(
        rows in prop::collection::vec(prop::collection::vec(0i64..50, 2..5), 1..5),
        noise in prop::collection::vec(-20.0f64..20.0, 25),
        seed in any::<u64>(),
    ) {
        let estimate: Vec<Vec<f64>> = rows
            .iter()
            .enumerate()
            .map(|(m, r)| r.iter().enumerate().map(|(o, &x)| x as f64 + noise[(m * 5 + o) % 25]).collect())
            .collect();
        let base = score_mse(&EstimateTable(estimate.clone()), &ScoreTable::new(rows.clone())).unwrap();
        let mut order: Vec<usize> = (0..rows.len()).collect();
        let n = order.len();
        for i in 0..n {
            order.swap(i, (seed.rotate_left(7 * i as u32) as usize) % n);
        }
        let est_p = EstimateTable(order.iter().map(|&i| estimate[i].clone()).collect());
        let truth_p = ScoreTable::new(order.iter().map(|&i| rows[i].clone()).collect());
        prop_assert!((score_mse(&est_p, &truth_p).unwrap() - base).abs() < 1e-9);
    }

    #[test]
    fn deal_text_round_trips(choices in (0..3usize, 0..3usize, 0..4usize, 0..4usize, 0..5usize)) {
        let s = Scenario::harbour_sport_park();
        let (a, b, c, d, e) = choices;
        let deal = Deal::new(vec![a, b, c, d, e]);
        let text = s.render_deal(&deal);
        prop_assert_eq!(s.parse_deal(&text).unwrap(), deal.clone());
        prop_assert_eq!(s.parse_deal(&text.replace(',', ", ")).unwrap(), deal);
    }
}
