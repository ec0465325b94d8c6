use parley_core::engine::TrialResult;
use parley_core::metrics::{aggregate, mse_summary, mse_trajectory_csv, score_mse};
use parley_core::model::{point_estimate, BeliefState, EstimateMode, HypothesisSpace};
use parley_core::scenario::Scenario;

fn synthetic(i: usize) -> TrialResult {
    // full every 5th, partial every 2nd or 5th, latent every 2nd, 3rd or 5th
    let full = i.is_multiple_of(5);
    let partial = full || i.is_multiple_of(2);
    let latent = partial || i.is_multiple_of(3);
    TrialResult {
        seed: i as u64,
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

#[test]
fn rates_over_synthetic_batch() {
    let results: Vec<TrialResult> = (0..500).map(synthetic).collect();
    let r = aggregate(&results).unwrap();
    // counted by inclusion-exclusion over multiples of 2, 3 and 5 below 500
    let full = 100;
    let partial = 250 + 100 - 50;
    let latent = 250 + 167 + 100 - 84 - 50 - 34 + 17;
    assert_eq!((r.far.hits, r.par.hits, r.lar.hits), (full, partial, latent));
    assert!((r.far.rate - 0.2).abs() < 1e-15);
    assert!((r.far.std - (0.2f64 * 0.8 / 500.0).sqrt()).abs() < 1e-15);
    assert_eq!(r.trials, 500);
    assert_eq!(r.aborted, 0);
}

#[test]
fn uniform_posterior_mse_against_sportco() {
    let s = Scenario::harbour_sport_park();
    let space = HypothesisSpace::build(&s.option_counts()).unwrap();
    let est = point_estimate(&space, &BeliefState::uniform("SportCo", &space), EstimateMode::PosteriorMean, 100.0);
    // exact rational value from the triangular means under weight 1/5 per issue
    let expected = 6470.0 / 57.0;
    let got = score_mse(&est, &s.party("SportCo").unwrap().scores).unwrap();
    assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
}

#[test]
fn mse_absent_without_beliefs() {
    let s = Scenario::harbour_sport_park();
    let results: Vec<TrialResult> = (0..3).map(synthetic).collect();
    assert_eq!(mse_summary(&results, &s, "SportCo").unwrap(), None);
    assert_eq!(mse_trajectory_csv(&results, &s, "SportCo").unwrap(), "round,DoT,Env,Union,Cities,Mayor,average\n");
}
