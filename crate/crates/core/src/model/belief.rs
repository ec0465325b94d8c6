//! Posterior over the hypothesis space, kept in log space.

use serde::{Deserialize, Serialize};

use super::hypothesis::HypothesisSpace;
use super::likelihood::{gaussian_log_kernel, SignalTable, UpdateConfig};
use super::ModelError;
use crate::scenario::Deal;
use crate::signals::ResolvedSignal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    pub opponent: String,
    log_probs: Vec<f64>,
    round: u32,
}

/// Returns `ln Σ exp(x)`; `-inf` for an empty or all `-inf` slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

impl BeliefState {
    pub fn uniform(opponent: impl Into<String>, space: &HypothesisSpace) -> Self {
        let lp = -(space.len() as f64).ln();
        BeliefState {
            opponent: opponent.into(),
            log_probs: vec![lp; space.len()],
            round: 0,
        }
    }

    /// Normalizes arbitrary finite log-weights into a belief.
    pub fn from_log_weights(
        opponent: impl Into<String>,
        round: u32,
        mut log_weights: Vec<f64>,
    ) -> Result<Self, ModelError> {
        if let Some(index) = log_weights.iter().position(|x| !x.is_finite()) {
            return Err(ModelError::NonFinite { index });
        }
        let z = log_sum_exp(&log_weights);
        for x in &mut log_weights {
            *x -= z;
        }
        Ok(BeliefState {
            opponent: opponent.into(),
            log_probs: log_weights,
            round,
        })
    }

    /// All mass on hypothesis `k` (every other entry at a very small floor so
    /// that log-probabilities stay finite).
    pub fn concentrated(opponent: impl Into<String>, space: &HypothesisSpace, k: usize) -> Self {
        let mut w = vec![-1.0e4; space.len()];
        w[k] = 0.0;
        Self::from_log_weights(opponent, 0, w).expect("finite weights")
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.log_probs.iter().map(|x| x.exp()).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.log_probs.iter().map(|x| x.exp()).sum()
    }

    /// Highest-posterior index, lowest index on ties.
    pub fn map_index(&self) -> usize {
        let mut best = 0;
        for (k, &lp) in self.log_probs.iter().enumerate() {
            if lp > self.log_probs[best] {
                best = k;
            }
        }
        best
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .log_probs
            .iter()
            .map(|&lp| {
                let p = lp.exp();
                if p > 0.0 {
                    p * lp
                } else {
                    0.0
                }
            })
            .sum::<f64>()
    }

    /// `n` most probable hypotheses, descending; ties by lower index.
    pub fn top(&self, n: usize) -> Vec<(usize, f64)> {
        let mut idx: Vec<usize> = (0..self.log_probs.len()).collect();
        let by_prob = |a: &usize, b: &usize| {
            self.log_probs[*b]
                .total_cmp(&self.log_probs[*a])
                .then(a.cmp(b))
        };
        let n = n.min(idx.len());
        if n == 0 {
            return Vec::new();
        }
        idx.select_nth_unstable_by(n - 1, by_prob);
        idx.truncate(n);
        idx.sort_by(by_prob);
        idx.into_iter()
            .map(|k| (k, self.log_probs[k].exp()))
            .collect()
    }
}

/// Adds one round of evidence and renormalizes.
///
/// The offer term is included when `deal` is present and `cfg.use_offers` is
/// set; each signal adds an independent Luce term when `cfg.use_signals` is
/// set. With no evidence terms the log-probabilities are returned untouched.
pub fn update_belief(
    space: &HypothesisSpace,
    belief: &BeliefState,
    deal: Option<&Deal>,
    signals: &[ResolvedSignal],
    round: u32,
    cfg: &UpdateConfig,
) -> Result<BeliefState, ModelError> {
    cfg.validate()?;
    if belief.len() != space.len() {
        return Err(ModelError::Dimension {
            expected: space.len(),
            found: belief.len(),
        });
    }
    if round <= belief.round {
        return Err(ModelError::StaleRound {
            last: belief.round,
            got: round,
        });
    }

    let offer = match deal {
        Some(d) if cfg.use_offers => Some((d, cfg.concession.target_utility(round)?)),
        _ => None,
    };
    let signals: &[ResolvedSignal] = if cfg.use_signals { signals } else { &[] };
    if offer.is_none() && signals.is_empty() {
        return Ok(BeliefState {
            opponent: belief.opponent.clone(),
            log_probs: belief.log_probs.clone(),
            round,
        });
    }

    let tables: Vec<SignalTable> = signals.iter().map(|s| SignalTable::build(space, s)).collect();
    let mut next = belief.log_probs.clone();
    for (wi, block) in next.chunks_mut(space.combo_count()).enumerate() {
        let weights = &space.weight_hypotheses()[wi].weights;
        for (combo, lp) in block.iter_mut().enumerate() {
            let apexes = space.apexes_of_combo(combo);
            if let Some((d, target)) = offer {
                let u: f64 = d
                    .choices()
                    .iter()
                    .enumerate()
                    .map(|(m, &o)| weights[m] * space.shape_values(m, apexes[m] as usize)[o])
                    .sum();
                *lp += gaussian_log_kernel(u, target, cfg.sigma);
            }
            for t in &tables {
                *lp += t.lookup(wi, apexes);
            }
            if !lp.is_finite() {
                return Err(ModelError::NonFinite {
                    index: wi * space.combo_count() + combo,
                });
            }
        }
    }
    let mut out = BeliefState::from_log_weights(belief.opponent.clone(), round, next)?;
    out.round = round;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateMode {
    PosteriorMean,
    Map,
}

/// Estimated per-issue, per-option scores for one opponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateTable(pub Vec<Vec<f64>>);

impl EstimateTable {
    pub fn rows(&self) -> &[Vec<f64>] {
        &self.0
    }

    pub fn utility(&self, deal: &Deal) -> f64 {
        deal.choices()
            .iter()
            .zip(&self.0)
            .map(|(&o, row)| row[o])
            .sum()
    }

    pub fn from_scores(scores: &crate::scenario::ScoreTable) -> Self {
        EstimateTable(scores.to_f64())
    }
}

/// Score-table-shaped estimate, `scale · w_m · v_m(o)` averaged under the
/// posterior (or taken at the MAP hypothesis).
pub fn point_estimate(
    space: &HypothesisSpace,
    belief: &BeliefState,
    mode: EstimateMode,
    scale: f64,
) -> EstimateTable {
    match mode {
        EstimateMode::Map => EstimateTable(space.utility_table(belief.map_index(), scale)),
        EstimateMode::PosteriorMean => {
            let counts = space.option_counts();
            let weight_count = space.weight_count();
            // joint[m][wi * K_m + apex] = P(weight wi, apex of issue m)
            let mut joint: Vec<Vec<f64>> =
                counts.iter().map(|&k| vec![0.0; weight_count * k]).collect();
            for (k, &lp) in belief.log_probs().iter().enumerate() {
                let p = lp.exp();
                let (wi, _) = space.split(k);
                for (m, &a) in space.apexes_of(k).iter().enumerate() {
                    joint[m][wi * counts[m] + a as usize] += p;
                }
            }
            let table = counts
                .iter()
                .enumerate()
                .map(|(m, &k_m)| {
                    let mut row = vec![0.0; k_m];
                    for wi in 0..weight_count {
                        let w = space.weight_hypotheses()[wi].weights[m];
                        for a in 0..k_m {
                            let mass = joint[m][wi * k_m + a];
                            if mass == 0.0 {
                                continue;
                            }
                            for (o, v) in space.shape_values(m, a).iter().enumerate() {
                                row[o] += scale * mass * w * v;
                            }
                        }
                    }
                    row
                })
                .collect();
            EstimateTable(table)
        }
    }
}
