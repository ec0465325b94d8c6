//! Finite hypothesis space over opponent utility functions.
//!
//! A hypothesis pairs an issue-importance ranking (which fixes a weight
//! vector) with one triangular evaluation shape per issue. Flat index `k`
//! is `weight_index * combo_count + combo_index`, where the combo index is
//! the mixed-radix number formed by the per-issue apex choices, first issue
//! most significant. The ordering is therefore lexicographic by ranking, then
//! by apexes.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::scenario::Deal;

/// Default cap on the number of hypotheses a space may hold.
pub const DEFAULT_MAX_HYPOTHESES: usize = 4_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightHypothesis {
    /// Issue indices from most to least important.
    pub ranking: Vec<usize>,
    /// Normalized weight per issue (scenario issue order).
    pub weights: Vec<f64>,
}

impl WeightHypothesis {
    /// The most important issue gets rank `M`, the least important rank 1,
    /// and weight is rank over `1 + 2 + ... + M`.
    pub fn from_ranking(ranking: Vec<usize>) -> Self {
        let m = ranking.len();
        let total = (m * (m + 1) / 2) as f64;
        let mut weights = vec![0.0; m];
        for (position, &issue) in ranking.iter().enumerate() {
            weights[issue] = (m - position) as f64 / total;
        }
        WeightHypothesis { ranking, weights }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalShape {
    pub issue: usize,
    pub apex: usize,
    pub values: Vec<f64>,
}

impl EvalShape {
    /// Value 1 at `apex`, falling linearly to 0 at each extreme option that
    /// lies on a descending side.
    pub fn triangular(issue: usize, apex: usize, option_count: usize) -> Self {
        let last = option_count - 1;
        let values = (0..option_count)
            .map(|o| {
                if o == apex {
                    1.0
                } else if o < apex {
                    1.0 - (apex - o) as f64 / apex as f64
                } else {
                    1.0 - (o - apex) as f64 / (last - apex) as f64
                }
            })
            .collect();
        EvalShape {
            issue,
            apex,
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Hypothesis {
    pub weight_index: usize,
    pub shape_indices: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct HypothesisSpace {
    weights: Vec<WeightHypothesis>,
    shapes: Vec<Vec<EvalShape>>,
    option_counts: Vec<usize>,
    combo_count: usize,
    // combo_count x M apex table, row-major
    apexes: Vec<u16>,
}

fn checked_factorial(n: usize) -> Option<usize> {
    (1..=n).try_fold(1usize, |acc, x| acc.checked_mul(x))
}

impl HypothesisSpace {
    pub fn build(option_counts: &[usize]) -> Result<Self, ModelError> {
        Self::with_budget(option_counts, DEFAULT_MAX_HYPOTHESES)
    }

    pub fn with_budget(option_counts: &[usize], max_hypotheses: usize) -> Result<Self, ModelError> {
        let m = option_counts.len();
        if m == 0 || option_counts.iter().any(|&k| k < 2 || k > u16::MAX as usize) {
            return Err(ModelError::InvalidConfig(
                "every issue needs between 2 and 65535 options".into(),
            ));
        }
        let size = checked_factorial(m).and_then(|f| {
            option_counts
                .iter()
                .try_fold(f, |acc, &k| acc.checked_mul(k))
        });
        match size {
            Some(size) if size <= max_hypotheses => {}
            _ => {
                return Err(ModelError::Capacity {
                    size: describe_size(option_counts),
                    budget: max_hypotheses,
                })
            }
        }

        let weights: Vec<_> = (0..m)
            .permutations(m)
            .map(WeightHypothesis::from_ranking)
            .collect();
        let shapes: Vec<Vec<_>> = option_counts
            .iter()
            .enumerate()
            .map(|(issue, &k)| (0..k).map(|a| EvalShape::triangular(issue, a, k)).collect())
            .collect();
        let combo_count: usize = option_counts.iter().product();
        let mut apexes = Vec::with_capacity(combo_count * m);
        for combo in option_counts.iter().map(|&k| 0..k).multi_cartesian_product() {
            apexes.extend(combo.into_iter().map(|a| a as u16));
        }
        Ok(HypothesisSpace {
            weights,
            shapes,
            option_counts: option_counts.to_vec(),
            combo_count,
            apexes,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len() * self.combo_count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn issue_count(&self) -> usize {
        self.option_counts.len()
    }

    pub fn option_counts(&self) -> &[usize] {
        &self.option_counts
    }

    pub fn weight_hypotheses(&self) -> &[WeightHypothesis] {
        &self.weights
    }

    pub fn weight_count(&self) -> usize {
        self.weights.len()
    }

    pub fn shapes(&self, issue: usize) -> &[EvalShape] {
        &self.shapes[issue]
    }

    pub fn combo_count(&self) -> usize {
        self.combo_count
    }

    #[inline]
    pub fn split(&self, k: usize) -> (usize, usize) {
        (k / self.combo_count, k % self.combo_count)
    }

    #[inline]
    pub fn weights_of(&self, k: usize) -> &[f64] {
        &self.weights[k / self.combo_count].weights
    }

    #[inline]
    pub fn apexes_of_combo(&self, combo: usize) -> &[u16] {
        let m = self.option_counts.len();
        &self.apexes[combo * m..(combo + 1) * m]
    }

    #[inline]
    pub fn apexes_of(&self, k: usize) -> &[u16] {
        self.apexes_of_combo(k % self.combo_count)
    }

    #[inline]
    pub fn shape_values(&self, issue: usize, apex: usize) -> &[f64] {
        &self.shapes[issue][apex].values
    }

    pub fn hypothesis(&self, k: usize) -> Hypothesis {
        let (weight_index, _) = self.split(k);
        Hypothesis {
            weight_index,
            shape_indices: self.apexes_of(k).iter().map(|&a| a as usize).collect(),
        }
    }

    pub fn index_of(&self, h: &Hypothesis) -> usize {
        let combo = h
            .shape_indices
            .iter()
            .zip(&self.option_counts)
            .fold(0, |acc, (&a, &k)| acc * k + a);
        h.weight_index * self.combo_count + combo
    }

    /// `Σ_m w_m · v_m(o_m)` for hypothesis `k`.
    #[inline]
    pub fn estimated_utility(&self, k: usize, deal: &Deal) -> f64 {
        let w = self.weights_of(k);
        self.apexes_of(k)
            .iter()
            .zip(deal.choices())
            .enumerate()
            .map(|(m, (&a, &o))| w[m] * self.shapes[m][a as usize].values[o])
            .sum()
    }

    /// Per-issue, per-option contributions `scale · w_m · v_m(o)`.
    pub fn utility_table(&self, k: usize, scale: f64) -> Vec<Vec<f64>> {
        let w = self.weights_of(k);
        self.apexes_of(k)
            .iter()
            .enumerate()
            .map(|(m, &a)| {
                self.shapes[m][a as usize]
                    .values
                    .iter()
                    .map(|v| scale * w[m] * v)
                    .collect()
            })
            .collect()
    }

    /// Human-readable label, e.g. `D>A>E>B>C | A1 B2 C4 D1 E5`.
    pub fn describe(&self, k: usize, issue_ids: &[String]) -> String {
        let (wi, _) = self.split(k);
        let ranking = self.weights[wi]
            .ranking
            .iter()
            .map(|&m| issue_ids[m].as_str())
            .join(">");
        let apexes = self
            .apexes_of(k)
            .iter()
            .enumerate()
            .map(|(m, &a)| crate::scenario::option_label(&issue_ids[m], a as usize))
            .join(" ");
        format!("{ranking} | {apexes}")
    }
}

/// `Σ_m w_m · v_m` over already-evaluated per-issue values.
pub fn additive_utility(weights: &[f64], values: &[f64]) -> f64 {
    weights.iter().zip(values).map(|(w, v)| w * v).sum()
}

fn describe_size(option_counts: &[usize]) -> String {
    format!(
        "{}! x {}",
        option_counts.len(),
        option_counts.iter().map(|k| k.to_string()).join(" x ")
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_cardinality() {
        let space = HypothesisSpace::build(&[3, 3, 4, 4, 5]).unwrap();
        assert_eq!(space.weight_count(), 120);
        assert_eq!(space.combo_count(), 720);
        assert_eq!(space.len(), 86_400);
        for m in 0..5 {
            assert_eq!(space.shapes(m).len(), [3, 3, 4, 4, 5][m]);
        }
    }

    #[test]
    fn toy_cardinalities() {
        let space = HypothesisSpace::build(&[2]).unwrap();
        assert_eq!((space.weight_count(), space.len()), (1, 2));
        let space = HypothesisSpace::build(&[2, 2]).unwrap();
        assert_eq!(space.len(), 8);
    }

    #[test]
    fn capacity_error_names_size() {
        let err = HypothesisSpace::with_budget(&[3, 3, 4, 4, 5], 1000).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("5! x 3 x 3 x 4 x 4 x 5"), "{msg}");
        assert!(HypothesisSpace::build(&[5; 30]).is_err());
    }

    #[test]
    fn weights_follow_rank() {
        let w = WeightHypothesis::from_ranking(vec![3, 0, 4, 1, 2]);
        let expect = [4.0 / 15.0, 2.0 / 15.0, 1.0 / 15.0, 5.0 / 15.0, 3.0 / 15.0];
        for (a, b) in w.weights.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        let space = HypothesisSpace::build(&[3, 3, 4, 4, 5]).unwrap();
        let mut seen = std::collections::HashSet::new();
        for wh in space.weight_hypotheses() {
            assert!((wh.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let key: Vec<u64> = wh.weights.iter().map(|w| w.to_bits()).collect();
            assert!(seen.insert(key));
        }
        assert_eq!(space.weight_hypotheses()[0].ranking, vec![0, 1, 2, 3, 4]);
        assert_eq!(space.weight_hypotheses()[119].ranking, vec![4, 3, 2, 1, 0]);
    }

    #[test]
    fn triangular_shapes() {
        let v = EvalShape::triangular(0, 0, 4).values;
        for (a, b) in v.iter().zip([1.0, 2.0 / 3.0, 1.0 / 3.0, 0.0]) {
            assert!((a - b).abs() < 1e-15, "{v:?}");
        }
        assert_eq!(EvalShape::triangular(0, 1, 3).values, vec![0.0, 1.0, 0.0]);
        assert_eq!(EvalShape::triangular(0, 1, 4).values, vec![0.0, 1.0, 0.5, 0.0]);
        assert_eq!(EvalShape::triangular(0, 4, 5).values, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(EvalShape::triangular(0, 1, 2).values, vec![0.0, 1.0]);
        for k in 2..7 {
            for a in 0..k {
                let s = EvalShape::triangular(0, a, k);
                assert_eq!(s.values[a], 1.0);
                assert_eq!(s.values.iter().cloned().fold(f64::INFINITY, f64::min), 0.0);
            }
        }
    }

    #[test]
    fn index_round_trip() {
        let space = HypothesisSpace::build(&[3, 3, 4, 4, 5]).unwrap();
        for k in (0..space.len()).step_by(97) {
            assert_eq!(space.index_of(&space.hypothesis(k)), k);
        }
        let h = space.hypothesis(721);
        assert_eq!(h.weight_index, 1);
        assert_eq!(h.shape_indices, vec![0, 0, 0, 0, 1]);
    }

    #[test]
    fn apex_deal_scores_one() {
        let space = HypothesisSpace::build(&[3, 3, 4, 4, 5]).unwrap();
        for k in (0..space.len()).step_by(331) {
            let h = space.hypothesis(k);
            let deal = Deal::new(h.shape_indices.clone());
            assert!((space.estimated_utility(k, &deal) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn additive_examples() {
        assert_eq!(additive_utility(&[0.5, 0.5], &[1.0, 0.0]), 0.5);
        let space = HypothesisSpace::build(&[2, 2]).unwrap();
        let h = Hypothesis { weight_index: 0, shape_indices: vec![0, 0] };
        let k = space.index_of(&h);
        let u = space.estimated_utility(k, &Deal::new(vec![0, 1]));
        assert!((u - 2.0 / 3.0).abs() < 1e-15);
    }
}
