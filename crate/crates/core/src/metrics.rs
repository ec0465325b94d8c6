//! Agreement rates and estimation error over a batch of trials.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::TrialResult;
use crate::model::EstimateTable;
use crate::scenario::{Scenario, ScoreTable};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no trial results to aggregate")]
    Empty,
    #[error("estimate shape {found:?} does not match truth shape {expected:?}")]
    Shape { expected: Vec<usize>, found: Vec<usize> },
}

/// A binomial rate with its standard error `sqrt(p(1-p)/n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub hits: usize,
    pub rate: f64,
    pub std: f64,
}

impl Rate {
    pub fn new(hits: usize, n: usize) -> Self {
        let p = hits as f64 / n as f64;
        Rate {
            hits,
            rate: p,
            std: (p * (1.0 - p) / n as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseSummary {
    pub observer: String,
    /// Mean over trials, per opponent.
    pub per_opponent: BTreeMap<String, f64>,
    /// Mean of the per-opponent values.
    pub average: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub trials: usize,
    pub aborted: usize,
    pub far: Rate,
    pub par: Rate,
    pub lar: Rate,
    pub mse: Option<MseSummary>,
    pub fingerprint: String,
}

/// Mean squared difference over all (issue, option) cells.
pub fn score_mse(estimate: &EstimateTable, truth: &ScoreTable) -> Result<f64, MetricsError> {
    let expected: Vec<usize> = truth.rows().iter().map(Vec::len).collect();
    let found: Vec<usize> = estimate.rows().iter().map(Vec::len).collect();
    if expected != found {
        return Err(MetricsError::Shape { expected, found });
    }
    let mut sum = 0.0;
    let mut cells = 0usize;
    for (er, tr) in estimate.rows().iter().zip(truth.rows()) {
        for (e, &t) in er.iter().zip(tr) {
            sum += (e - t as f64).powi(2);
            cells += 1;
        }
    }
    Ok(if cells == 0 { 0.0 } else { sum / cells as f64 })
}

pub fn aggregate(results: &[TrialResult]) -> Result<MetricsReport, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = results.len();
    let count = |f: fn(&TrialResult) -> bool| results.iter().filter(|r| f(r)).count();
    Ok(MetricsReport {
        trials: n,
        aborted: count(|r| r.aborted.is_some()),
        far: Rate::new(count(|r| r.full_agreement), n),
        par: Rate::new(count(|r| r.partial_agreement), n),
        lar: Rate::new(count(|r| r.latent_hit), n),
        mse: None,
        fingerprint: String::new(),
    })
}

/// Final-estimate MSE of `observer` against every opponent's truth; `None`
/// when the observer kept no beliefs in any trial.
pub fn mse_summary(results: &[TrialResult], scenario: &Scenario, observer: &str) -> Result<Option<MseSummary>, MetricsError> {
    let mut per_opponent = BTreeMap::new();
    let mut used = 0;
    for r in results {
        let mut any = false;
        for p in scenario.parties.iter().filter(|p| p.id != observer) {
            if let Some(est) = r.final_estimate(observer, &p.id) {
                let e = score_mse(est, &p.scores)?;
                let slot: &mut (f64, usize) = per_opponent.entry(p.id.clone()).or_default();
                slot.0 += e;
                slot.1 += 1;
                any = true;
            }
        }
        used += usize::from(any);
    }
    if per_opponent.is_empty() {
        return Ok(None);
    }
    let per_opponent: BTreeMap<String, f64> = per_opponent
        .into_iter()
        .map(|(k, (sum, c))| (k, sum / c as f64))
        .collect();
    let average = per_opponent.values().sum::<f64>() / per_opponent.len() as f64;
    Ok(Some(MseSummary {
        observer: observer.to_string(),
        per_opponent,
        average,
        trials: used,
    }))
}

/// Average MSE of `observer`'s latest estimate at or before each round,
/// as `round,<opponent...>,average` CSV.
pub fn mse_trajectory_csv(results: &[TrialResult], scenario: &Scenario, observer: &str) -> Result<String, MetricsError> {
    let opponents: Vec<_> = scenario.parties.iter().filter(|p| p.id != observer).collect();
    let mut out = String::from("round");
    for p in &opponents {
        out.push(',');
        out.push_str(&p.id);
    }
    out.push_str(",average\n");
    for round in 0..=scenario.rounds {
        let mut cols = Vec::with_capacity(opponents.len());
        for p in &opponents {
            let mut sum = 0.0;
            let mut c = 0usize;
            for r in results {
                let latest = r
                    .trace(observer, &p.id)
                    .and_then(|t| t.snapshots.iter().rev().find(|s| s.round <= round));
                if let Some(s) = latest {
                    sum += score_mse(&s.estimate, &p.scores)?;
                    c += 1;
                }
            }
            cols.push((c > 0).then(|| sum / c as f64));
        }
        let present: Vec<f64> = cols.iter().flatten().copied().collect();
        if present.is_empty() {
            continue;
        }
        let _ = write!(out, "{round}");
        for c in &cols {
            match c {
                Some(v) => {
                    let _ = write!(out, ",{v:.4}");
                }
                None => out.push(','),
            }
        }
        let avg = present.iter().sum::<f64>() / present.len() as f64;
        let _ = writeln!(out, ",{avg:.4}");
    }
    Ok(out)
}

impl MetricsReport {
    /// Aligned human-readable table.
    pub fn render_text(&self, title: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{title}");
        let _ = writeln!(out, "trials: {}  aborted: {}  fingerprint: {}", self.trials, self.aborted, self.fingerprint);
        let _ = writeln!(out, "{:<8}{:>8}{:>8}{:>8}", "metric", "rate", "std", "hits");
        for (name, r) in [("FAR", self.far), ("PAR", self.par), ("LAR", self.lar)] {
            let _ = writeln!(out, "{:<8}{:>8.3}{:>8.3}{:>8}", name, r.rate, r.std, r.hits);
        }
        if let Some(m) = &self.mse {
            let _ = writeln!(out, "MSE (observer {}, {} trials)", m.observer, m.trials);
            for (k, v) in &m.per_opponent {
                let _ = writeln!(out, "  {:<10}{:>10.2}", k, v);
            }
            let _ = writeln!(out, "  {:<10}{:>10.2}", "average", m.average);
        }
        out
    }
}
