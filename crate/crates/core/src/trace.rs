//! Line-delimited JSON trial traces and the belief inspector built on them.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{BeliefSnapshot, TrialResult};
use crate::scenario::Scenario;
use crate::signals::Signal;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("trace has no header record")]
    MissingHeader,
    #[error("round {round} outside 0..={rounds}")]
    RoundOutOfRange { round: u32, rounds: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefSummary {
    pub observer: String,
    pub opponent: String,
    pub map: String,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceRecord {
    Header {
        trial: usize,
        seed: u64,
        method: String,
        scenario: String,
        rounds: u32,
        issues: Vec<String>,
        fingerprint: String,
    },
    Round {
        round: u32,
        speaker: String,
        deal: String,
        utterance: String,
        signals: Vec<Signal>,
        rejected: Vec<String>,
        beliefs: Vec<BeliefSummary>,
    },
    Belief {
        observer: String,
        opponent: String,
        snapshot: BeliefSnapshot,
    },
    Outcome {
        final_deal: Option<String>,
        satisfied_count: usize,
        vetoes_satisfied: bool,
        full_agreement: bool,
        partial_agreement: bool,
        latent_hit: bool,
        aborted: Option<String>,
    },
}

pub struct TraceMeta<'a> {
    pub trial: usize,
    pub method: &'a str,
    pub fingerprint: &'a str,
}

pub fn trace_records(scenario: &Scenario, result: &TrialResult, meta: &TraceMeta<'_>) -> Vec<TraceRecord> {
    let mut out = vec![TraceRecord::Header {
        trial: meta.trial,
        seed: result.seed,
        method: meta.method.to_string(),
        scenario: scenario.name.clone(),
        rounds: scenario.rounds,
        issues: scenario.issues.iter().map(|i| i.id.clone()).collect(),
        fingerprint: meta.fingerprint.to_string(),
    }];
    let beliefs_at = |round: u32| {
        let mut recs = Vec::new();
        for t in &result.beliefs {
            for s in t.snapshots.iter().filter(|s| s.round == round) {
                recs.push(TraceRecord::Belief {
                    observer: t.observer.clone(),
                    opponent: t.opponent.clone(),
                    snapshot: s.clone(),
                });
            }
        }
        recs
    };
    out.extend(beliefs_at(0));
    for r in &result.history {
        let updates = beliefs_at(r.round);
        let beliefs = updates
            .iter()
            .map(|rec| match rec {
                TraceRecord::Belief { observer, opponent, snapshot } => BeliefSummary {
                    observer: observer.clone(),
                    opponent: opponent.clone(),
                    map: snapshot.top.first().map(|h| h.label.clone()).unwrap_or_default(),
                    entropy: snapshot.entropy,
                },
                _ => unreachable!("beliefs_at yields belief records"),
            })
            .collect();
        out.push(TraceRecord::Round {
            round: r.round,
            speaker: r.speaker.clone(),
            deal: r.deal_text.clone(),
            utterance: r.utterance.clone(),
            signals: r.signals.clone(),
            rejected: r.rejected.clone(),
            beliefs,
        });
        out.extend(updates);
    }
    out.push(TraceRecord::Outcome {
        final_deal: result.final_deal.as_ref().map(|d| scenario.render_deal(d)),
        satisfied_count: result.satisfied_count,
        vetoes_satisfied: result.vetoes_satisfied,
        full_agreement: result.full_agreement,
        partial_agreement: result.partial_agreement,
        latent_hit: result.latent_hit,
        aborted: result.aborted.clone(),
    });
    out
}

pub fn write_trace(path: &Path, records: &[TraceRecord]) -> Result<(), TraceError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>, TraceError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| TraceError::Parse { line: i + 1, source })?);
    }
    Ok(out)
}

/// Beliefs as they stood after `round`, one entry per (observer, opponent).
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefView {
    pub round: u32,
    pub issues: Vec<String>,
    pub beliefs: Vec<(String, String, BeliefSnapshot)>,
}

pub fn beliefs_at(records: &[TraceRecord], round: u32) -> Result<BeliefView, TraceError> {
    let (rounds, issues) = records
        .iter()
        .find_map(|r| match r {
            TraceRecord::Header { rounds, issues, .. } => Some((*rounds, issues.clone())),
            _ => None,
        })
        .ok_or(TraceError::MissingHeader)?;
    if round > rounds {
        return Err(TraceError::RoundOutOfRange { round, rounds });
    }
    let mut beliefs: Vec<(String, String, BeliefSnapshot)> = Vec::new();
    for r in records {
        let TraceRecord::Belief { observer, opponent, snapshot } = r else {
            continue;
        };
        if snapshot.round > round {
            continue;
        }
        match beliefs.iter_mut().find(|(o, p, _)| o == observer && p == opponent) {
            Some(slot) if slot.2.round <= snapshot.round => slot.2 = snapshot.clone(),
            Some(_) => {}
            None => beliefs.push((observer.clone(), opponent.clone(), snapshot.clone())),
        }
    }
    Ok(BeliefView { round, issues, beliefs })
}

pub fn render_beliefs(view: &BeliefView) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "beliefs after round {}", view.round);
    if view.beliefs.is_empty() {
        out.push_str("(no beliefs recorded)\n");
    }
    for (observer, opponent, s) in &view.beliefs {
        let _ = writeln!(
            out,
            "\n{observer} about {opponent} (updated round {}): entropy {:.4} nats",
            s.round, s.entropy
        );
        for (rank, h) in s.top.iter().enumerate() {
            let _ = writeln!(out, "  {:>2}. p={:.6}  #{:<6} {}", rank + 1, h.prob, h.index, h.label);
        }
        let _ = writeln!(out, "  estimated scores:");
        for (id, row) in view.issues.iter().zip(s.estimate.rows()) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:6.2}")).collect();
            let _ = writeln!(out, "    {id}: {}", cells.join(" "));
        }
    }
    out
}
