//! Negotiation game definition: parties, issues, score tables and thresholds.
//!
//! Option indices are 0-based everywhere in memory. Textual I/O (deal strings,
//! prompts, traces, signal targets) uses the 1-based `A1` form, and
//! [`option_label`] / [`parse_option_label`] are the only places that convert.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const HARBOUR_SPORT_PARK: &str = include_str!("../data/harbour_sport_park.toml");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("failed to read scenario {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario schema violation: {0}")]
    Parse(String),
    #[error("invalid scenario field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("party `{party}` issue `{issue}`: score vector has {found} entries, issue has {expected} options")]
    Dimension {
        party: String,
        issue: String,
        found: usize,
        expected: usize,
    },
    #[error("unknown party `{0}`")]
    UnknownParty(String),
    #[error("invalid deal: {0}")]
    InvalidDeal(String),
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

/// How a utility is compared against a reservation threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Satisfaction {
    /// `U >= threshold`.
    #[default]
    AtLeast,
    /// `U > threshold`.
    Exceeds,
}

impl Satisfaction {
    pub fn holds(self, utility: f64, threshold: i64) -> bool {
        match self {
            Satisfaction::AtLeast => utility >= threshold as f64,
            Satisfaction::Exceeds => utility > threshold as f64,
        }
    }

    /// Smallest integer utility that satisfies `threshold`.
    pub fn min_integer_utility(self, threshold: i64) -> i64 {
        match self {
            Satisfaction::AtLeast => threshold,
            Satisfaction::Exceeds => threshold + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub id: String,
    pub name: String,
    pub options: Vec<String>,
}

impl Issue {
    pub fn option_count(&self) -> usize {
        self.options.len()
    }
}

/// Per-issue integer score vectors, in scenario issue order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreTable(Vec<Vec<i64>>);

impl ScoreTable {
    pub fn new(rows: Vec<Vec<i64>>) -> Self {
        ScoreTable(rows)
    }

    pub fn rows(&self) -> &[Vec<i64>] {
        &self.0
    }

    pub fn score(&self, issue: usize, option: usize) -> i64 {
        self.0[issue][option]
    }

    pub fn issue_max(&self, issue: usize) -> i64 {
        self.0[issue].iter().copied().max().unwrap_or(0)
    }

    /// Sum of per-issue maxima: the largest attainable utility.
    pub fn max_total(&self) -> i64 {
        (0..self.0.len()).map(|m| self.issue_max(m)).sum()
    }

    pub fn utility(&self, deal: &Deal) -> i64 {
        deal.choices()
            .iter()
            .zip(&self.0)
            .map(|(&o, row)| row[o])
            .sum()
    }

    pub fn to_f64(&self) -> Vec<Vec<f64>> {
        self.0
            .iter()
            .map(|row| row.iter().map(|&s| s as f64).collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Party {
    pub id: String,
    pub name: String,
    pub veto: bool,
    pub threshold: i64,
    pub scores: ScoreTable,
}

impl Party {
    pub fn utility(&self, deal: &Deal) -> i64 {
        self.scores.utility(deal)
    }
}

/// One option index per issue.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Deal(Vec<usize>);

impl Deal {
    pub fn new(choices: Vec<usize>) -> Self {
        Deal(choices)
    }

    pub fn choices(&self) -> &[usize] {
        &self.0
    }

    /// `A1,B3,...` rendering against the given issue list.
    pub fn render(&self, issues: &[Issue]) -> String {
        self.0
            .iter()
            .zip(issues)
            .map(|(&o, issue)| option_label(&issue.id, o))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// `("A", 0)` → `"A1"`.
pub fn option_label(issue_id: &str, option: usize) -> String {
    format!("{issue_id}{}", option + 1)
}

/// `"A1"` → `("A", 0)`. Returns `None` when there is no trailing 1-based number.
pub fn parse_option_label(label: &str) -> Option<(&str, usize)> {
    let label = label.trim();
    let split = label
        .char_indices()
        .rev()
        .take_while(|(_, c)| c.is_ascii_digit())
        .last()
        .map(|(i, _)| i)?;
    let (issue, number) = label.split_at(split);
    if issue.is_empty() {
        return None;
    }
    let number: usize = number.parse().ok()?;
    if number == 0 {
        return None;
    }
    Some((issue, number - 1))
}

/// Parses `A1,B3,...` against `issues`; issues may appear in any order but each exactly once.
pub fn parse_deal(issues: &[Issue], text: &str) -> Result<Deal, ScenarioError> {
    let mut choices = vec![None; issues.len()];
    for token in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let (issue_id, option) = parse_option_label(token)
            .ok_or_else(|| ScenarioError::InvalidDeal(format!("malformed option `{token}`")))?;
        let m = issues
            .iter()
            .position(|i| i.id == issue_id)
            .ok_or_else(|| ScenarioError::InvalidDeal(format!("unknown issue in `{token}`")))?;
        if option >= issues[m].option_count() {
            return Err(ScenarioError::InvalidDeal(format!(
                "issue {issue_id} has no option {}",
                option + 1
            )));
        }
        if choices[m].replace(option).is_some() {
            return Err(ScenarioError::InvalidDeal(format!(
                "issue {issue_id} chosen twice"
            )));
        }
    }
    let choices = choices
        .into_iter()
        .zip(issues)
        .map(|(c, issue)| {
            c.ok_or_else(|| ScenarioError::InvalidDeal(format!("no option for issue {}", issue.id)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Deal(choices))
}

/// Satisfaction outcome of a deal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementLevel {
    pub satisfied: Vec<bool>,
    pub satisfied_count: usize,
    pub vetoes_satisfied: bool,
    pub min_agree: usize,
}

impl AgreementLevel {
    pub fn is_full(&self) -> bool {
        self.satisfied_count == self.satisfied.len()
    }

    /// At least `min_agree` parties including every veto holder.
    pub fn is_partial(&self) -> bool {
        self.vetoes_satisfied && self.satisfied_count >= self.min_agree
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub parties: Vec<Party>,
    pub issues: Vec<Issue>,
    pub rounds: u32,
    pub min_agree: usize,
    pub satisfaction: Satisfaction,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    name: Option<String>,
    parties: Vec<RawParty>,
    issues: Vec<Issue>,
    rounds: u32,
    min_agree: usize,
    #[serde(default)]
    satisfaction: Satisfaction,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParty {
    id: String,
    name: String,
    veto: bool,
    threshold: i64,
    scores: BTreeMap<String, Vec<i64>>,
}

/// Parses and validates a TOML scenario document.
pub fn load_scenario(source: &str) -> Result<Scenario, ScenarioError> {
    let raw: RawScenario =
        toml::from_str(source).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    Scenario::from_raw(raw)
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        load_scenario(&text)
    }

    /// The bundled six-party Harbour Sport Park instance.
    pub fn harbour_sport_park() -> Scenario {
        load_scenario(HARBOUR_SPORT_PARK).expect("bundled scenario is valid")
    }

    pub fn harbour_sport_park_source() -> &'static str {
        HARBOUR_SPORT_PARK
    }

    fn from_raw(raw: RawScenario) -> Result<Scenario, ScenarioError> {
        if raw.parties.len() < 2 {
            return Err(invalid("parties", "at least two parties are required"));
        }
        if raw.issues.is_empty() {
            return Err(invalid("issues", "at least one issue is required"));
        }
        if raw.rounds == 0 {
            return Err(invalid("rounds", "must be positive"));
        }
        if raw.min_agree == 0 || raw.min_agree > raw.parties.len() {
            return Err(invalid(
                "min_agree",
                format!("must lie in 1..={}", raw.parties.len()),
            ));
        }

        let mut seen = HashSet::new();
        for (m, issue) in raw.issues.iter().enumerate() {
            let field = format!("issues[{m}].id");
            if issue.id.is_empty()
                || issue.id.ends_with(|c: char| c.is_ascii_digit())
                || issue.id.contains(|c: char| c == ',' || c.is_whitespace())
            {
                return Err(invalid(
                    field,
                    format!("`{}` must be non-empty, free of commas and whitespace, and not end in a digit", issue.id),
                ));
            }
            if !seen.insert(issue.id.as_str()) {
                return Err(invalid(field, format!("duplicate issue id `{}`", issue.id)));
            }
            if issue.options.len() < 2 {
                return Err(invalid(
                    format!("issues[{m}].options"),
                    "an issue needs at least two options",
                ));
            }
            let mut labels = HashSet::new();
            for label in &issue.options {
                if !labels.insert(label.as_str()) {
                    return Err(invalid(
                        format!("issues[{m}].options"),
                        format!("duplicate option label `{label}`"),
                    ));
                }
            }
        }

        let mut party_ids = HashSet::new();
        let mut parties = Vec::with_capacity(raw.parties.len());
        for (n, rp) in raw.parties.into_iter().enumerate() {
            if rp.id.is_empty() {
                return Err(invalid(format!("parties[{n}].id"), "must be non-empty"));
            }
            if !party_ids.insert(rp.id.clone()) {
                return Err(invalid(
                    format!("parties[{n}].id"),
                    format!("duplicate party id `{}`", rp.id),
                ));
            }
            if let Some(extra) = rp
                .scores
                .keys()
                .find(|k| !raw.issues.iter().any(|i| &i.id == *k))
            {
                return Err(invalid(
                    format!("parties[{n}].scores.{extra}"),
                    "no such issue",
                ));
            }
            let mut rows = Vec::with_capacity(raw.issues.len());
            for issue in &raw.issues {
                let row = rp.scores.get(&issue.id).ok_or_else(|| {
                    invalid(
                        format!("parties[{n}].scores.{}", issue.id),
                        "missing score vector",
                    )
                })?;
                if row.len() != issue.options.len() {
                    return Err(ScenarioError::Dimension {
                        party: rp.id.clone(),
                        issue: issue.id.clone(),
                        found: row.len(),
                        expected: issue.options.len(),
                    });
                }
                if row.iter().any(|&s| s < 0) {
                    return Err(invalid(
                        format!("parties[{n}].scores.{}", issue.id),
                        "scores must be non-negative",
                    ));
                }
                rows.push(row.clone());
            }
            parties.push(Party {
                id: rp.id,
                name: rp.name,
                veto: rp.veto,
                threshold: rp.threshold,
                scores: ScoreTable(rows),
            });
        }

        Ok(Scenario {
            name: raw.name.unwrap_or_else(|| "unnamed".to_string()),
            parties,
            issues: raw.issues,
            rounds: raw.rounds,
            min_agree: raw.min_agree,
            satisfaction: raw.satisfaction,
        })
    }

    pub fn option_counts(&self) -> Vec<usize> {
        self.issues.iter().map(Issue::option_count).collect()
    }

    pub fn deal_count(&self) -> usize {
        self.issues.iter().map(Issue::option_count).product()
    }

    pub fn party_index(&self, id: &str) -> Option<usize> {
        self.parties.iter().position(|p| p.id == id)
    }

    pub fn party(&self, id: &str) -> Result<&Party, ScenarioError> {
        self.parties
            .iter()
            .find(|p| p.id == id)
            .ok_or_else(|| ScenarioError::UnknownParty(id.to_string()))
    }

    pub fn issue_index(&self, id: &str) -> Option<usize> {
        self.issues.iter().position(|i| i.id == id)
    }

    pub fn validate_deal(&self, deal: &Deal) -> Result<(), ScenarioError> {
        if deal.choices().len() != self.issues.len() {
            return Err(ScenarioError::InvalidDeal(format!(
                "expected {} choices, got {}",
                self.issues.len(),
                deal.choices().len()
            )));
        }
        for (&o, issue) in deal.choices().iter().zip(&self.issues) {
            if o >= issue.option_count() {
                return Err(ScenarioError::InvalidDeal(format!(
                    "issue {} has no option {}",
                    issue.id,
                    o + 1
                )));
            }
        }
        Ok(())
    }

    pub fn parse_deal(&self, text: &str) -> Result<Deal, ScenarioError> {
        parse_deal(&self.issues, text)
    }

    pub fn render_deal(&self, deal: &Deal) -> String {
        deal.render(&self.issues)
    }

    /// Utility of `deal` for the party with id `party`.
    pub fn utility(&self, party: &str, deal: &Deal) -> Result<i64, ScenarioError> {
        self.validate_deal(deal)?;
        Ok(self.party(party)?.utility(deal))
    }

    pub fn agreement_level(&self, deal: &Deal) -> AgreementLevel {
        let satisfied: Vec<bool> = self
            .parties
            .iter()
            .map(|p| self.satisfaction.holds(p.utility(deal) as f64, p.threshold))
            .collect();
        let satisfied_count = satisfied.iter().filter(|&&s| s).count();
        let vetoes_satisfied = self
            .parties
            .iter()
            .zip(&satisfied)
            .all(|(p, &s)| !p.veto || s);
        AgreementLevel {
            satisfied,
            satisfied_count,
            vetoes_satisfied,
            min_agree: self.min_agree,
        }
    }

    /// Every deal exactly once, first issue most significant.
    pub fn enumerate_deals(&self) -> DealIter {
        DealIter {
            radix: self.option_counts(),
            next: Some(vec![0; self.issues.len()]),
        }
    }

    /// Position of `deal` in [`Scenario::enumerate_deals`] order.
    pub fn deal_index(&self, deal: &Deal) -> usize {
        deal.choices()
            .iter()
            .zip(&self.issues)
            .fold(0, |acc, (&o, issue)| acc * issue.option_count() + o)
    }

    pub fn public_view(&self) -> PublicScenario {
        PublicScenario {
            name: self.name.clone(),
            issues: self.issues.clone(),
            parties: self
                .parties
                .iter()
                .map(|p| PublicParty {
                    id: p.id.clone(),
                    name: p.name.clone(),
                    veto: p.veto,
                    threshold: p.threshold,
                })
                .collect(),
            rounds: self.rounds,
            min_agree: self.min_agree,
            satisfaction: self.satisfaction,
        }
    }
}

/// Odometer over the mixed-radix option space.
pub struct DealIter {
    radix: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Iterator for DealIter {
    type Item = Deal;

    fn next(&mut self) -> Option<Deal> {
        let current = self.next.take()?;
        let mut successor = current.clone();
        let mut carried_out = true;
        for m in (0..successor.len()).rev() {
            successor[m] += 1;
            if successor[m] < self.radix[m] {
                carried_out = false;
                break;
            }
            successor[m] = 0;
        }
        if !carried_out {
            self.next = Some(successor);
        }
        Some(Deal(current))
    }
}

/// What every participant may see: everything except score tables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicParty {
    pub id: String,
    pub name: String,
    pub veto: bool,
    pub threshold: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicScenario {
    pub name: String,
    pub issues: Vec<Issue>,
    pub parties: Vec<PublicParty>,
    pub rounds: u32,
    pub min_agree: usize,
    pub satisfaction: Satisfaction,
}

impl PublicScenario {
    pub fn party_index(&self, id: &str) -> Option<usize> {
        self.parties.iter().position(|p| p.id == id)
    }

    pub fn option_counts(&self) -> Vec<usize> {
        self.issues.iter().map(Issue::option_count).collect()
    }

    pub fn render_deal(&self, deal: &Deal) -> String {
        deal.render(&self.issues)
    }

    pub fn parse_deal(&self, text: &str) -> Result<Deal, ScenarioError> {
        parse_deal(&self.issues, text)
    }

    pub fn enumerate_deals(&self) -> DealIter {
        DealIter {
            radix: self.option_counts(),
            next: Some(vec![0; self.issues.len()]),
        }
    }
}

impl fmt::Display for Satisfaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Satisfaction::AtLeast => f.write_str(">="),
            Satisfaction::Exceeds => f.write_str(">"),
        }
    }
}

/// Counts over the whole deal space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibilitySummary {
    pub deal_count: usize,
    pub partial_feasible: usize,
    pub full_feasible: usize,
    pub full_deals: Vec<Deal>,
}

pub fn feasibility(scenario: &Scenario) -> FeasibilitySummary {
    let mut summary = FeasibilitySummary {
        deal_count: 0,
        partial_feasible: 0,
        full_feasible: 0,
        full_deals: Vec::new(),
    };
    for deal in scenario.enumerate_deals() {
        summary.deal_count += 1;
        let level = scenario.agreement_level(&deal);
        if level.is_partial() {
            summary.partial_feasible += 1;
        }
        if level.is_full() {
            summary.full_feasible += 1;
            summary.full_deals.push(deal);
        }
    }
    summary
}
