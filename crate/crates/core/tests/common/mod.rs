//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use parley_core::scenario::Scenario;
use parley_core::signals::{
    build_extraction_request, extraction_payload, negotiation_rules, parse_extraction_response, Extraction,
    ExtractError, Utterance, SIGNAL_PROMPT_VERSION,
};
use parley_core::chat::ChatCompletion;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractionFixture {
    pub name: String,
    pub prompt_version: String,
    pub model: String,
    pub history: Vec<Utterance>,
    pub request: Value,
    pub response: String,
    pub expected: Value,
}

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn extraction_fixtures() -> Vec<(PathBuf, ExtractionFixture)> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(fixture_dir())
        .expect("fixtures directory")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("extraction_") && n.ends_with(".json"))
        })
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p).expect("read fixture");
            let f: ExtractionFixture = serde_json::from_str(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            (p, f)
        })
        .collect()
}

pub fn fixture_request(f: &ExtractionFixture) -> Value {
    let public = Scenario::harbour_sport_park().public_view();
    let req = build_extraction_request(&f.model, &negotiation_rules(&public), &f.history, &public.parties);
    serde_json::to_value(req).expect("request serializes")
}

pub fn fixture_parse(f: &ExtractionFixture) -> Result<Extraction, ExtractError> {
    let public = Scenario::harbour_sport_park().public_view();
    let completion = ChatCompletion::parse(&f.response)?;
    parse_extraction_response(extraction_payload(&completion)?, &f.history, &public.parties)
}

pub fn extraction_json(ex: &Extraction) -> Value {
    serde_json::json!({ "signals": ex.signals, "dropped_agents": ex.dropped_agents })
}

/// Checks one fixture; `Err` carries a readable mismatch.
pub fn check_fixture(f: &ExtractionFixture) -> Result<(), String> {
    if f.prompt_version != SIGNAL_PROMPT_VERSION {
        return Err(format!("{}: prompt version {} != {}", f.name, f.prompt_version, SIGNAL_PROMPT_VERSION));
    }
    if fixture_request(f) != f.request {
        return Err(format!("{}: request drifted from the recorded one", f.name));
    }
    let parsed = fixture_parse(f);
    match (&parsed, f.expected.get("error").and_then(Value::as_str)) {
        (Err(ExtractError::Unparseable { .. }), Some("unparseable")) | (Err(ExtractError::Empty { .. }), Some("empty")) => Ok(()),
        (Ok(ex), None) => {
            let got = extraction_json(ex);
            if serde_json::to_string(&got).unwrap() == serde_json::to_string(&f.expected).unwrap() {
                Ok(())
            } else {
                Err(format!("{}: parsed {got} expected {}", f.name, f.expected))
            }
        }
        _ => Err(format!("{}: parse gave {parsed:?}, expected {}", f.name, f.expected)),
    }
}
