use parley_core::scenario::{feasibility, Scenario, ScenarioError};

#[test]
fn bundled_file_loads_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("park.toml");
    std::fs::write(&path, Scenario::harbour_sport_park_source()).unwrap();
    let s = Scenario::load(&path).unwrap();
    assert_eq!(s, Scenario::harbour_sport_park());
    let f = feasibility(&s);
    let full: Vec<String> = f.full_deals.iter().map(|d| s.render_deal(d)).collect();
    assert_eq!(full, ["A2,B2,C1,D2,E3", "A2,B2,C2,D2,E3", "A2,B2,C3,D3,E3"]);
    let sportco: Vec<i64> = f.full_deals.iter().map(|d| s.utility("SportCo", d).unwrap()).collect();
    assert_eq!(sportco, [54, 59, 55]);
}

#[test]
fn missing_and_malformed_files() {
    let err = Scenario::load("/nonexistent/park.toml").unwrap_err();
    assert!(matches!(err, ScenarioError::Io { .. }));
    assert!(err.to_string().contains("/nonexistent/park.toml"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let broken = Scenario::harbour_sport_park_source().replace("min_agree = 5", "min_agree = 9");
    std::fs::write(&path, broken).unwrap();
    assert!(matches!(Scenario::load(&path), Err(ScenarioError::Invalid { .. })));
}
