use pradius_web::{analyze_json, landscape_json, moments_json};
use serde_json::Value;

fn problem(name: &str) -> String {
    std::fs::read_to_string(format!("{}/../../problems/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn parse(s: Result<String, String>) -> Value {
    serde_json::from_str(&s.unwrap()).unwrap()
}

#[test]
fn analyze_unstable_pair() {
    let v = parse(analyze_json(&problem("iid-unstable-pair.json"), 0, 6));
    assert_eq!(v["p"], 1);
    assert_eq!(v["upper"].as_array().unwrap().len(), 6);
    assert_eq!(v["verdict"]["status"], "unstable");
    assert!(v["exact"].is_null());
    let best_lower = v["lower"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["value"].as_f64().unwrap())
        .fold(0.0, f64::max);
    assert!(best_lower > 1.0);
}

#[test]
fn analyze_half_identity_has_exact_value() {
    let v = parse(analyze_json(&problem("half-identity.json"), 2, 3));
    assert_eq!(v["p"], 2);
    assert_eq!(v["verdict"]["status"], "stable");
    assert!((v["exact"]["value"].as_f64().unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn landscape_peak_is_the_scalar_bound() {
    let v = parse(landscape_json(&problem("iid-unstable-pair.json"), 41));
    let values = v["values"].as_array().unwrap();
    assert_eq!(values.len(), 41);
    assert_eq!(values[0].as_array().unwrap().len(), 41);
    assert!((v["best"].as_f64().unwrap() - 0.7274).abs() < 1e-3);
    // corner (1, 1) is the plain average
    assert!(values[40][40].as_f64().unwrap() <= v["best"].as_f64().unwrap());
}

#[test]
fn landscape_rejects_bad_input() {
    assert!(landscape_json(&problem("half-identity.json"), 11).is_err());
    assert!(landscape_json(&problem("markov-unstable-pair.json"), 11).is_err());
    assert!(landscape_json(&problem("iid-unstable-pair.json"), 1).is_err());
    assert!(landscape_json("{", 11).unwrap_err().contains("line 1"));
}

#[test]
fn moments_are_reproducible() {
    let text = problem("rotation-group.json");
    let a = parse(moments_json(&text, 0, 8, 100, 7));
    assert_eq!(a, parse(moments_json(&text, 0, 8, 100, 7)));
    assert_eq!(a["ensemble"]["log_moment"].as_array().unwrap().len(), 9);
    assert!((a["rate"]["rate"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!(moments_json(&text, 0, 0, 100, 7).is_err());
}
