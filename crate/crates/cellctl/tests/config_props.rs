mod common;

use cellctl::config::parse_descriptor;
use common::{default_path, error_paths, fixture, random_descriptor, FIXTURES};
use proptest::prelude::*;
use serde_json::Value;

#[test]
fn every_fixture_fails_at_its_path() {
    for (file, path) in FIXTURES {
        assert_eq!(error_paths(&fixture(file)), vec![path.to_string()], "{file}");
    }
}

#[test]
fn fixtures_differ_from_default_in_one_place() {
    // Guards the fixtures themselves: each is the shipped descriptor with
    // a single edit.
    let base: Value = serde_json::from_str(&std::fs::read_to_string(default_path()).unwrap()).unwrap();
    fn diffs(a: &Value, b: &Value) -> usize {
        match (a, b) {
            (Value::Object(x), Value::Object(y)) => {
                let keys: std::collections::BTreeSet<_> = x.keys().chain(y.keys()).collect();
                keys.into_iter()
                    .map(|k| match (x.get(k), y.get(k)) {
                        (Some(p), Some(q)) => diffs(p, q),
                        _ => 1,
                    })
                    .sum()
            }
            (Value::Array(x), Value::Array(y)) if x.len() == y.len() => {
                x.iter().zip(y).map(|(p, q)| diffs(p, q)).sum()
            }
            _ => usize::from(a != b),
        }
    }
    for (file, _) in FIXTURES {
        let v: Value = serde_json::from_str(&std::fs::read_to_string(fixture(file)).unwrap()).unwrap();
        assert_eq!(diffs(&base, &v), 1, "{file}");
    }
}

#[test]
fn canonical_form_ignores_input_layout() {
    let text = std::fs::read_to_string(default_path()).unwrap();
    let compact = serde_json::to_string(&serde_json::from_str::<Value>(&text).unwrap()).unwrap();
    let crlf = text.replace('\n', "\r\n");
    for variant in [compact, crlf] {
        assert_eq!(parse_descriptor(&variant).unwrap().to_canonical_string(), text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn parse_serialize_identity(seed in any::<u64>()) {
        let d = random_descriptor(seed);
        prop_assert!(d.validate().is_ok(), "{}", d.validate());
        let text = d.to_canonical_string();
        let back = parse_descriptor(&text).unwrap();
        prop_assert_eq!(&back, &d);
        prop_assert_eq!(back.to_canonical_string(), text);
    }
}
