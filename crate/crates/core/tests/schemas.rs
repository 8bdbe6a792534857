use conic_collapse::scenarios::{builtin, monte_carlo, run, BUILTIN_NAMES};
use serde_json::{Map, Value};
use std::collections::BTreeSet;
use std::path::PathBuf;

fn schema(name: &str) -> Value {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("../../docs/schemas/{name}.schema.json"));
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

fn keys(map: &Map<String, Value>) -> BTreeSet<String> {
    map.keys().cloned().collect()
}

fn names(v: &Value) -> BTreeSet<String> {
    v.as_array().unwrap().iter().map(|s| s.as_str().unwrap().to_owned()).collect()
}

/// Every emitted key is declared and every required key is emitted.
fn check_top_level(schema: &Value, doc: &Value, what: &str) {
    let declared = keys(schema["properties"].as_object().unwrap());
    let required = names(&schema["required"]);
    let present = keys(doc.as_object().unwrap());
    assert!(present.is_subset(&declared), "{what}: undeclared {:?}", &present - &declared);
    assert!(required.is_subset(&present), "{what}: missing {:?}", &required - &present);
    assert_eq!(schema["properties"]["schema_version"]["const"], doc["schema_version"], "{what}");
}

#[test]
fn config_schema_covers_builtins() {
    let s = schema("config");
    for name in BUILTIN_NAMES {
        let doc: Value = serde_json::from_str(&builtin(name).unwrap().to_json()).unwrap();
        check_top_level(&s, &doc, name);
        let grid = keys(s["properties"]["grid"]["properties"].as_object().unwrap());
        assert_eq!(grid, keys(doc["grid"].as_object().unwrap()));
    }
}

#[test]
fn trace_schema_covers_every_scenario() {
    let s = schema("trace");
    for name in BUILTIN_NAMES {
        let doc: Value = serde_json::from_str(&run(&builtin(name).unwrap(), 4).unwrap().to_json()).unwrap();
        check_top_level(&s, &doc, name);
        let reduction = &s["$defs"]["reduction"];
        for r in doc["reductions"].as_array().unwrap() {
            let present = keys(r.as_object().unwrap());
            assert!(present.is_subset(&keys(reduction["properties"].as_object().unwrap())), "{present:?}");
            assert!(names(&reduction["required"]).is_subset(&present));
        }
    }
}

#[test]
fn stats_schema_covers_reports() {
    let s = schema("stats");
    for name in BUILTIN_NAMES {
        let report = monte_carlo(&builtin(name).unwrap(), 20, 0).unwrap();
        let doc: Value = serde_json::from_str(&report.to_json()).unwrap();
        check_top_level(&s, &doc, name);
    }
}
