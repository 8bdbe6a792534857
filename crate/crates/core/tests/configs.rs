use conic_collapse::scenarios::{builtin, run, ScenarioConfig, BUILTIN_NAMES};
use std::path::PathBuf;

fn config_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn checked_in_configs_match_builtins() {
    for name in BUILTIN_NAMES {
        let path = config_dir().join(format!("{name}.json"));
        let expected = builtin(name).unwrap().to_json();
        if std::env::var_os("UPDATE_GOLDENS").is_some() {
            std::fs::create_dir_all(config_dir()).unwrap();
            std::fs::write(&path, &expected).unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(text, expected, "{}", path.display());
        let parsed = ScenarioConfig::from_json(&text).unwrap();
        assert_eq!(run(&parsed, 5).unwrap().to_json(), run(&builtin(name).unwrap(), 5).unwrap().to_json());
    }
}
