//! Every shipped config file parses and passes the semantic checks.

use std::path::Path;

use iqnet::experiments::{ExperimentConfig, ExperimentKind};

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut kinds = Vec::new();
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ExperimentConfig::parse_file(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            kinds.push(cfg.kind);
        }
    }
    for kind in ExperimentKind::ALL {
        assert!(kinds.contains(&kind), "no shipped config for {}", kind.name());
    }
}
