//! The published JSON schema agrees with the config parser.

use std::path::{Path, PathBuf};

use proptest::prelude::*;
use serde_json::{json, Value};

use phjb_cli::config::parse;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn validator() -> jsonschema::Validator {
    let text = std::fs::read_to_string(root().join("config.schema.json")).unwrap();
    let schema: Value = serde_json::from_str(&text).unwrap();
    jsonschema::validator_for(&schema).expect("schema compiles")
}

fn example_configs() -> Vec<(String, Value)> {
    let mut out: Vec<(String, Value)> = std::fs::read_dir(root().join("configs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .map(|p| {
            let v = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
            (p.file_name().unwrap().to_string_lossy().into_owned(), v)
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

#[test]
fn schema_is_versioned() {
    let text = std::fs::read_to_string(root().join("config.schema.json")).unwrap();
    let schema: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(schema["properties"]["version"]["const"], 1);
    assert!(schema["required"].as_array().unwrap().contains(&json!("version")));
}

#[test]
fn example_configs_validate_and_parse() {
    let v = validator();
    let configs = example_configs();
    assert_eq!(configs.len(), 10);
    for (name, cfg) in configs {
        let errors: Vec<String> = v.iter_errors(&cfg).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{name}: {errors:?}");
        parse(&cfg.to_string()).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn resolved_configs_validate() {
    // The resolved form spells out every default; it must still be valid input.
    let v = validator();
    for (name, cfg) in example_configs() {
        let loaded = parse(&cfg.to_string()).unwrap();
        let resolved = serde_json::to_value(&loaded.config).unwrap();
        let errors: Vec<String> = v.iter_errors(&resolved).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{name}: {errors:?}");
        let again = parse(&resolved.to_string()).unwrap();
        assert_eq!(again.config, loaded.config, "{name}");
    }
}

#[test]
fn schema_rejects_what_the_parser_rejects() {
    let v = validator();
    let base = example_configs().into_iter().find(|c| c.0 == "value.json").unwrap().1;
    type Mutation = Box<dyn Fn(&mut Value)>;
    let mutations: Vec<Mutation> = vec![
        Box::new(|c| c["surprise"] = json!(1)),
        Box::new(|c| c["task"]["op"] = json!("no-such-op")),
        Box::new(|c| c["model"]["preset"] = json!("no-such-model")),
        Box::new(|c| c["numerics"]["n_paths"] = json!(-3)),
        Box::new(|c| c["version"] = json!(2)),
    ];
    for (k, m) in mutations.iter().enumerate() {
        let mut c = base.clone();
        m(&mut c);
        assert!(!v.is_valid(&c), "mutation {k} passes the schema");
        assert!(parse(&c.to_string()).is_err(), "mutation {k} passes the parser");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dt_must_divide_the_horizon(steps in 1u32..400, jitter in 1e-6f64..0.4) {
        let mut c = example_configs().into_iter().find(|c| c.0 == "hjb-residual.json").unwrap().1;
        let good = 1.0 / steps as f64;
        c["numerics"]["dt"] = json!(good);
        // Grid-dependent task fields may still object; the grid itself must not.
        if let Err(e) = parse(&c.to_string()) {
            prop_assert_ne!(e.pointer.as_str(), "/numerics/dt");
        }
        c["numerics"]["dt"] = json!(good * (1.0 + jitter));
        let e = parse(&c.to_string()).err().expect("off-grid dt is rejected");
        prop_assert_eq!(e.pointer.as_str(), "/numerics/dt");
    }

    #[test]
    fn seed_round_trips(seed in any::<u64>()) {
        let mut c = example_configs().into_iter().find(|c| c.0 == "simulate.json").unwrap().1;
        c["numerics"]["seed"] = json!(seed);
        let loaded = parse(&c.to_string()).unwrap();
        prop_assert_eq!(loaded.config.numerics.seed, seed);
    }
}
