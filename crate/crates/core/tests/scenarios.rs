use std::path::Path;

use softdp::harness::builtin;
use softdp::model::{validate_scenario, Protocol, ScenarioSpec};

fn shipped() -> Vec<(String, ScenarioSpec)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .map(|p| {
            let text = std::fs::read_to_string(&p).unwrap();
            let spec = ScenarioSpec::from_toml_str(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            (p.file_stem().unwrap().to_string_lossy().into_owned(), spec)
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

#[test]
fn shipped_files_validate_and_match_builtins() {
    let files = shipped();
    assert!(files.len() >= 9);
    for (stem, spec) in files {
        assert_eq!(validate_scenario(&spec), vec![], "{stem}");
        let name = stem.replace("chain_", "chain:").replace("mesh_", "mesh:");
        assert_eq!(builtin::by_name(&name, spec.protocol).as_ref(), Some(&spec), "{stem} drifted from its builtin");
    }
}

#[test]
fn every_builtin_round_trips_through_toml() {
    for protocol in Protocol::ALL {
        for name in builtin::NAMES.iter().copied().chain(["chain:0", "chain:7", "mesh:5"]) {
            let spec = builtin::by_name(name, protocol).unwrap();
            let text = spec.to_toml_string().unwrap();
            assert_eq!(ScenarioSpec::from_toml_str(&text).unwrap(), spec, "{name}");
        }
    }
}

#[test]
fn missing_optional_fields_take_defaults() {
    let text = r#"
        id = "tiny"
        protocol = "ofdpv2"

        [[switches]]
        dpid = 1
        ports = 1

        [[switches]]
        dpid = 2
        ports = 1

        [[links]]
        a = "s1.p1"
        b = "s2.p1"
    "#;
    let spec = ScenarioSpec::from_toml_str(text).unwrap();
    assert_eq!(spec.rng_seed, 0);
    assert_eq!(spec.discovery_period.to_string(), "10s");
    assert_eq!(spec.lldp_window.to_string(), "500ms");
    assert!(spec.switches.iter().all(|s| s.joined));
}
