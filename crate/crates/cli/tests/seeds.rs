// The checked-in fuzz seeds must stay valid inputs, otherwise the fuzzers
// start from rejected data and never reach the deeper code.

use std::fs;
use std::path::Path;

use hcband::formats::parse_sets_json;
use hcband::RunConfig;
use hcband_core::fem::Mesh;
use hcband_core::geometry::{Configuration, InclusionModel};
use hcband_core::spectral::CacheManifest;
use hcband_core::tensors::ElasticityTensor;
use hcband_core::zhikov::SpectralSet;

fn seeds(target: &str) -> Vec<(String, String)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, String)> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.display().to_string(), fs::read_to_string(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn every_seed_is_accepted() {
    for (p, s) in seeds("tensor_json") {
        ElasticityTensor::from_json_str(&s).unwrap_or_else(|e| panic!("{p}: {e}"));
    }
    for (p, s) in seeds("model_json") {
        InclusionModel::from_json_str(&s).unwrap_or_else(|e| panic!("{p}: {e}"));
    }
    for (p, s) in seeds("configuration_json") {
        Configuration::from_json_str(&s).unwrap_or_else(|e| panic!("{p}: {e}"));
    }
    for (p, s) in seeds("mesh_text") {
        let m = Mesh::from_text(&s).unwrap_or_else(|e| panic!("{p}: {e}"));
        assert_eq!(Mesh::from_text(&m.to_text()).unwrap(), m);
    }
    for (p, s) in seeds("run_config_toml") {
        RunConfig::from_toml_str(&s).and_then(|c| c.validate()).unwrap_or_else(|e| panic!("{p}: {e}"));
    }
    for (p, s) in seeds("spectral_set_json") {
        SpectralSet::from_json_str(&s).unwrap_or_else(|e| panic!("{p}: {e}"));
    }
    for (p, s) in seeds("sets_file") {
        parse_sets_json(&s).unwrap_or_else(|e| panic!("{p}: {e}"));
    }
    for (p, s) in seeds("cache_manifest") {
        CacheManifest::from_json_str(&s).unwrap_or_else(|e| panic!("{p}: {e}"));
    }
}
