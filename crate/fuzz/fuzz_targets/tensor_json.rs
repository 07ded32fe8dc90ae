#![no_main]

use hcband_core::tensors::ElasticityTensor;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(t) = ElasticityTensor::from_json_str(s) {
        let back = serde_json::to_string(&t.to_json()).unwrap();
        assert_eq!(ElasticityTensor::from_json_str(&back).unwrap(), t);
    }
});
