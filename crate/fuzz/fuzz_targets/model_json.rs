#![no_main]

use hcband_core::geometry::InclusionModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(m) = InclusionModel::from_json_str(s) {
        let back = serde_json::to_string(&m).unwrap();
        assert_eq!(InclusionModel::from_json_str(&back).unwrap(), m);
    }
});
