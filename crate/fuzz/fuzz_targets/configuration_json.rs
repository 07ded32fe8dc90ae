#![no_main]

use hcband_core::geometry::Configuration;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(c) = Configuration::from_json_str(s) {
        assert_eq!(Configuration::from_json_str(&c.to_json_string()).unwrap(), c);
        // derived quantities must not panic on accepted input
        let _ = c.cell_areas();
    }
});
