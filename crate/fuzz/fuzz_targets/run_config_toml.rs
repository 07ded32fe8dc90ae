#![no_main]

use hcband::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(c) = RunConfig::from_toml_str(s) {
        let _ = c.validate();
    }
});
