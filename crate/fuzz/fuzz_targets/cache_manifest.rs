#![no_main]

use hcband_core::spectral::CacheManifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let _ = CacheManifest::from_json_str(s);
});
