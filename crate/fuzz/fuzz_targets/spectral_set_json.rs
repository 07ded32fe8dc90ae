#![no_main]

use hcband_core::zhikov::SpectralSet;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(set) = SpectralSet::from_json_str(s) {
        assert_eq!(SpectralSet::from_json_str(&set.to_json_string()).unwrap(), set);
        let _ = set.gaps();
        let _ = set.measure();
    }
});
