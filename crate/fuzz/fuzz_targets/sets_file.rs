#![no_main]

use hcband::formats::{emit_band_diagram, parse_sets_json};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok((sets, ncomp)) = parse_sets_json(s) {
        let svg = emit_band_diagram(&sets, ncomp);
        assert!(svg.ends_with("</svg>\n"));
    }
});
