#![no_main]

use hcband_core::fem::Mesh;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    // from_text validates, so accepted meshes are safe to assemble
    if let Ok(m) = Mesh::from_text(s) {
        assert_eq!(Mesh::from_text(&m.to_text()).unwrap(), m);
    }
});
