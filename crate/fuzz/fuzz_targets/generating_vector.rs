#![no_main]

use heatrisk::lattice::GeneratingVector;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(gv) = GeneratingVector::parse(text) {
        assert_eq!(GeneratingVector::parse(&gv.to_text()).unwrap(), gv);
    }
});
