#![no_main]

use heatrisk::study::{embedded_hash, Manifest};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = embedded_hash(text);
    if let Ok(m) = Manifest::parse(text) {
        let _ = m.verify();
        assert_eq!(Manifest::parse(&m.render()).unwrap(), m);
    }
});
