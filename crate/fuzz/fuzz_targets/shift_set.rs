#![no_main]

use heatrisk::lattice::ShiftSet;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(set) = ShiftSet::from_bytes(data) {
        assert!(set.iter().all(|s| s.len() == set.dim()));
        assert_eq!(set.to_bytes(), data);
    }
});
