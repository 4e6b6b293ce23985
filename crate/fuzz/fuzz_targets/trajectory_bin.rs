#![no_main]

use heatrisk::fem::FieldTrajectory;
use libfuzzer_sys::fuzz_target;

// The binary dump is canonical: anything accepted re-encodes to the same bytes.
fuzz_target!(|data: &[u8]| {
    if let Ok((meta, traj)) = FieldTrajectory::from_bytes(data) {
        assert_eq!(traj.to_bytes(meta.level).unwrap(), data);
    }
});
