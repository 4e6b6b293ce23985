#![no_main]

use heatrisk::fem::TrajectoryCsv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(parsed) = TrajectoryCsv::parse(text) {
        let n_dof = parsed.meta.n_dof();
        assert!(parsed.entries.iter().all(|&(k, d, _)| k <= parsed.meta.grid.n_steps() && d < n_dof));
        let _ = parsed.into_trajectory();
    }
});
