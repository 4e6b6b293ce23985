#![no_main]

use heatrisk::study::{StudyConfig, StudyKind};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = StudyConfig::from_toml(text) {
        for kind in [StudyKind::Truncation, StudyKind::QmcRms, StudyKind::Optimize, StudyKind::CbcBuild] {
            let _ = cfg.validate(kind);
        }
        let _ = cfg.to_toml();
    }
});
