#![no_main]

use heatrisk::descent::DescentTrace;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(trace) = DescentTrace::parse_csv(text) {
        let again = DescentTrace::parse_csv(&trace.to_csv()).unwrap();
        assert_eq!(again.records.len(), trace.records.len());
    }
});
