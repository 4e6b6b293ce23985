#![no_main]

use heatrisk::field::CacheFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cache) = CacheFile::decode(data) {
        assert_eq!(cache.mean.len(), cache.header.nnz);
        assert_eq!(cache.fluctuations.len(), cache.header.nnz * cache.header.s_max);
    }
});
