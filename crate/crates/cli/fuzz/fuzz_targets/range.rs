#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(v) = horo_cli::config::parse_range(text) {
            assert!(v.len() <= horo_cli::config::MAX_RANGE_LEN);
        }
    }
});
