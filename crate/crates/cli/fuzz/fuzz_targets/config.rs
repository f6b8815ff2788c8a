#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(map) = horo_cli::config::parse_config(text) {
            for (k, v) in &map {
                assert!(!k.is_empty() && !v.is_empty());
            }
        }
    }
});
