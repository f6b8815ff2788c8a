#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(region) = horo_cli::config::parse_boxes(text) {
            assert!(region.volume() >= 0.0);
        }
    }
});
