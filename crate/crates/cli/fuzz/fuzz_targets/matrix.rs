#![no_main]

use horo_core::modring::{parse_int_rows, ModMatrix};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_int_rows(text);
        if let Ok(m) = text.parse::<ModMatrix>() {
            assert!(m.entries().iter().all(|&x| x < m.modulus()));
        }
    }
});
