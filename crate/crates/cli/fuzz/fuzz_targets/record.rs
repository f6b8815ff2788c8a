#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(r) = horo_cli::record::parse_record(text) {
            let line = horo_cli::record::to_jsonl(std::slice::from_ref(&r)).unwrap();
            assert_eq!(horo_cli::record::parse_record(line.trim_end()).unwrap(), r);
        }
    }
});
