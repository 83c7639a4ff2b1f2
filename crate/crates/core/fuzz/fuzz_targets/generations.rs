#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(records) = semcascade::trace::parse_generations(text) {
            for r in records {
                let line = serde_json::to_string(&r).unwrap();
                assert!(!line.contains('\n'));
            }
        }
    }
});
