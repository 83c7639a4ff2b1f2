#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(examples) = semcascade::trace::parse_dataset(text) {
            assert!(examples.iter().all(|e| !e.references.is_empty()));
        }
    }
});
