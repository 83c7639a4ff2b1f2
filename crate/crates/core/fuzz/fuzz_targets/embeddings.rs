#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(vectors) = semcascade::clients::parse_embeddings(data) {
        if let Some(first) = vectors.first() {
            assert!(vectors.iter().all(|v| v.len() == first.len()));
        }
    }
});
