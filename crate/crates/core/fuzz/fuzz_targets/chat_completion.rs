#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(parsed) = semcascade::clients::parse_chat_completion(data) {
        if let Some(lps) = parsed.logprobs {
            assert!(lps.iter().all(|l| l.is_finite() && *l <= 0.0));
        }
    }
});
