#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(policies) = semcascade::policy::PolicyConfig::list_from_json(text) {
            for p in policies {
                let _ = p.label();
            }
        }
    }
});
