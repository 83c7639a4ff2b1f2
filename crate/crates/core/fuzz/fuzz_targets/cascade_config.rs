#![no_main]

use libfuzzer_sys::fuzz_target;
use semcascade::gateway::CascadeConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = CascadeConfig::from_json(text) {
            let _ = cfg.validate_for_serving();
            let _ = cfg.redacted();
        }
    }
});
