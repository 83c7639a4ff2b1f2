#![no_main]

use libfuzzer_sys::fuzz_target;
use semcascade::confidence::CalibrationStats;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(stats) = CalibrationStats::from_json(text) {
            let again = CalibrationStats::from_json(&stats.to_json()).unwrap();
            assert_eq!(again, stats);
        }
    }
});
