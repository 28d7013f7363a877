#![no_main]

use libfuzzer_sys::fuzz_target;
use looptrust::sim::StudyConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = StudyConfig::from_json(text) {
        let _ = c.validate();
    }
});
