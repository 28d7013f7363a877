#![no_main]

use libfuzzer_sys::fuzz_target;
use looptrust::grid_image::RingSpec;

fuzz_target!(|data: &[u8]| {
    if let Ok(spec) = serde_json::from_slice::<RingSpec>(data) {
        let _ = spec.validate();
    }
});
