#![no_main]

use libfuzzer_sys::fuzz_target;
use looptrust::grid_image::parse_labeling;

// input is the CSV and the JSON sidecar separated by a NUL byte
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let (csv, json) = text.split_once('\0').unwrap_or((text, "{\"roles\":{}}"));
    if let Ok(lab) = parse_labeling(csv, json) {
        lab.validate().expect("parsed labelings are valid");
    }
});
