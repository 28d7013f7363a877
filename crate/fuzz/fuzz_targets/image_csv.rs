#![no_main]

use libfuzzer_sys::fuzz_target;
use looptrust::grid_image::{parse_image_csv, write_image_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(img) = parse_image_csv(text) {
        let again = parse_image_csv(&write_image_csv(&img)).expect("round trip");
        assert_eq!(img, again);
    }
});
