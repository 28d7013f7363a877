#![no_main]

use libfuzzer_sys::fuzz_target;
use looptrust::segmentation::{parse_edge_csv, write_edge_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(e) = parse_edge_csv(text) {
        assert_eq!(parse_edge_csv(&write_edge_csv(&e)).expect("round trip"), e);
    }
});
