#![no_main]

use libfuzzer_sys::fuzz_target;
use looptrust::persistence::{parse_diagram_csv, write_diagram_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(d) = parse_diagram_csv(text) {
        let again = parse_diagram_csv(&write_diagram_csv(&d)).expect("round trip");
        assert_eq!(d.points.len(), again.points.len());
    }
});
