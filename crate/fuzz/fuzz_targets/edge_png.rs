#![no_main]

use libfuzzer_sys::fuzz_target;
use looptrust::segmentation::decode_edge_png;

fuzz_target!(|data: &[u8]| {
    let _ = decode_edge_png(data);
});
