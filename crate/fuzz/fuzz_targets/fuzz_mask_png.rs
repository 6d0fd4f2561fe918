#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use roomlayout::formats::{decode_mask_png, encode_mask_png};

fuzz_target!(|data: &[u8]| {
    let path = Path::new("fuzz.png");
    if let Ok(mask) = decode_mask_png(data, path) {
        assert_eq!(decode_mask_png(&encode_mask_png(&mask), path).unwrap(), mask);
    }
});
