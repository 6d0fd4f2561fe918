#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use roomlayout::formats::{decode_label_png, encode_label_png};

fuzz_target!(|data: &[u8]| {
    let path = Path::new("fuzz.png");
    if let Ok(labels) = decode_label_png(data, path) {
        let bytes = encode_label_png(&labels).expect("decoded labels fit 16 bits");
        assert_eq!(decode_label_png(&bytes, path).unwrap(), labels);
    }
});
