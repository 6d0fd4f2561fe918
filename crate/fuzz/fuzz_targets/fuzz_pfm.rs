#![no_main]

use libfuzzer_sys::fuzz_target;
use roomlayout::formats::{decode_pfm, encode_pfm};

fuzz_target!(|data: &[u8]| {
    if let Ok(depth) = decode_pfm(data) {
        let again = decode_pfm(&encode_pfm(&depth)).expect("re-encoded PFM decodes");
        assert_eq!((again.width(), again.height()), (depth.width(), depth.height()));
        assert_eq!(again.valid_count(), depth.valid_count());
    }
});
