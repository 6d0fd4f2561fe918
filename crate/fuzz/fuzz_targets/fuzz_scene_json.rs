#![no_main]

use libfuzzer_sys::fuzz_target;
use roomlayout::scene::SceneDescriptor;

fuzz_target!(|data: &[u8]| {
    if let Ok(mut desc) = SceneDescriptor::from_json(data) {
        let _ = desc.validate();
        let _ = SceneDescriptor::from_json(desc.to_json().as_bytes());
    }
});
