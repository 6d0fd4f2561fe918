#![no_main]

use libfuzzer_sys::fuzz_target;
use roomlayout::layout::Layout;

fuzz_target!(|data: &[u8]| {
    if let Ok(layout) = Layout::from_json(data) {
        let json = layout.to_json();
        let back = Layout::from_json(json.as_bytes()).expect("serialized layout parses");
        assert_eq!(back.to_json(), json);
        let _ = layout.to_obj();
    }
});
