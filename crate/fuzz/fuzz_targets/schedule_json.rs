#![no_main]

use connsim::schedule::{parse_and_validate, parse_schedule, to_json};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let mut doc = String::with_capacity(text.len() + 1);
    if !text.trim_start().starts_with('{') {
        doc.push('{');
    }
    doc.push_str(text);
    if let Ok(loaded) = parse_and_validate(&doc) {
        let again = parse_schedule(&to_json(&loaded.schedule)).expect("exported schedule parses");
        assert_eq!(again, loaded.schedule);
    }
});
