#![no_main]

use libfuzzer_sys::fuzz_target;
use numbias::dataset::parse_gold_values;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(values) = parse_gold_values(text) {
        assert!(values.len() <= text.lines().count());
    }
});
