#![no_main]

use libfuzzer_sys::fuzz_target;
use numbias::dataset::ScoreRange;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(r) = text.parse::<ScoreRange>() {
        assert!(0 <= r.min() && r.min() < r.max());
        let again: ScoreRange = format!("{}:{}", r.min(), r.max()).parse().unwrap();
        assert_eq!(again, r);
    }
});
