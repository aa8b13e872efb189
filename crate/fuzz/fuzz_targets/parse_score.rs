#![no_main]

use libfuzzer_sys::fuzz_target;
use numbias::dataset::ScoreRange;
use numbias::scoring::{clip, parse_score};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Some(v) = parse_score(text) {
        assert!(v.is_finite());
        let c = clip(v, ScoreRange::default()).unwrap();
        assert!((0.0..=9.0).contains(&c));
    }
});
