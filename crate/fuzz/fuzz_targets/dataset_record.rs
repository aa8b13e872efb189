#![no_main]

use libfuzzer_sys::fuzz_target;
use numbias::dataset::{parse_dataset, parse_record, to_record, Task};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for task in [Task::Mtqe, Task::Gecqe, Task::Lcp] {
        if let Ok(ex) = parse_record(text, task, 1) {
            let again = parse_record(&to_record(&ex), task, 1).expect("re-encoded record parses");
            assert_eq!(again, ex);
        }
        let _ = parse_dataset(text, task);
    }
});
