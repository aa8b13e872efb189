#![no_main]

use libfuzzer_sys::fuzz_target;
use numbias::dataset::{ScoreRange, Task};
use numbias::prompting::PromptTemplate;
use numbias::synth::{synthetic_dataset, SynthSpec};

fuzz_target!(|data: &[u8]| {
    let Ok(body) = std::str::from_utf8(data) else { return };
    for task in [Task::Mtqe, Task::Gecqe, Task::Lcp] {
        if let Ok(t) = PromptTemplate::parse(task, body) {
            let ex = &synthetic_dataset(&SynthSpec::new(task, 1, 0))[0];
            let prompt = t.render(ex, ScoreRange::default()).expect("parsed template renders");
            assert!(!prompt.contains("{{min score}}"));
        }
    }
});
