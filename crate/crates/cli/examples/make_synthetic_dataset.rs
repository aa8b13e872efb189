//! Writes a seeded synthetic dataset as JSON Lines.
//!
//! cargo run -p numbias-cli --example make_synthetic_dataset -- mtqe 200 7 > data.jsonl

use std::io::{self, Write};

use numbias::dataset::{to_record, Task};
use numbias::synth::{synthetic_dataset, SynthSpec};

fn main() -> io::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let task: Task = args.first().map_or("mtqe", String::as_str).parse().expect("task");
    let n: usize = args.get(1).map_or(Ok(200), |s| s.parse()).expect("count");
    let seed: u64 = args.get(2).map_or(Ok(7), |s| s.parse()).expect("seed");
    let mut out = io::stdout().lock();
    for ex in synthetic_dataset(&SynthSpec::new(task, n, seed)) {
        writeln!(out, "{}", to_record(&ex))?;
    }
    Ok(())
}
