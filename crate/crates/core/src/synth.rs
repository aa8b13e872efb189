//! Seeded synthetic datasets for smoke runs and tests.
//!
//! Texts are bags of pseudo-words. For pair tasks the target side keeps each
//! source token with a per-example probability drawn uniformly from [0, 1],
//! so word overlap varies across the dataset. Gold scores are Beta draws
//! scaled onto the gold span.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use crate::dataset::{Example, ExampleFields, Task};

const SOURCE_WORDS: &[&str] = &[
    "haus", "baum", "wasser", "licht", "stadt", "zeit", "weg", "hand", "kind", "auge",
    "welt", "jahr", "tag", "nacht", "frage", "arbeit", "schule", "bild", "teil", "platz",
    "grund", "seite", "wort", "spiel", "land", "stunde", "woche", "leben", "ende", "name",
];

const TARGET_WORDS: &[&str] = &[
    "house", "tree", "water", "light", "city", "time", "way", "hand", "child", "eye",
    "world", "year", "day", "night", "question", "work", "school", "picture", "part", "place",
    "reason", "side", "word", "game", "country", "hour", "week", "life", "end", "name",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub task: Task,
    pub n: usize,
    pub seed: u64,
    pub gold_alpha: f64,
    pub gold_beta: f64,
    /// Gold scores are scaled onto this span; defaults to the task's span.
    pub gold_span: (f64, f64),
}

impl SynthSpec {
    pub fn new(task: Task, n: usize, seed: u64) -> Self {
        Self {
            task,
            n,
            seed,
            gold_alpha: 2.0,
            gold_beta: 5.0,
            gold_span: task.default_gold_span(),
        }
    }
}

fn sentence(rng: &mut ChaCha8Rng, words: &[&str], len: usize) -> Vec<String> {
    (0..len)
        .map(|_| words.choose(rng).expect("non-empty vocabulary").to_string())
        .collect()
}

fn derive(rng: &mut ChaCha8Rng, src: &[String], keep: f64) -> Vec<String> {
    src.iter()
        .map(|w| {
            if rng.gen::<f64>() < keep {
                w.clone()
            } else {
                TARGET_WORDS.choose(rng).expect("non-empty vocabulary").to_string()
            }
        })
        .collect()
}

/// Generates `spec.n` examples. Panics if the Beta shape parameters are not positive.
pub fn synthetic_dataset(spec: &SynthSpec) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gold_dist = Beta::new(spec.gold_alpha, spec.gold_beta).expect("positive Beta shapes");
    let (lo, hi) = spec.gold_span;
    (0..spec.n)
        .map(|i| {
            let u = gold_dist.sample(&mut rng);
            let gold = ((lo + u * (hi - lo)) * 1e4).round() / 1e4;
            let len = rng.gen_range(4..=20);
            let src = sentence(&mut rng, SOURCE_WORDS, len);
            let keep: f64 = rng.gen();
            let fields = match spec.task {
                Task::Mtqe => ExampleFields::Mtqe {
                    source: src.join(" "),
                    hypothesis: derive(&mut rng, &src, keep).join(" "),
                    source_lang: "German".into(),
                    target_lang: "English".into(),
                },
                Task::Gecqe => ExampleFields::Gecqe {
                    original: src.join(" "),
                    corrected: derive(&mut rng, &src, keep).join(" "),
                },
                Task::Lcp => {
                    let word = src.choose(&mut rng).expect("non-empty sentence").clone();
                    ExampleFields::Lcp {
                        sentence: src.join(" "),
                        word,
                    }
                }
            };
            Example {
                id: format!("syn-{i:05}"),
                gold,
                fields,
            }
        })
        .collect()
}
