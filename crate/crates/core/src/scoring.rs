//! Raw generations to final scores: parse, filter, clip, average.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::ScoreRange;
use crate::judge::RawGeneration;

#[derive(Debug, Error, PartialEq)]
pub enum ScoringError {
    #[error("cannot clip non-finite score {0}")]
    NonFinite(f64),
    #[error("no valid scores in any example; dataset mode is undefined")]
    NoValidScores,
}

static NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[+-]?[0-9]+(?:\.[0-9]+)?").expect("valid regex"));

/// First decimal number in `text`, or `None` when there is none.
pub fn parse_score(text: &str) -> Option<f64> {
    let m = NUMBER.find(text.trim())?;
    m.as_str().parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn clip(score: f64, range: ScoreRange) -> Result<f64, ScoringError> {
    if !score.is_finite() {
        return Err(ScoringError::NonFinite(score));
    }
    Ok(score.clamp(range.min() as f64, range.max() as f64))
}

/// Parsed and clipped samples of one example.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSet {
    pub example_id: String,
    pub parsed: Vec<f64>,
    pub n_raw: usize,
    pub clipped: Vec<f64>,
}

impl SampleSet {
    pub fn from_generation(raw: &RawGeneration, range: ScoreRange) -> Self {
        let parsed: Vec<f64> = raw.texts.iter().filter_map(|t| parse_score(t)).collect();
        let clipped = parsed
            .iter()
            .map(|&v| clip(v, range).expect("parse_score only yields finite values"))
            .collect();
        Self {
            example_id: raw.example_id.clone(),
            parsed,
            n_raw: raw.texts.len(),
            clipped,
        }
    }

    pub fn n_valid(&self) -> usize {
        self.clipped.len()
    }

    /// Clipped samples rounded to the integer support.
    pub fn rounded(&self) -> Vec<i64> {
        self.clipped.iter().map(|v| v.round() as i64).collect()
    }
}

/// Final per-example score; `value` is `None` when nothing parsed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalScore {
    pub example_id: String,
    pub value: Option<f64>,
    pub n_valid: usize,
}

pub fn aggregate(samples: &SampleSet) -> FinalScore {
    let n_valid = samples.n_valid();
    let value = (n_valid > 0).then(|| samples.clipped.iter().sum::<f64>() / n_valid as f64);
    FinalScore {
        example_id: samples.example_id.clone(),
        value,
        n_valid,
    }
}

/// Pooled counts of rounded clipped samples.
pub fn pooled_counts<'a>(sets: impl IntoIterator<Item = &'a SampleSet>) -> BTreeMap<i64, usize> {
    let mut counts = BTreeMap::new();
    for set in sets {
        for v in set.rounded() {
            *counts.entry(v).or_insert(0) += 1;
        }
    }
    counts
}

/// Most frequent rounded score across all examples; ties go to the larger value.
pub fn dataset_mode(sets: &[SampleSet]) -> Result<i64, ScoringError> {
    pooled_counts(sets)
        .into_iter()
        // ascending iteration: replacing on equal counts keeps the larger value
        .fold(None, |best: Option<(i64, usize)>, (v, c)| match best {
            Some((_, bc)) if bc > c => best,
            _ => Some((v, c)),
        })
        .map(|(v, _)| v)
        .ok_or(ScoringError::NoValidScores)
}

/// Share of an example's samples that round to `mode`.
pub fn mode_ratio(samples: &SampleSet, mode: i64) -> Option<f64> {
    let n = samples.n_valid();
    if n == 0 {
        return None;
    }
    let hits = samples.rounded().into_iter().filter(|&v| v == mode).count();
    Some(hits as f64 / n as f64)
}
