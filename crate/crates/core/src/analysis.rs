//! Mitigation sweeps over temperature or score range, and correlation of
//! input features with the per-example mode ratio.

use std::collections::HashSet;
use std::fmt;

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{Example, ScoreRange};
use crate::judge::{Judge, JudgeError};
use crate::pipeline::{self, Correlation, EvalSettings, Stat};
use crate::prompting::PromptTemplate;

/// Temperatures swept by default.
pub const DEFAULT_TEMPERATURES: [f64; 4] = [0.4, 0.7, 1.0, 1.3];

/// Score ranges swept by default.
pub fn default_ranges() -> Vec<ScoreRange> {
    [(1, 5), (0, 9), (1, 100)]
        .into_iter()
        .map(|(lo, hi)| ScoreRange::new(lo, hi).expect("valid default range"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Temperature,
    Range,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub temperatures: Vec<f64>,
    pub ranges: Vec<ScoreRange>,
    pub fixed_temperature: f64,
    pub fixed_range: ScoreRange,
}

impl SweepSpec {
    pub fn new(axis: SweepAxis) -> Self {
        Self {
            axis,
            temperatures: DEFAULT_TEMPERATURES.to_vec(),
            ranges: default_ranges(),
            fixed_temperature: 0.7,
            fixed_range: ScoreRange::default(),
        }
    }

    /// Settings along the swept axis, with the orthogonal axis held fixed.
    pub fn settings(&self) -> Vec<SweepSetting> {
        match self.axis {
            SweepAxis::Temperature => self
                .temperatures
                .iter()
                .map(|&t| SweepSetting {
                    temperature: t,
                    range: self.fixed_range,
                })
                .collect(),
            SweepAxis::Range => self
                .ranges
                .iter()
                .map(|&r| SweepSetting {
                    temperature: self.fixed_temperature,
                    range: r,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepSetting {
    pub temperature: f64,
    pub range: ScoreRange,
}

impl fmt::Display for SweepSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T={} range={}", self.temperature, self.range)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub setting: SweepSetting,
    pub kurtosis: Option<Stat>,
    pub r: Option<Stat>,
    pub p: Option<f64>,
    pub n_valid: usize,
    pub mean_mode_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub entries: Vec<SweepEntry>,
    /// Index into `entries` of the setting with the largest defined r.
    pub best_setting_by_r: Option<usize>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("temperature,range,kurtosis,r,p,n_valid,mean_mode_ratio,error\n");
        let stat = |s: &Option<Stat>| match s {
            Some(Stat::Value(v)) => pipeline::csv_float(*v),
            Some(Stat::Degenerate) => "DEGENERATE".into(),
            Some(Stat::Undefined) => "UNDEFINED".into(),
            Some(Stat::Insufficient) => "INSUFFICIENT".into(),
            None => String::new(),
        };
        let opt = |v: Option<f64>| v.map(pipeline::csv_float).unwrap_or_default();
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                pipeline::csv_float(e.setting.temperature),
                e.setting.range,
                stat(&e.kurtosis),
                stat(&e.r),
                opt(e.p),
                e.n_valid,
                opt(e.mean_mode_ratio),
                pipeline::csv_field(e.error.as_deref().unwrap_or("")),
            ));
        }
        out
    }
}

/// Index of the largest defined r; ties go to the earlier entry.
pub fn best_by_r(entries: &[SweepEntry]) -> Option<usize> {
    entries
        .iter()
        .enumerate()
        .filter_map(|(i, e)| e.r.and_then(|r| r.value()).map(|r| (i, r)))
        .fold(None, |best: Option<(usize, f64)>, (i, r)| match best {
            Some((_, br)) if br >= r => best,
            _ => Some((i, r)),
        })
        .map(|(i, _)| i)
}

/// Runs the full pipeline once per sweep setting. Gold scores are rescaled
/// into each setting's range. A failing setting is recorded and the sweep
/// moves on.
pub fn run_sweep(
    examples: &[Example],
    template: &PromptTemplate,
    judge_for: &dyn Fn(&SweepSetting) -> Result<Box<dyn Judge>, JudgeError>,
    base: &EvalSettings,
    spec: &SweepSpec,
) -> SweepResult {
    let entries: Vec<SweepEntry> = spec
        .settings()
        .into_iter()
        .map(|setting| {
            let mut settings = base.clone();
            settings.range = setting.range;
            settings.cfg.temperature = setting.temperature;
            let outcome = judge_for(&setting)
                .map_err(pipeline::PipelineError::from)
                .and_then(|judge| pipeline::evaluate(examples, template, judge.as_ref(), &settings));
            match outcome {
                Ok(run) => {
                    let s = pipeline::summarize(&run);
                    SweepEntry {
                        setting,
                        kurtosis: Some(s.kurtosis_model),
                        r: Some(s.correlation.r),
                        p: s.correlation.p,
                        n_valid: s.n_valid,
                        mean_mode_ratio: s.mean_mode_ratio,
                        error: None,
                    }
                }
                Err(e) => {
                    warn!("sweep setting {setting} failed: {e}");
                    SweepEntry {
                        setting,
                        kurtosis: None,
                        r: None,
                        p: None,
                        n_valid: 0,
                        mean_mode_ratio: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    let best_setting_by_r = best_by_r(&entries);
    SweepResult {
        axis: spec.axis,
        entries,
        best_setting_by_r,
    }
}

fn token_set(text: &str) -> HashSet<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Set-Jaccard overlap of lowercased whitespace tokens. Two empty texts
/// overlap fully; one empty text does not overlap at all.
pub fn word_overlap(a: &str, b: &str) -> f64 {
    let (ta, tb) = (token_set(a), token_set(b));
    if ta.is_empty() && tb.is_empty() {
        return 1.0;
    }
    let inter = ta.intersection(&tb).count();
    let union = ta.union(&tb).count();
    inter as f64 / union as f64
}

/// Supplies per-token log-probabilities for perplexity features.
pub trait LogProbProvider: Send + Sync {
    fn token_logprobs(&self, text: &str) -> Result<Vec<f64>, String>;

    fn name(&self) -> &str;
}

/// Offline stand-in scorer: each whitespace token gets log-probability
/// −ln(2 + its character count), so longer words look less likely.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockLogProbProvider;

impl LogProbProvider for MockLogProbProvider {
    fn token_logprobs(&self, text: &str) -> Result<Vec<f64>, String> {
        Ok(text
            .split_whitespace()
            .map(|t| -((2 + t.chars().count()) as f64).ln())
            .collect())
    }

    fn name(&self) -> &str {
        "mock"
    }
}

/// exp(−mean token log-probability); `None` for empty text, an empty token
/// list or a provider failure.
pub fn perplexity(text: &str, provider: &dyn LogProbProvider) -> Option<f64> {
    if text.trim().is_empty() {
        return None;
    }
    match provider.token_logprobs(text) {
        Ok(lp) if !lp.is_empty() => {
            let mean = lp.iter().sum::<f64>() / lp.len() as f64;
            let ppl = (-mean).exp();
            ppl.is_finite().then_some(ppl)
        }
        Ok(_) => None,
        Err(e) => {
            warn!("perplexity provider {} failed: {e}", provider.name());
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureVector {
    pub source_length: usize,
    pub word_overlap: f64,
    pub source_ppl: Option<f64>,
    pub target_ppl: Option<f64>,
    pub overall_ppl: Option<f64>,
}

pub const FEATURE_NAMES: [&str; 5] = [
    "source_length",
    "word_overlap",
    "source_ppl",
    "target_ppl",
    "overall_ppl",
];

impl FeatureVector {
    pub fn compute(example: &Example, provider: Option<&dyn LogProbProvider>) -> Self {
        let src = example.fields.source_text();
        let tgt = example.fields.target_text();
        let ppl = |t: &str| provider.and_then(|p| perplexity(t, p));
        Self {
            source_length: src.split_whitespace().count(),
            word_overlap: word_overlap(src, tgt),
            source_ppl: ppl(src),
            target_ppl: ppl(tgt),
            overall_ppl: ppl(&format!("{src} {tgt}")),
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "source_length" => Some(self.source_length as f64),
            "word_overlap" => Some(self.word_overlap),
            "source_ppl" => self.source_ppl,
            "target_ppl" => self.target_ppl,
            "overall_ppl" => self.overall_ppl,
            _ => None,
        }
    }
}

/// Features for every example, computed in parallel, in dataset order.
pub fn compute_features(
    examples: &[Example],
    provider: Option<&dyn LogProbProvider>,
) -> Vec<FeatureVector> {
    examples
        .par_iter()
        .map(|e| FeatureVector::compute(e, provider))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureCorrelation {
    pub feature: &'static str,
    #[serde(flatten)]
    pub correlation: Correlation,
}

/// Pearson correlation of each named feature with the mode ratio, dropping
/// examples pairwise where either side is absent.
pub fn feature_correlation(
    features: &[FeatureVector],
    mode_ratios: &[Option<f64>],
    names: &[&'static str],
) -> Vec<FeatureCorrelation> {
    names
        .iter()
        .map(|&name| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = features
                .iter()
                .zip(mode_ratios)
                .filter_map(|(f, r)| Some((f.get(name)?, (*r)?)))
                .unzip();
            let mut correlation = Correlation::compute(&xs, &ys);
            if correlation.r == Stat::Insufficient {
                correlation.r = Stat::Undefined;
            }
            FeatureCorrelation {
                feature: name,
                correlation,
            }
        })
        .collect()
}

pub fn feature_table_csv(rows: &[FeatureCorrelation]) -> String {
    let mut out = String::from("feature,r,p,n,significant\n");
    for row in rows {
        let c = &row.correlation;
        let r = match c.r {
            Stat::Value(v) => pipeline::csv_float(v),
            _ => "UNDEFINED".into(),
        };
        let p = c.p.map(pipeline::csv_float).unwrap_or_default();
        out.push_str(&format!("{},{r},{p},{},{}\n", row.feature, c.n, c.significant));
    }
    out
}
