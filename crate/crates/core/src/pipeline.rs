//! The generate → score → metrics pipeline shared by every command.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::{self, DatasetError, Example, ScoreRange};
use crate::judge::{
    CacheRecord, GenerationConfig, GenerationRequest, Judge, JudgeError, RawGeneration, ReplayCache,
};
use crate::metrics::{self, MetricsError, ScoreDistribution};
use crate::prompting::{PromptError, PromptTemplate};
use crate::scoring::{self, FinalScore, SampleSet};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("example {example_id}: {source}")]
    Prompt {
        example_id: String,
        #[source]
        source: PromptError,
    },
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

/// Settings of one evaluation run.
#[derive(Debug, Clone)]
pub struct EvalSettings {
    pub range: ScoreRange,
    pub cfg: GenerationConfig,
    /// Span the raw gold scores are expressed in.
    pub gold_span: (f64, f64),
    pub parallelism: usize,
    /// Replay cache to append generations to.
    pub record_to: Option<PathBuf>,
}

/// Everything produced for one dataset under one setting.
#[derive(Debug, Clone)]
pub struct EvalRun {
    pub range: ScoreRange,
    pub ids: Vec<String>,
    pub gold_rescaled: Vec<f64>,
    pub n_clamped_gold: usize,
    pub generations: Vec<RawGeneration>,
    pub sample_sets: Vec<SampleSet>,
    pub final_scores: Vec<FinalScore>,
}

/// Renders prompts, queries the judge for every example (bounded
/// parallelism, output in dataset order), then parses, clips and averages.
pub fn evaluate(
    examples: &[Example],
    template: &PromptTemplate,
    judge: &dyn Judge,
    settings: &EvalSettings,
) -> Result<EvalRun, PipelineError> {
    if examples.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }
    settings.cfg.validate()?;
    let range = settings.range;
    let gold: Vec<f64> = examples.iter().map(|e| e.gold).collect();
    let rescaled = dataset::rescale_gold(&gold, settings.gold_span.0, settings.gold_span.1, range)?;

    let prompts = examples
        .iter()
        .map(|ex| {
            template.render(ex, range).map_err(|source| PipelineError::Prompt {
                example_id: ex.id.clone(),
                source,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.parallelism.max(1))
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;
    let results: Vec<Result<RawGeneration, JudgeError>> = pool.install(|| {
        examples
            .par_iter()
            .zip(prompts.par_iter())
            .zip(rescaled.values.par_iter())
            .map(|((ex, prompt), &gold_rescaled)| {
                judge.generate(&GenerationRequest {
                    example_id: &ex.id,
                    prompt,
                    gold_rescaled,
                    range,
                    cfg: &settings.cfg,
                })
            })
            .collect()
    });

    if let Some(path) = &settings.record_to {
        let records: Vec<CacheRecord> = results
            .iter()
            .zip(&prompts)
            .filter_map(|(r, prompt)| {
                r.as_ref().ok().map(|g| CacheRecord {
                    example_id: g.example_id.clone(),
                    fingerprint: settings.cfg.fingerprint(prompt),
                    texts: g.texts.clone(),
                })
            })
            .collect();
        ReplayCache::append(path, &records)?;
    }

    let generations = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let sample_sets: Vec<SampleSet> = generations
        .iter()
        .map(|g| SampleSet::from_generation(g, range))
        .collect();
    let final_scores = sample_sets.iter().map(scoring::aggregate).collect();

    Ok(EvalRun {
        range,
        ids: examples.iter().map(|e| e.id.clone()).collect(),
        gold_rescaled: rescaled.values,
        n_clamped_gold: rescaled.n_clamped,
        generations,
        sample_sets,
        final_scores,
    })
}

/// A statistic that may be undefined on degenerate data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stat {
    Value(f64),
    /// Zero variance: the scores are fully concentrated.
    Degenerate,
    /// Correlation with a constant vector.
    Undefined,
    /// Too few usable points.
    Insufficient,
}

impl Stat {
    pub fn value(&self) -> Option<f64> {
        match self {
            Stat::Value(v) => Some(*v),
            _ => None,
        }
    }

    pub fn kurtosis(xs: &[f64]) -> Self {
        match metrics::excess_kurtosis(xs) {
            Ok(v) => Stat::Value(v),
            Err(MetricsError::Degenerate) => Stat::Degenerate,
            Err(_) => Stat::Insufficient,
        }
    }

    /// Orders kurtosis values so that a fully concentrated distribution
    /// counts as the most biased.
    pub fn kurtosis_rank(&self) -> Option<f64> {
        match self {
            Stat::Value(v) => Some(*v),
            Stat::Degenerate => Some(f64::INFINITY),
            _ => None,
        }
    }
}

impl Serialize for Stat {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Stat::Value(v) => s.serialize_f64(*v),
            Stat::Degenerate => s.serialize_str("DEGENERATE"),
            Stat::Undefined => s.serialize_str("UNDEFINED"),
            Stat::Insufficient => s.serialize_str("INSUFFICIENT"),
        }
    }
}

/// Correlation outcome as reported: r and p are both set or both not.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlation {
    pub r: Stat,
    pub p: Option<f64>,
    pub n: usize,
    pub significant: bool,
}

impl Correlation {
    pub fn compute(xs: &[f64], ys: &[f64]) -> Self {
        let n = xs.len().min(ys.len());
        match metrics::pearson(xs, ys) {
            Ok(c) => Correlation {
                r: Stat::Value(c.r),
                p: Some(c.p_value),
                n,
                significant: c.significant(),
            },
            Err(MetricsError::ZeroVariance(_)) => Correlation {
                r: Stat::Undefined,
                p: None,
                n,
                significant: false,
            },
            Err(_) => Correlation {
                r: Stat::Insufficient,
                p: None,
                n,
                significant: false,
            },
        }
    }
}

/// Dataset-level bias and accuracy numbers of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub n: usize,
    pub n_valid: usize,
    pub n_absent: usize,
    pub n_clamped_gold: usize,
    pub kurtosis_model: Stat,
    pub kurtosis_gold: Stat,
    pub correlation: Correlation,
    pub mode: Option<i64>,
    pub mean_mode_ratio: Option<f64>,
    pub model_histogram: ScoreDistribution,
    pub raw_sample_histogram: ScoreDistribution,
    pub gold_histogram: ScoreDistribution,
}

/// Pairs of (gold, score) for examples whose score is present.
pub fn present_pairs(gold: &[f64], scores: &[FinalScore]) -> (Vec<f64>, Vec<f64>) {
    gold.iter()
        .zip(scores)
        .filter_map(|(&g, s)| s.value.map(|v| (g, v)))
        .unzip()
}

/// Per-example mode ratios against the dataset mode.
pub fn mode_ratios(sets: &[SampleSet], mode: Option<i64>) -> Vec<Option<f64>> {
    sets.iter()
        .map(|s| mode.and_then(|m| scoring::mode_ratio(s, m)))
        .collect()
}

pub fn mean_of_present(values: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
}

pub fn summarize(run: &EvalRun) -> RunSummary {
    summarize_scores(run, &run.final_scores)
}

/// Summary of `scores` (raw or calibrated) against the run's gold scores.
pub fn summarize_scores(run: &EvalRun, scores: &[FinalScore]) -> RunSummary {
    let (gold, model) = present_pairs(&run.gold_rescaled, scores);
    let n_valid = model.len();
    let mode = scoring::dataset_mode(&run.sample_sets).ok();
    let ratios = mode_ratios(&run.sample_sets, mode);
    let raw: Vec<f64> = run
        .sample_sets
        .iter()
        .flat_map(|s| s.clipped.iter().copied())
        .collect();
    RunSummary {
        n: scores.len(),
        n_valid,
        n_absent: scores.len() - n_valid,
        n_clamped_gold: run.n_clamped_gold,
        kurtosis_model: Stat::kurtosis(&model),
        kurtosis_gold: Stat::kurtosis(&run.gold_rescaled),
        correlation: Correlation::compute(&gold, &model),
        mode,
        mean_mode_ratio: mean_of_present(&ratios),
        model_histogram: metrics::histogram(&model, run.range),
        raw_sample_histogram: metrics::histogram(&raw, run.range),
        gold_histogram: metrics::histogram(&run.gold_rescaled, run.range),
    }
}

/// Per-example table: id, rescaled gold, final score, valid count, mode ratio.
pub fn per_example_csv(run: &EvalRun, scores: &[FinalScore]) -> String {
    let mode = scoring::dataset_mode(&run.sample_sets).ok();
    let ratios = mode_ratios(&run.sample_sets, mode);
    let mut out = String::from("id,gold,score,n_valid,mode_ratio\n");
    for (((id, g), s), r) in run.ids.iter().zip(&run.gold_rescaled).zip(scores).zip(&ratios) {
        let fmt = |v: Option<f64>| v.map(csv_float).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            csv_field(id),
            csv_float(*g),
            fmt(s.value),
            s.n_valid,
            fmt(*r)
        ));
    }
    out
}

/// Shortest round-trip float text; tiny p-values stay in exponent form.
pub(crate) fn csv_float(v: f64) -> String {
    format!("{v:?}")
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
