//! Versioned, machine-readable audit reports with sidecar CSV tables.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::analysis::{FeatureCorrelation, SweepAxis, SweepResult};
use crate::calibration::{BetaParams, GoldPrior, LabelMarginal};
use crate::dataset::{ScoreRange, Task};
use crate::judge::SyntheticConfig;
use crate::metrics::ScoreDistribution;
use crate::pipeline::{RunSummary, Stat};

pub const REPORT_FORMAT_VERSION: u32 = 1;
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationConfig {
    pub calibration_data: String,
    pub calibration_data_sha256: Option<String>,
    pub marginal_pool: usize,
    pub smoothing: f64,
    /// `beta` (fitted gold prior) or `marginal` (q = p, identity check).
    pub prior: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub temperatures: Vec<f64>,
    pub ranges: Vec<ScoreRange>,
    pub fixed_temperature: f64,
    pub fixed_range: ScoreRange,
}

/// Every input needed to rerun a command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub task: Task,
    pub data: String,
    pub data_sha256: Option<String>,
    pub range: ScoreRange,
    pub gold_span: [f64; 2],
    pub template: String,
    pub temperature: f64,
    pub n_samples: usize,
    pub max_tokens: u32,
    pub backend: String,
    pub model: Option<String>,
    pub endpoint: Option<String>,
    pub cache: Option<String>,
    pub seed: Option<u64>,
    pub parallelism: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perplexity_provider: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub n: usize,
    pub n_valid: usize,
    pub n_absent: usize,
    pub n_clamped_gold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Distributions {
    pub model: ScoreDistribution,
    pub raw_samples: ScoreDistribution,
    pub gold: ScoreDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsBlock {
    pub kurtosis_model: Stat,
    pub kurtosis_gold: Stat,
    pub r: Stat,
    pub p: Option<f64>,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeBlock {
    pub value: Option<i64>,
    pub mean_mode_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationBlock {
    pub n_gold: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<BetaParams>,
    pub p_table: LabelMarginal,
    pub q_table: GoldPrior,
    pub kurtosis_calibrated: Stat,
    pub r_calibrated: Stat,
    pub p_calibrated: Option<f64>,
    pub significant_calibrated: bool,
    pub n_calibrated: usize,
    pub calibrated_histogram: ScoreDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureBlock {
    pub rows: Vec<FeatureCorrelation>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub report_format: u32,
    pub toolkit_version: String,
    pub command: String,
    pub run_config: RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset_summary: Option<DatasetSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distribution: Option<Distributions>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<ModeBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureBlock>,
    pub notes: BTreeMap<&'static str, &'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn method_notes() -> BTreeMap<&'static str, &'static str> {
    BTreeMap::from([
        ("kurtosis", "population moment estimator m4/m2^2 - 3 over final scores"),
        ("correlation", "Pearson r, two-tailed t-test on n-2 df, significant iff p < 0.01"),
        ("final_score", "mean of parsed, clipped samples; examples with no valid parse are excluded"),
        ("mode", "most frequent rounded clipped sample across the dataset, ties toward the larger value"),
        ("histograms", "counts of rounded values over the integer support"),
        ("calibration", "weights q(y)/p(y) over rounded samples; q from a Beta fit on [min, max+1] integrated per unit bin; p pooled and add-s smoothed"),
        ("word_overlap", "set Jaccard over lowercased whitespace tokens (approximate for unsegmented scripts)"),
    ])
}

impl AuditReport {
    pub fn new(command: &str, run_config: RunConfig) -> Self {
        Self {
            report_format: REPORT_FORMAT_VERSION,
            toolkit_version: TOOLKIT_VERSION.to_string(),
            command: command.to_string(),
            run_config,
            dataset_summary: None,
            distribution: None,
            metrics: None,
            mode: None,
            calibration: None,
            sweep: None,
            features: None,
            notes: method_notes(),
            error: None,
        }
    }

    /// Fills the dataset, distribution, metric and mode blocks.
    pub fn with_summary(mut self, s: &RunSummary) -> Self {
        self.dataset_summary = Some(DatasetSummary {
            n: s.n,
            n_valid: s.n_valid,
            n_absent: s.n_absent,
            n_clamped_gold: s.n_clamped_gold,
        });
        self.distribution = Some(Distributions {
            model: s.model_histogram.clone(),
            raw_samples: s.raw_sample_histogram.clone(),
            gold: s.gold_histogram.clone(),
        });
        self.metrics = Some(MetricsBlock {
            kurtosis_model: s.kurtosis_model,
            kurtosis_gold: s.kurtosis_gold,
            r: s.correlation.r,
            p: s.correlation.p,
            significant: s.correlation.significant,
        });
        self.mode = Some(ModeBlock {
            value: s.mode,
            mean_mode_ratio: s.mean_mode_ratio,
        });
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}

/// Path of a sidecar file next to the report: `out.json` + `model_hist`
/// gives `out.model_hist.csv`.
pub fn sidecar_path(report: &Path, name: &str) -> PathBuf {
    let stem = report
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    report.with_file_name(format!("{stem}.{name}.csv"))
}

/// Writes the report and its sidecar tables.
pub fn write_report(path: &Path, report: &AuditReport, sidecars: &[(&str, String)]) -> io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, report.to_json())?;
    for (name, body) in sidecars {
        fs::write(sidecar_path(path, name), body)?;
    }
    Ok(())
}
