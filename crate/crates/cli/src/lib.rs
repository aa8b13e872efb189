//! Command definitions and runners for the `numbias` binary.
//!
//! Usage errors (bad flags, missing input files, backend prerequisites) are
//! reported before anything runs and map to exit code 2. Failures during a
//! run still write a report carrying an `error` field and map to exit code 1.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use sha2::{Digest, Sha256};

use numbias::analysis::{
    self, feature_correlation, feature_table_csv, LogProbProvider, MockLogProbProvider, SweepAxis,
    SweepSetting, SweepSpec, FEATURE_NAMES,
};
use numbias::calibration::{
    calibrate_dataset, draw_marginal_pool, estimate_marginal, fit_beta, interval_masses, GoldPrior,
};
use numbias::dataset::{self, Example, ScoreRange, Task};
use numbias::judge::{
    GenerationConfig, HttpConfig, HttpJudge, Judge, JudgeError, ReplayJudge, SyntheticConfig,
    SyntheticJudge,
};
use numbias::metrics::histogram;
use numbias::pipeline::{self, EvalRun, EvalSettings, RunSummary};
use numbias::prompting::PromptTemplate;
use numbias::report::{
    write_report, AuditReport, CalibrationBlock, CalibrationConfig, FeatureBlock, RunConfig,
    SweepConfig,
};

/// Environment variable holding the bearer token for the HTTP backend.
pub const API_KEY_ENV: &str = "JUDGE_API_KEY";

#[derive(Debug, Parser)]
#[command(name = "numbias", version, about = "Audit and mitigate numerical bias in LLM judges")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate, score and report bias metrics for one setting.
    Audit(CommonArgs),
    /// Audit plus importance-weighted calibration against a gold prior.
    Calibrate(CalibrateArgs),
    /// Repeat the audit across temperatures or score ranges.
    Sweep(SweepArgs),
    /// Correlate input features with the per-example mode ratio.
    Features(FeaturesArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Audit(_) => "audit",
            Command::Calibrate(_) => "calibrate",
            Command::Sweep(_) => "sweep",
            Command::Features(_) => "features",
        }
    }

    pub fn common(&self) -> &CommonArgs {
        match self {
            Command::Audit(c) => c,
            Command::Calibrate(a) => &a.common,
            Command::Sweep(a) => &a.common,
            Command::Features(a) => &a.common,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    Http,
    Synthetic,
    Replay,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::Http => "http",
            Backend::Synthetic => "synthetic",
            Backend::Replay => "replay",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Dataset in JSON Lines, one record per example.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "mtqe")]
    pub task: Task,
    /// Score range stated in the prompt, as MIN:MAX.
    #[arg(long, default_value = "0:9")]
    pub range: ScoreRange,
    #[arg(long, default_value_t = 0.7)]
    pub temperature: f64,
    /// Generations sampled per example.
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
    #[arg(long, default_value_t = 5)]
    pub max_tokens: u32,
    #[arg(long, value_enum, default_value = "http")]
    pub backend: Backend,
    /// Base URL of an OpenAI-compatible server (http backend).
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Required for the synthetic backend; also seeds the marginal pool.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 4)]
    pub parallelism: usize,
    #[arg(long, default_value = "numbias_report.json")]
    pub out: PathBuf,
    /// Replay cache: read by the replay backend, appended to by the others.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Span of the raw gold scores as LO:HI; defaults to the task's span.
    #[arg(long, value_parser = parse_span)]
    pub gold_span: Option<(f64, f64)>,
    /// Prompt template file replacing the built-in one.
    #[arg(long)]
    pub template: Option<PathBuf>,
    /// Score the synthetic judge concentrates on; defaults to range max - 1.
    #[arg(long)]
    pub synthetic_mode: Option<i64>,
    #[arg(long, default_value_t = 0.9)]
    pub synthetic_lambda: f64,
    #[arg(long, default_value_t = 0.7)]
    pub synthetic_ref_temperature: f64,
    #[arg(long, default_value_t = 1)]
    pub synthetic_noise: u32,
    /// Retries after a failed HTTP request.
    #[arg(long, default_value_t = 3)]
    pub retries: u32,
    #[arg(long, default_value_t = 60)]
    pub timeout_secs: u64,
    /// Send one HTTP request per sample instead of using the `n` parameter.
    #[arg(long)]
    pub no_n: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Prior {
    /// Beta distribution fitted to the calibration gold scores.
    Beta,
    /// The judge's own label marginal; calibration becomes the identity.
    Marginal,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Gold scores: bare numbers or records with a `gold` field, one per line.
    #[arg(long)]
    pub calibration_data: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub marginal_pool: usize,
    #[arg(long, default_value_t = 1.0)]
    pub smoothing: f64,
    #[arg(long, value_enum, default_value = "beta")]
    pub prior: Prior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Temperature,
    Range,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value = "temperature")]
    pub axis: Axis,
    /// Comma-separated temperatures; defaults to 0.4,0.7,1.0,1.3.
    #[arg(long, value_delimiter = ',')]
    pub temperatures: Option<Vec<f64>>,
    /// Comma-separated ranges; defaults to 1:5,0:9,1:100.
    #[arg(long, value_delimiter = ',')]
    pub ranges: Option<Vec<ScoreRange>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PplProvider {
    None,
    Mock,
}

#[derive(Debug, Clone, Args)]
pub struct FeaturesArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Source of token log-probabilities for the perplexity features.
    #[arg(long, value_enum, default_value = "none")]
    pub ppl_provider: PplProvider,
}

fn parse_span(s: &str) -> Result<(f64, f64), String> {
    let bad = || format!("expected LO:HI with LO < HI, got `{s}`");
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if lo.is_finite() && hi.is_finite() && lo < hi {
        Ok((lo, hi))
    } else {
        Err(bad())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    /// Bad invocation; nothing ran.
    Usage(String),
    /// The run failed; a partial report was written if possible.
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Failed(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

/// Runs one command and returns the report path.
pub fn run(cli: &Cli) -> Result<PathBuf, CliError> {
    match &cli.command {
        Command::Audit(c) => cmd_audit(c),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Features(a) => cmd_features(a),
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read_input(path: &Path, what: &str) -> Result<String, CliError> {
    if !path.is_file() {
        return Err(CliError::Usage(format!("{what} not found: {}", path.display())));
    }
    fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {what} {}: {e}", path.display())))
}

/// Validated inputs shared by every command.
struct Context {
    args: CommonArgs,
    data_text: String,
    seed: u64,
    gold_span: (f64, f64),
    synthetic: SyntheticConfig,
    run_config: RunConfig,
}

impl Context {
    fn new(args: &CommonArgs) -> Result<Self, CliError> {
        let a = args.clone();
        match a.backend {
            Backend::Synthetic if a.seed.is_none() => {
                return Err(CliError::Usage("--seed is required for the synthetic backend".into()))
            }
            Backend::Http if a.endpoint.is_none() => {
                return Err(CliError::Usage("--endpoint is required for the http backend".into()))
            }
            Backend::Http if a.model.is_none() => {
                return Err(CliError::Usage("--model is required for the http backend".into()))
            }
            Backend::Replay => match &a.cache {
                None => return Err(CliError::Usage("--cache is required for the replay backend".into())),
                Some(p) if !p.is_file() => {
                    return Err(CliError::Usage(format!("replay cache not found: {}", p.display())))
                }
                Some(_) => {}
            },
            _ => {}
        }
        if a.parallelism == 0 {
            return Err(CliError::Usage("--parallelism must be at least 1".into()));
        }
        let cfg = GenerationConfig {
            n_samples: a.samples,
            temperature: a.temperature,
            max_tokens: a.max_tokens,
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;

        let data_text = read_input(&a.data, "dataset")?;
        let seed = a.seed.unwrap_or(0);
        let gold_span = a.gold_span.unwrap_or_else(|| a.task.default_gold_span());
        let synthetic = SyntheticConfig {
            mode_value: a.synthetic_mode,
            base_concentration: a.synthetic_lambda,
            reference_temperature: a.synthetic_ref_temperature,
            noise_halfwidth: a.synthetic_noise,
        };
        let run_config = RunConfig {
            task: a.task,
            data: a.data.display().to_string(),
            data_sha256: Some(sha256_hex(data_text.as_bytes())),
            range: a.range,
            gold_span: [gold_span.0, gold_span.1],
            template: a
                .template
                .as_ref()
                .map_or_else(|| "builtin".to_string(), |p| p.display().to_string()),
            temperature: a.temperature,
            n_samples: a.samples,
            max_tokens: a.max_tokens,
            backend: a.backend.as_str().into(),
            model: a.model.clone(),
            endpoint: a.endpoint.clone(),
            cache: a.cache.as_ref().map(|p| p.display().to_string()),
            seed: Some(seed),
            parallelism: a.parallelism,
            synthetic: (a.backend == Backend::Synthetic).then(|| synthetic.clone()),
            calibration: None,
            sweep: None,
            perplexity_provider: None,
        };
        Ok(Self {
            args: a,
            data_text,
            seed,
            gold_span,
            synthetic,
            run_config,
        })
    }

    fn settings(&self) -> EvalSettings {
        EvalSettings {
            range: self.args.range,
            cfg: GenerationConfig {
                n_samples: self.args.samples,
                temperature: self.args.temperature,
                max_tokens: self.args.max_tokens,
            },
            gold_span: self.gold_span,
            parallelism: self.args.parallelism,
            record_to: match self.args.backend {
                Backend::Replay => None,
                _ => self.args.cache.clone(),
            },
        }
    }

    fn examples(&self) -> Result<Vec<Example>, String> {
        dataset::parse_dataset(&self.data_text, self.args.task)
            .map_err(|e| format!("dataset {}: {e}", self.args.data.display()))
    }

    fn template(&self) -> Result<PromptTemplate, String> {
        match &self.args.template {
            None => Ok(PromptTemplate::builtin(self.args.task)),
            Some(p) => {
                let body = fs::read_to_string(p)
                    .map_err(|e| format!("cannot read template {}: {e}", p.display()))?;
                PromptTemplate::parse(self.args.task, &body)
                    .map_err(|e| format!("template {}: {e}", p.display()))
            }
        }
    }

    fn judge(&self, range: ScoreRange) -> Result<Box<dyn Judge>, JudgeError> {
        let a = &self.args;
        Ok(match a.backend {
            Backend::Synthetic => Box::new(SyntheticJudge::new(self.synthetic.params(range, self.seed))),
            Backend::Replay => Box::new(ReplayJudge::open(a.cache.as_deref().expect("checked"))?),
            Backend::Http => {
                let mut cfg = HttpConfig::new(
                    a.endpoint.clone().expect("checked"),
                    a.model.clone().expect("checked"),
                );
                cfg.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
                cfg.max_retries = a.retries;
                cfg.timeout = Duration::from_secs(a.timeout_secs);
                cfg.use_n = !a.no_n;
                Box::new(HttpJudge::new(cfg)?)
            }
        })
    }

    /// Loads inputs and runs the pipeline at the configured setting.
    fn evaluate(&self) -> Result<(Vec<Example>, EvalRun), String> {
        let examples = self.examples()?;
        let template = self.template()?;
        let judge = self.judge(self.args.range).map_err(|e| e.to_string())?;
        info!(
            "evaluating {} examples with the {} backend",
            examples.len(),
            judge.backend_name()
        );
        let run = pipeline::evaluate(&examples, &template, judge.as_ref(), &self.settings())
            .map_err(|e| e.to_string())?;
        Ok((examples, run))
    }
}

type Sidecars = Vec<(&'static str, String)>;

fn summary_sidecars(run: &EvalRun, s: &RunSummary, out: &mut Sidecars) {
    out.push(("model_hist", s.model_histogram.to_csv()));
    out.push(("raw_hist", s.raw_sample_histogram.to_csv()));
    out.push(("gold_hist", s.gold_histogram.to_csv()));
    out.push(("per_example", pipeline::per_example_csv(run, &run.final_scores)));
}

/// Writes the report, folding a failed outcome into its error field.
fn finish(
    out: &Path,
    mut report: AuditReport,
    sidecars: Sidecars,
    outcome: Result<(), String>,
) -> Result<PathBuf, CliError> {
    if let Err(e) = &outcome {
        report.error = Some(e.clone());
    }
    write_report(out, &report, &sidecars)
        .map_err(|e| CliError::Failed(format!("cannot write report {}: {e}", out.display())))?;
    match outcome {
        Ok(()) => Ok(out.to_path_buf()),
        Err(e) => Err(CliError::Failed(e)),
    }
}

pub fn cmd_audit(args: &CommonArgs) -> Result<PathBuf, CliError> {
    let ctx = Context::new(args)?;
    let mut report = AuditReport::new("audit", ctx.run_config.clone());
    let mut sidecars = Sidecars::new();
    let outcome = ctx.evaluate().map(|(_, run)| {
        let s = pipeline::summarize(&run);
        summary_sidecars(&run, &s, &mut sidecars);
        report = report.clone().with_summary(&s);
    });
    finish(&args.out, report, sidecars, outcome)
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> Result<PathBuf, CliError> {
    let mut ctx = Context::new(&args.common)?;
    let cal_text = read_input(&args.calibration_data, "calibration data")?;
    let cal_name = args.calibration_data.display().to_string();
    ctx.run_config.calibration = Some(CalibrationConfig {
        calibration_data: cal_name.clone(),
        calibration_data_sha256: Some(sha256_hex(cal_text.as_bytes())),
        marginal_pool: args.marginal_pool,
        smoothing: args.smoothing,
        prior: match args.prior {
            Prior::Beta => "beta",
            Prior::Marginal => "marginal",
        }
        .into(),
    });
    let mut report = AuditReport::new("calibrate", ctx.run_config.clone());
    let mut sidecars = Sidecars::new();

    let outcome = (|| -> Result<(), String> {
        let gold = dataset::parse_gold_values(&cal_text)
            .map_err(|e| format!("calibration data {cal_name}: {e}"))?;
        if gold.is_empty() {
            return Err(format!("calibration data {cal_name} contains no gold scores"));
        }
        let (_, run) = ctx.evaluate()?;
        let raw = pipeline::summarize(&run);
        summary_sidecars(&run, &raw, &mut sidecars);
        report = report.clone().with_summary(&raw);

        let range = run.range;
        let rescaled = dataset::rescale_gold(&gold, ctx.gold_span.0, ctx.gold_span.1, range)
            .map_err(|e| format!("calibration data {cal_name}: {e}"))?;
        let pool = draw_marginal_pool(&run.sample_sets, args.marginal_pool, ctx.seed);
        let p = estimate_marginal(&pool, range, args.smoothing).map_err(|e| e.to_string())?;
        let (beta, q) = match args.prior {
            Prior::Beta => {
                let b = fit_beta(&rescaled.values, range)
                    .map_err(|e| format!("calibration data {cal_name}: {e}"))?;
                let q = interval_masses(&b, range).map_err(|e| e.to_string())?;
                (Some(b), q)
            }
            Prior::Marginal => (None, GoldPrior::from_marginal(&p)),
        };
        let calibrated = calibrate_dataset(&run.sample_sets, &p, &q).map_err(|e| e.to_string())?;
        let cal = pipeline::summarize_scores(&run, &calibrated);

        sidecars.push(("p_table", p.table.to_csv("p")));
        sidecars.push(("q_table", q.table.to_csv("q")));
        sidecars.push(("per_example_calibrated", pipeline::per_example_csv(&run, &calibrated)));
        let present: Vec<f64> = calibrated.iter().filter_map(|s| s.value).collect();
        report.calibration = Some(CalibrationBlock {
            n_gold: gold.len(),
            beta,
            p_table: p,
            q_table: q,
            kurtosis_calibrated: cal.kurtosis_model,
            r_calibrated: cal.correlation.r,
            p_calibrated: cal.correlation.p,
            significant_calibrated: cal.correlation.significant,
            n_calibrated: present.len(),
            calibrated_histogram: histogram(&present, range),
        });
        Ok(())
    })();
    finish(&args.common.out, report, sidecars, outcome)
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<PathBuf, CliError> {
    let mut ctx = Context::new(&args.common)?;
    let mut spec = SweepSpec::new(match args.axis {
        Axis::Temperature => SweepAxis::Temperature,
        Axis::Range => SweepAxis::Range,
    });
    if let Some(ts) = &args.temperatures {
        spec.temperatures = ts.clone();
    }
    if let Some(rs) = &args.ranges {
        spec.ranges = rs.clone();
    }
    spec.fixed_temperature = args.common.temperature;
    spec.fixed_range = args.common.range;
    if spec.settings().is_empty() {
        return Err(CliError::Usage("sweep has no settings".into()));
    }
    ctx.run_config.sweep = Some(SweepConfig {
        axis: spec.axis,
        temperatures: spec.temperatures.clone(),
        ranges: spec.ranges.clone(),
        fixed_temperature: spec.fixed_temperature,
        fixed_range: spec.fixed_range,
    });
    let mut report = AuditReport::new("sweep", ctx.run_config.clone());
    let mut sidecars = Sidecars::new();

    let outcome = (|| -> Result<(), String> {
        let examples = ctx.examples()?;
        let template = ctx.template()?;
        let judge_for = |s: &SweepSetting| ctx.judge(s.range);
        let result = analysis::run_sweep(&examples, &template, &judge_for, &ctx.settings(), &spec);
        sidecars.push(("sweep", result.to_csv()));
        let failed = result.entries.iter().filter(|e| e.error.is_some()).count();
        let total = result.entries.len();
        report.sweep = Some(result);
        if failed > 0 {
            return Err(format!("{failed} of {total} sweep settings failed"));
        }
        Ok(())
    })();
    finish(&args.common.out, report, sidecars, outcome)
}

pub fn cmd_features(args: &FeaturesArgs) -> Result<PathBuf, CliError> {
    let mut ctx = Context::new(&args.common)?;
    let provider: Option<&dyn LogProbProvider> = match args.ppl_provider {
        PplProvider::None => None,
        PplProvider::Mock => Some(&MockLogProbProvider),
    };
    ctx.run_config.perplexity_provider = provider.map(|p| p.name().to_string());
    let mut report = AuditReport::new("features", ctx.run_config.clone());
    let mut sidecars = Sidecars::new();

    let outcome = ctx.evaluate().map(|(examples, run)| {
        let s = pipeline::summarize(&run);
        summary_sidecars(&run, &s, &mut sidecars);
        let ratios = pipeline::mode_ratios(&run.sample_sets, s.mode);
        let features = analysis::compute_features(&examples, provider);
        let names: &[&'static str] = if provider.is_some() {
            &FEATURE_NAMES
        } else {
            &FEATURE_NAMES[..2]
        };
        let rows = feature_correlation(&features, &ratios, names);
        sidecars.push(("features", feature_table_csv(&rows)));
        report = report.clone().with_summary(&s);
        report.features = Some(FeatureBlock { rows });
    });
    finish(&args.common.out, report, sidecars, outcome)
}
