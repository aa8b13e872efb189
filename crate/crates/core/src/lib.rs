//! Numerical-bias auditing for score-based LLM judges.
//!
//! The pipeline renders a prompt per example, samples several scores from a
//! judge backend, parses/clips/averages them, and measures how concentrated
//! the resulting score distribution is (excess kurtosis, mode ratio) and how
//! well it tracks gold scores (Pearson r). Mitigations are a temperature or
//! score-range sweep and importance-weighted calibration against a Beta
//! prior fitted to gold scores.

pub mod calibration;
pub mod dataset;
pub mod judge;
pub mod metrics;
pub mod prompting;
pub mod scoring;
pub mod special;
pub mod analysis;
pub mod pipeline;
pub mod report;
pub mod synth;
