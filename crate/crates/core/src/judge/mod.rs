//! Judge backends producing raw text generations for a prompt.
//!
//! Three interchangeable backends implement [`Judge`]: an OpenAI-compatible
//! HTTP client ([`HttpJudge`]), a recorded transcript ([`ReplayJudge`]) and a
//! seeded synthetic judge with a tunable preference for one score
//! ([`SyntheticJudge`]).

mod http;
mod replay;
mod synthetic;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::ScoreRange;

pub use http::{parse_chat_response, HttpConfig, HttpJudge};
pub use replay::{parse_cache, CacheRecord, ReplayCache, ReplayJudge};
pub use synthetic::{SyntheticConfig, SyntheticJudge, SyntheticJudgeParams};

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("example {example_id}: transport failed after {attempts} attempt(s){}: {message}",
        .status.map(|s| format!(" (last status {s})")).unwrap_or_default())]
    Transport {
        example_id: String,
        attempts: u32,
        status: Option<u16>,
        message: String,
    },
    #[error("example {example_id}: HTTP status {status}: {body}")]
    Status {
        example_id: String,
        status: u16,
        body: String,
    },
    #[error("example {example_id}: malformed response: {message}")]
    MalformedResponse { example_id: String, message: String },
    #[error("replay cache has no entry for example {example_id} (fingerprint {fingerprint})")]
    CacheMiss {
        example_id: String,
        fingerprint: String,
    },
    #[error("replay cache {path}, line {line}: {message}")]
    CacheFormat {
        path: String,
        line: usize,
        message: String,
    },
    #[error("replay cache {path}: {source}")]
    CacheIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid judge configuration: {0}")]
    Config(String),
}

/// Sampling settings sent to the judge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub n_samples: usize,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            n_samples: 10,
            temperature: 0.7,
            max_tokens: 5,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), JudgeError> {
        if self.n_samples == 0 {
            return Err(JudgeError::Config("n_samples must be positive".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(JudgeError::Config(format!(
                "temperature must be a finite value >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(JudgeError::Config("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Stable key for the replay cache: sampling settings plus a digest of
    /// the prompt, so one cache can hold several ranges or templates.
    pub fn fingerprint(&self, prompt: &str) -> String {
        let prompt_digest = Sha256::digest(prompt.as_bytes());
        let canonical = format!(
            "temperature={:?};n_samples={};max_tokens={};prompt={}",
            self.temperature,
            self.n_samples,
            self.max_tokens,
            hex::encode(prompt_digest)
        );
        hex::encode(&Sha256::digest(canonical.as_bytes())[..16])
    }
}

/// The raw texts returned for one example, in generation order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawGeneration {
    pub example_id: String,
    pub texts: Vec<String>,
}

/// Everything a backend may need to answer one example.
#[derive(Debug, Clone, Copy)]
pub struct GenerationRequest<'a> {
    pub example_id: &'a str,
    pub prompt: &'a str,
    /// Gold score already mapped into `range`; only the synthetic judge reads it.
    pub gold_rescaled: f64,
    pub range: ScoreRange,
    pub cfg: &'a GenerationConfig,
}

pub trait Judge: Send + Sync {
    fn generate(&self, req: &GenerationRequest<'_>) -> Result<RawGeneration, JudgeError>;

    /// Short backend name recorded in reports.
    fn backend_name(&self) -> &'static str;
}
