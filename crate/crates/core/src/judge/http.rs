use std::thread;
use std::time::Duration;

use log::{debug, warn};
use reqwest::blocking::Client;
use serde::Deserialize;
use serde_json::json;

use super::{GenerationRequest, Judge, JudgeError, RawGeneration};

/// Connection settings for an OpenAI-compatible chat-completions endpoint.
#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Base URL (`http://host/v1`) or the full `.../chat/completions` URL.
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    /// Extra attempts after the first failed one.
    pub max_retries: u32,
    pub backoff: Duration,
    pub timeout: Duration,
    /// Ask for all samples in one request via `n`. When false, or when the
    /// server returns fewer choices, the rest are fetched one request at a time.
    pub use_n: bool,
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            max_retries: 3,
            backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(60),
            use_n: true,
        }
    }

    pub fn completions_url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    #[serde(default)]
    index: Option<usize>,
    #[serde(default)]
    message: Option<ChoiceMessage>,
    /// Legacy completions-style payloads.
    #[serde(default)]
    text: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Extracts completion texts from a chat-completions response body, ordered
/// by choice index. A choice with null content yields an empty string.
pub fn parse_chat_response(body: &[u8]) -> Result<Vec<String>, String> {
    let resp: ChatResponse = serde_json::from_slice(body).map_err(|e| e.to_string())?;
    let mut choices: Vec<(usize, String)> = resp
        .choices
        .into_iter()
        .enumerate()
        .map(|(pos, c)| {
            let text = c
                .message
                .and_then(|m| m.content)
                .or(c.text)
                .unwrap_or_default();
            (c.index.unwrap_or(pos), text)
        })
        .collect();
    choices.sort_by_key(|(i, _)| *i);
    Ok(choices.into_iter().map(|(_, t)| t).collect())
}

#[derive(Debug)]
pub struct HttpJudge {
    config: HttpConfig,
    client: Client,
}

enum Attempt {
    Retryable { status: Option<u16>, message: String },
    Fatal(JudgeError),
}

impl HttpJudge {
    pub fn new(config: HttpConfig) -> Result<Self, JudgeError> {
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| JudgeError::Config(format!("cannot build HTTP client: {e}")))?;
        Ok(Self { config, client })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn request_once(
        &self,
        example_id: &str,
        body: &serde_json::Value,
    ) -> Result<Vec<String>, Attempt> {
        let mut rb = self.client.post(self.config.completions_url()).json(body);
        if let Some(key) = &self.config.api_key {
            rb = rb.bearer_auth(key);
        }
        let resp = rb.send().map_err(|e| Attempt::Retryable {
            status: None,
            message: e.to_string(),
        })?;
        let status = resp.status();
        let bytes = resp.bytes().map_err(|e| Attempt::Retryable {
            status: Some(status.as_u16()),
            message: e.to_string(),
        })?;
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Attempt::Retryable {
                status: Some(status.as_u16()),
                message: String::from_utf8_lossy(&bytes).into_owned(),
            });
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(JudgeError::Status {
                example_id: example_id.to_string(),
                status: status.as_u16(),
                body: String::from_utf8_lossy(&bytes).into_owned(),
            }));
        }
        parse_chat_response(&bytes).map_err(|message| {
            Attempt::Fatal(JudgeError::MalformedResponse {
                example_id: example_id.to_string(),
                message,
            })
        })
    }

    fn request_with_retries(
        &self,
        example_id: &str,
        body: &serde_json::Value,
    ) -> Result<Vec<String>, JudgeError> {
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.request_once(example_id, body) {
                Ok(texts) => return Ok(texts),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retryable { status, message }) => {
                    if attempts > self.config.max_retries {
                        return Err(JudgeError::Transport {
                            example_id: example_id.to_string(),
                            attempts,
                            status,
                            message,
                        });
                    }
                    warn!("example {example_id}: attempt {attempts} failed ({message}); retrying");
                    thread::sleep(self.config.backoff * 2u32.saturating_pow(attempts - 1));
                }
            }
        }
    }
}

impl Judge for HttpJudge {
    fn generate(&self, req: &GenerationRequest<'_>) -> Result<RawGeneration, JudgeError> {
        let want = req.cfg.n_samples;
        let mut texts = Vec::with_capacity(want);
        while texts.len() < want {
            let n = if self.config.use_n { want - texts.len() } else { 1 };
            let mut body = json!({
                "model": self.config.model,
                "messages": [{"role": "user", "content": req.prompt}],
                "temperature": req.cfg.temperature,
                "max_tokens": req.cfg.max_tokens,
            });
            if self.config.use_n {
                body["n"] = json!(n);
            }
            let got = self.request_with_retries(req.example_id, &body)?;
            if got.is_empty() {
                return Err(JudgeError::MalformedResponse {
                    example_id: req.example_id.to_string(),
                    message: "response has no choices".into(),
                });
            }
            debug!("example {}: received {} choice(s)", req.example_id, got.len());
            texts.extend(got.into_iter().take(want - texts.len()));
        }
        Ok(RawGeneration {
            example_id: req.example_id.to_string(),
            texts,
        })
    }

    fn backend_name(&self) -> &'static str {
        "http"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn url_building() {
        let c = HttpConfig::new("http://localhost:8000/v1/", "m");
        assert_eq!(c.completions_url(), "http://localhost:8000/v1/chat/completions");
        let c = HttpConfig::new("http://h/v1/chat/completions", "m");
        assert_eq!(c.completions_url(), "http://h/v1/chat/completions");
    }

    #[test]
    fn parses_choices_in_index_order() {
        let body = br#"{"choices":[
            {"index":1,"message":{"role":"assistant","content":"7"}},
            {"index":0,"message":{"role":"assistant","content":"8"}},
            {"index":2,"message":{"role":"assistant","content":null}}
        ]}"#;
        assert_eq!(parse_chat_response(body).unwrap(), vec!["8", "7", ""]);
    }

    #[test]
    fn rejects_non_response() {
        assert!(parse_chat_response(b"{}").is_err());
        assert!(parse_chat_response(b"not json").is_err());
    }
}
