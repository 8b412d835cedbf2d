//! Text-completion backends.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("backend timed out")]
    Timeout,
    #[error("backend transport error: {message}")]
    Transport { retryable: bool, message: String },
    #[error("no stub fixture for prompt hash {hash}")]
    MissingFixture { hash: String },
    #[error("backend configuration: {0}")]
    Config(String),
}

impl LlmError {
    pub fn is_retryable(&self) -> bool {
        match self {
            LlmError::Timeout => true,
            LlmError::Transport { retryable, .. } => *retryable,
            LlmError::MissingFixture { .. } | LlmError::Config(_) => false,
        }
    }
}

/// Sampling parameters of one completion request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f64,
    pub max_tokens: u32,
    /// Position of the request within an ensemble; distinguishes otherwise
    /// identical requests.
    pub run_index: u32,
}

/// `send(prompt, params) -> completion`.
pub trait LlmBackend: Sync {
    fn complete(&self, prompt: &str, params: &DecodingParams) -> Result<String, LlmError>;
}

/// Hex SHA-256 of a prompt: the stub fixture key.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmBackendConfig {
    pub endpoint_url: String,
    pub model_name: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_timeout")]
    pub timeout_seconds: u64,
    /// Environment variable holding a bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
}

fn default_temperature() -> f64 {
    0.6
}
fn default_max_tokens() -> u32 {
    2048
}
fn default_timeout() -> u64 {
    120
}

impl LlmBackendConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !(self.temperature >= 0.0) {
            return Err(LlmError::Config(format!("temperature {} must be >= 0", self.temperature)));
        }
        if self.timeout_seconds == 0 {
            return Err(LlmError::Config("timeout_seconds must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    input: &'a str,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct CompletionResponse {
    #[serde(alias = "text")]
    completion: String,
}

/// JSON-over-HTTP backend: `POST {model, input, temperature, max_tokens}`,
/// response `{"completion": "..."}`.
pub struct HttpLlmBackend {
    config: LlmBackendConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl HttpLlmBackend {
    pub fn new(config: LlmBackendConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| LlmError::Config(format!("environment variable {var} is not set")))?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_seconds))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(Self { config, client, api_key })
    }
}

impl LlmBackend for HttpLlmBackend {
    fn complete(&self, prompt: &str, params: &DecodingParams) -> Result<String, LlmError> {
        let body = CompletionRequest {
            model: &self.config.model_name,
            input: prompt,
            temperature: params.temperature,
            max_tokens: params.max_tokens,
        };
        let mut req = self.client.post(&self.config.endpoint_url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                LlmError::Timeout
            } else {
                LlmError::Transport { retryable: true, message: e.to_string() }
            }
        })?;
        let status = resp.status();
        if !status.is_success() {
            let retryable = status.is_server_error() || status.as_u16() == 429;
            return Err(LlmError::Transport { retryable, message: format!("HTTP {status}") });
        }
        let parsed: CompletionResponse =
            resp.json().map_err(|e| LlmError::Transport { retryable: false, message: format!("bad response body: {e}") })?;
        Ok(parsed.completion)
    }
}

/// Prompt-hash → completions. Run `i` receives `completions[i % len]`.
pub type FixtureMap = BTreeMap<String, Vec<String>>;

/// Deterministic backend replaying recorded completions.
#[derive(Debug, Clone, Default)]
pub struct StubBackend {
    fixtures: FixtureMap,
}

impl StubBackend {
    pub fn new(fixtures: FixtureMap) -> Self {
        Self { fixtures }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        let fixtures = serde_json::from_str(&text).map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        Ok(Self { fixtures })
    }

    /// Registers completions for an exact prompt.
    pub fn insert(&mut self, prompt: &str, completions: Vec<String>) {
        self.fixtures.insert(prompt_hash(prompt), completions);
    }

    pub fn fixtures(&self) -> &FixtureMap {
        &self.fixtures
    }
}

impl LlmBackend for StubBackend {
    fn complete(&self, prompt: &str, params: &DecodingParams) -> Result<String, LlmError> {
        let hash = prompt_hash(prompt);
        match self.fixtures.get(&hash) {
            Some(c) if !c.is_empty() => Ok(c[params.run_index as usize % c.len()].clone()),
            _ => Err(LlmError::MissingFixture { hash }),
        }
    }
}

/// Forwards to an inner backend and records every completion by prompt hash
/// and run index, producing a fixture map for [`StubBackend`].
pub struct RecordingBackend<B> {
    inner: B,
    recorded: Mutex<FixtureMap>,
}

impl<B: LlmBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self { inner, recorded: Mutex::new(FixtureMap::new()) }
    }

    pub fn into_fixtures(self) -> FixtureMap {
        self.recorded.into_inner().expect("recorder poisoned")
    }
}

impl<B: LlmBackend> LlmBackend for RecordingBackend<B> {
    fn complete(&self, prompt: &str, params: &DecodingParams) -> Result<String, LlmError> {
        let out = self.inner.complete(prompt, params)?;
        let mut rec = self.recorded.lock().expect("recorder poisoned");
        let slot = rec.entry(prompt_hash(prompt)).or_default();
        let i = params.run_index as usize;
        if slot.len() <= i {
            let fill = slot.last().cloned().unwrap_or_default();
            slot.resize(i + 1, fill);
        }
        slot[i] = out.clone();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(run_index: u32) -> DecodingParams {
        DecodingParams { temperature: 0.6, max_tokens: 100, run_index }
    }

    #[test]
    fn stub_cycles_by_run_index() {
        let mut stub = StubBackend::default();
        stub.insert("p", vec!["a".into(), "b".into()]);
        assert_eq!(stub.complete("p", &params(0)).unwrap(), "a");
        assert_eq!(stub.complete("p", &params(3)).unwrap(), "b");
    }

    #[test]
    fn missing_fixture_names_hash() {
        let err = StubBackend::default().complete("unknown prompt", &params(0)).unwrap_err();
        assert_eq!(err, LlmError::MissingFixture { hash: prompt_hash("unknown prompt") });
        assert!(err.to_string().contains(&prompt_hash("unknown prompt")));
    }

    #[test]
    fn prompt_hash_is_sha256_hex() {
        assert_eq!(prompt_hash("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn recording_replays_identically() {
        struct Echo;
        impl LlmBackend for Echo {
            fn complete(&self, prompt: &str, params: &DecodingParams) -> Result<String, LlmError> {
                Ok(format!("{prompt}#{}", params.run_index))
            }
        }
        let rec = RecordingBackend::new(Echo);
        for i in [0, 1, 2, 4] {
            rec.complete("q", &params(i)).unwrap();
        }
        let stub = StubBackend::new(rec.into_fixtures());
        assert_eq!(stub.complete("q", &params(4)).unwrap(), "q#4");
        assert_eq!(stub.complete("q", &params(1)).unwrap(), "q#1");
    }

    #[test]
    fn config_validation() {
        let cfg = LlmBackendConfig {
            endpoint_url: "http://localhost".into(),
            model_name: "m".into(),
            temperature: -1.0,
            max_output_tokens: 1,
            timeout_seconds: 1,
            api_key_env: None,
        };
        assert!(cfg.validate().is_err());
        assert!(LlmBackendConfig { temperature: 0.0, timeout_seconds: 0, ..cfg.clone() }.validate().is_err());
        assert!(LlmBackendConfig { temperature: 0.0, ..cfg }.validate().is_ok());
    }
}
