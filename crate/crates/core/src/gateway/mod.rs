//! Chat-completion access with retry, timeout and cancellation.
//!
//! All provider traffic in the crate goes through [`CompletionProvider`]. The
//! stock implementation is [`Gateway`], which drives a [`Backend`] (the
//! HTTP chat-completions client or the deterministic [`MockBackend`]) under a
//! [`RetryPolicy`].

mod http;
mod mock;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use http::ChatCompletionsBackend;
pub use mock::{
    Fallback, Matcher, MockBackend, MockFailure, MockReply, MockRule, MockScript, MOCK_FALLBACK_TEXT,
};

/// Environment variable holding the provider credential. The credential is
/// never read from configuration files.
pub const API_KEY_ENV: &str = "REVERSO_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Outline,
    Selection,
    Generation,
    Modification,
}

impl Purpose {
    pub const ALL: [Purpose; 4] = [
        Purpose::Outline,
        Purpose::Selection,
        Purpose::Generation,
        Purpose::Modification,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Purpose::Outline => "outline",
            Purpose::Selection => "selection",
            Purpose::Generation => "generation",
            Purpose::Modification => "modification",
        }
    }
}

impl fmt::Display for Purpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_output_hint: Option<u32>,
    pub purpose: Purpose,
}

impl CompletionRequest {
    pub fn new(purpose: Purpose, prompt: impl Into<String>) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            max_output_hint: None,
            purpose,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    pub text: String,
    pub provider_id: String,
    pub latency: Duration,
    /// Set when the request only succeeded after retrying.
    pub degraded: bool,
    pub attempts: u32,
}

/// Failure of a single attempt against a backend.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("transient failure: {0}")]
    Transient(String),
    #[error("timed out")]
    Timeout,
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("malformed response: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("{purpose} request timed out after {attempts} attempt(s)")]
    Timeout { purpose: Purpose, attempts: u32 },
    #[error("{purpose} request failed after {attempts} attempt(s): {message}")]
    Unavailable {
        purpose: Purpose,
        attempts: u32,
        message: String,
    },
    #[error("provider rejected credentials for {purpose} request: {message}")]
    Auth { purpose: Purpose, message: String },
    #[error("malformed provider response to {purpose} request: {message}")]
    Protocol { purpose: Purpose, message: String },
    #[error("empty prompt for {purpose} request")]
    EmptyPrompt { purpose: Purpose },
    #[error("{purpose} request cancelled")]
    Cancelled { purpose: Purpose },
}

impl GatewayError {
    pub fn purpose(&self) -> Purpose {
        match self {
            GatewayError::Timeout { purpose, .. }
            | GatewayError::Unavailable { purpose, .. }
            | GatewayError::Auth { purpose, .. }
            | GatewayError::Protocol { purpose, .. }
            | GatewayError::EmptyPrompt { purpose }
            | GatewayError::Cancelled { purpose } => *purpose,
        }
    }

    /// Timeouts and transient failures may succeed if the caller tries again later.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            GatewayError::Timeout { .. } | GatewayError::Unavailable { .. }
        )
    }
}

pub trait Backend: Send + Sync {
    fn id(&self) -> &str;
    fn send(&self, req: &CompletionRequest, timeout: Duration) -> Result<String, BackendError>;
}

pub trait CompletionProvider: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, GatewayError>;

    /// Like [`complete`](Self::complete), but a result that arrives after
    /// `cancel` fired is discarded.
    fn complete_cancellable(
        &self,
        req: &CompletionRequest,
        cancel: &CancelToken,
    ) -> Result<CompletionResult, GatewayError> {
        if cancel.is_cancelled() {
            return Err(GatewayError::Cancelled {
                purpose: req.purpose,
            });
        }
        let result = self.complete(req)?;
        if cancel.is_cancelled() {
            return Err(GatewayError::Cancelled {
                purpose: req.purpose,
            });
        }
        Ok(result)
    }
}

#[derive(Debug, Clone, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
            timeout: Duration::from_secs(60),
        }
    }
}

impl RetryPolicy {
    /// No backoff sleeps; for mock-mode runs and tests.
    pub fn immediate(max_attempts: u32) -> Self {
        RetryPolicy {
            max_attempts,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
            ..RetryPolicy::default()
        }
    }

    /// Delay before retry number `retry` (1 for the first retry).
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry.saturating_sub(1)).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

pub struct Gateway {
    backend: Arc<dyn Backend>,
    policy: RetryPolicy,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>, policy: RetryPolicy) -> Self {
        Gateway { backend, policy }
    }

    pub fn policy(&self) -> &RetryPolicy {
        &self.policy
    }

    pub fn from_config(
        config: &GatewayConfig,
        env: impl Fn(&str) -> Option<String>,
    ) -> Result<Self, ConfigError> {
        let policy = config.retry_policy();
        if config.mock {
            let backend = match &config.mock_script {
                Some(path) => {
                    let json = std::fs::read_to_string(path)
                        .map_err(|e| ConfigError::MockScript(format!("{}: {e}", path)))?;
                    let script: MockScript = serde_json::from_str(&json)
                        .map_err(|e| ConfigError::MockScript(format!("{}: {e}", path)))?;
                    MockBackend::from_script(script, Fallback::Synthetic)
                }
                None => MockBackend::synthetic(),
            };
            return Ok(Gateway::new(Arc::new(backend), policy));
        }
        let endpoint = config
            .endpoint
            .clone()
            .ok_or(ConfigError::MissingEndpoint)?;
        let api_key = env(API_KEY_ENV).ok_or(ConfigError::MissingCredential)?;
        let backend = ChatCompletionsBackend::new(
            endpoint,
            api_key,
            config.model.clone(),
            config.model_map()?,
        );
        Ok(Gateway::new(Arc::new(backend), policy))
    }
}

impl CompletionProvider for Gateway {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        let purpose = req.purpose;
        if req.prompt.trim().is_empty() {
            return Err(GatewayError::EmptyPrompt { purpose });
        }
        let started = Instant::now();
        let max_attempts = self.policy.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            let err = match self.backend.send(req, self.policy.timeout) {
                Ok(text) => {
                    return Ok(CompletionResult {
                        text,
                        provider_id: self.backend.id().to_string(),
                        latency: started.elapsed(),
                        degraded: attempt > 1,
                        attempts: attempt,
                    })
                }
                Err(BackendError::Auth(message)) => {
                    return Err(GatewayError::Auth { purpose, message })
                }
                Err(BackendError::Protocol(message)) => {
                    return Err(GatewayError::Protocol { purpose, message })
                }
                Err(BackendError::Timeout) => GatewayError::Timeout {
                    purpose,
                    attempts: attempt,
                },
                Err(BackendError::Transient(message)) => GatewayError::Unavailable {
                    purpose,
                    attempts: attempt,
                    message,
                },
            };
            if attempt >= max_attempts {
                return Err(err);
            }
            let delay = self.policy.backoff(attempt);
            log::warn!("{err}; retrying in {delay:?}");
            if !delay.is_zero() {
                std::thread::sleep(delay);
            }
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("no provider endpoint configured and mock mode is off")]
    MissingEndpoint,
    #[error("environment variable {API_KEY_ENV} is not set")]
    MissingCredential,
    #[error("unknown purpose `{0}` in model map")]
    UnknownPurpose(String),
    #[error("cannot load mock script {0}")]
    MockScript(String),
}

/// Provider settings as they appear in the configuration file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub endpoint: Option<String>,
    pub model: String,
    /// Per-purpose model overrides, keyed by `outline`, `selection`, ...
    pub models: BTreeMap<String, String>,
    pub max_attempts: u32,
    pub timeout_secs: u64,
    pub base_delay_ms: u64,
    pub mock: bool,
    pub mock_script: Option<String>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        let policy = RetryPolicy::default();
        GatewayConfig {
            endpoint: None,
            model: "gpt-4o".to_string(),
            models: BTreeMap::new(),
            max_attempts: policy.max_attempts,
            timeout_secs: policy.timeout.as_secs(),
            base_delay_ms: policy.base_delay.as_millis() as u64,
            mock: false,
            mock_script: None,
        }
    }
}

impl GatewayConfig {
    pub fn mock() -> Self {
        GatewayConfig {
            mock: true,
            base_delay_ms: 0,
            ..GatewayConfig::default()
        }
    }

    /// Applies `REVERSO_ENDPOINT`, `REVERSO_MODEL` and `REVERSO_MOCK` overrides.
    pub fn apply_env(&mut self, env: impl Fn(&str) -> Option<String>) {
        if let Some(endpoint) = env("REVERSO_ENDPOINT") {
            self.endpoint = Some(endpoint);
        }
        if let Some(model) = env("REVERSO_MODEL") {
            self.model = model;
        }
        if let Some(mock) = env("REVERSO_MOCK") {
            self.mock = matches!(mock.as_str(), "1" | "true" | "yes");
        }
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        let base_delay = Duration::from_millis(self.base_delay_ms);
        RetryPolicy {
            max_attempts: self.max_attempts.max(1),
            base_delay,
            max_delay: base_delay.saturating_mul(16),
            timeout: Duration::from_secs(self.timeout_secs.max(1)),
        }
    }

    pub fn model_map(&self) -> Result<BTreeMap<Purpose, String>, ConfigError> {
        self.models
            .iter()
            .map(|(k, v)| {
                let purpose = Purpose::ALL
                    .into_iter()
                    .find(|p| p.as_str() == k)
                    .ok_or_else(|| ConfigError::UnknownPurpose(k.clone()))?;
                Ok((purpose, v.clone()))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gateway(backend: MockBackend, attempts: u32) -> (Gateway, Arc<MockBackend>) {
        let backend = Arc::new(backend);
        (
            Gateway::new(backend.clone(), RetryPolicy::immediate(attempts)),
            backend,
        )
    }

    #[test]
    fn scripted_hash_lookup() {
        let prompt = "summarize this";
        let rule = MockRule::new(Matcher::hash_of(prompt), vec![MockReply::text("canned")]);
        let (gw, _) = gateway(MockBackend::scripted(vec![rule]), 3);
        let res = gw
            .complete(&CompletionRequest::new(Purpose::Generation, prompt))
            .unwrap();
        assert_eq!(res.text, "canned");
        assert!(!res.degraded);
        assert_eq!(res.attempts, 1);
    }

    #[test]
    fn fails_twice_then_succeeds_on_third_attempt() {
        let rule = MockRule::new(
            Matcher::Contains("x".into()),
            vec![
                MockReply::fail(MockFailure::Transient),
                MockReply::fail(MockFailure::Timeout),
                MockReply::text("ok"),
            ],
        );
        let (gw, backend) = gateway(MockBackend::scripted(vec![rule]), 3);
        let res = gw
            .complete(&CompletionRequest::new(Purpose::Outline, "x"))
            .unwrap();
        assert_eq!(res.text, "ok");
        assert_eq!(res.attempts, 3);
        assert!(res.degraded);
        assert_eq!(backend.calls().len(), 3);
    }

    #[test]
    fn permanent_failure_with_cap_one_surfaces_purpose() {
        let rule = MockRule::new(
            Matcher::Contains("x".into()),
            vec![MockReply::fail(MockFailure::Transient)],
        );
        let (gw, backend) = gateway(MockBackend::scripted(vec![rule]), 1);
        let err = gw
            .complete(&CompletionRequest::new(Purpose::Selection, "x"))
            .unwrap_err();
        assert_eq!(err.purpose(), Purpose::Selection);
        assert!(err.to_string().starts_with("selection"));
        assert_eq!(backend.calls().len(), 1);
    }

    #[test]
    fn timeouts_exhaust_cap_then_report_retryable() {
        let rule = MockRule::new(Matcher::Contains("x".into()), vec![MockReply::fail(MockFailure::Timeout)]);
        let (gw, backend) = gateway(MockBackend::scripted(vec![rule]), 3);
        let err = gw
            .complete(&CompletionRequest::new(Purpose::Generation, "x"))
            .unwrap_err();
        assert_eq!(
            err,
            GatewayError::Timeout {
                purpose: Purpose::Generation,
                attempts: 3
            }
        );
        assert!(err.is_retryable());
        assert_eq!(backend.calls().len(), 3);
    }

    #[test]
    fn auth_and_protocol_errors_are_terminal() {
        for (failure, check) in [
            (MockFailure::Auth, "credentials"),
            (MockFailure::Malformed, "malformed"),
        ] {
            let rule = MockRule::new(Matcher::Contains("x".into()), vec![MockReply::fail(failure)]);
            let (gw, backend) = gateway(MockBackend::scripted(vec![rule]), 3);
            let err = gw
                .complete(&CompletionRequest::new(Purpose::Modification, "x"))
                .unwrap_err();
            assert!(err.to_string().contains(check), "{err}");
            assert!(!err.is_retryable());
            assert_eq!(backend.calls().len(), 1);
        }
    }

    #[test]
    fn empty_prompt_rejected_before_backend() {
        let (gw, backend) = gateway(MockBackend::scripted(vec![]), 3);
        let err = gw
            .complete(&CompletionRequest::new(Purpose::Outline, "  "))
            .unwrap_err();
        assert_eq!(err, GatewayError::EmptyPrompt { purpose: Purpose::Outline });
        assert!(backend.calls().is_empty());
    }

    #[test]
    fn cancelled_results_are_discarded() {
        let (gw, _) = gateway(MockBackend::scripted(vec![]), 1);
        let token = CancelToken::new();
        let req = CompletionRequest::new(Purpose::Generation, "p");
        assert!(gw.complete_cancellable(&req, &token).is_ok());
        token.cancel();
        assert_eq!(
            gw.complete_cancellable(&req, &token),
            Err(GatewayError::Cancelled { purpose: Purpose::Generation })
        );
    }

    #[test]
    fn backoff_doubles_up_to_cap() {
        let p = RetryPolicy {
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_millis(350),
            ..RetryPolicy::default()
        };
        assert_eq!(p.backoff(1), Duration::from_millis(100));
        assert_eq!(p.backoff(2), Duration::from_millis(200));
        assert_eq!(p.backoff(3), Duration::from_millis(350));
        assert_eq!(p.backoff(40), Duration::from_millis(350));
    }

    #[test]
    fn config_requires_env_credential() {
        let cfg = GatewayConfig {
            endpoint: Some("http://localhost:1/v1/chat/completions".into()),
            ..GatewayConfig::default()
        };
        assert_eq!(
            Gateway::from_config(&cfg, |_| None).err(),
            Some(ConfigError::MissingCredential)
        );
        assert!(Gateway::from_config(&cfg, |k| (k == API_KEY_ENV).then(|| "k".to_string())).is_ok());
        assert_eq!(
            Gateway::from_config(&GatewayConfig::default(), |_| None).err(),
            Some(ConfigError::MissingEndpoint)
        );
    }

    #[test]
    fn config_env_overrides_and_model_map() {
        let mut cfg = GatewayConfig::default();
        cfg.models.insert("outline".into(), "small".into());
        cfg.apply_env(|k| match k {
            "REVERSO_ENDPOINT" => Some("http://e".into()),
            "REVERSO_MOCK" => Some("true".into()),
            _ => None,
        });
        assert_eq!(cfg.endpoint.as_deref(), Some("http://e"));
        assert!(cfg.mock);
        assert_eq!(cfg.model_map().unwrap()[&Purpose::Outline], "small");
        cfg.models.insert("nonsense".into(), "m".into());
        assert!(matches!(cfg.model_map(), Err(ConfigError::UnknownPurpose(_))));
    }
}
