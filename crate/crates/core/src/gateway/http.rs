use std::collections::BTreeMap;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{Backend, BackendError, CompletionRequest, Purpose};

/// Client for the widely implemented `POST /chat/completions` JSON exchange.
pub struct ChatCompletionsBackend {
    endpoint: String,
    api_key: String,
    default_model: String,
    models: BTreeMap<Purpose, String>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

impl ChatCompletionsBackend {
    pub fn new(
        endpoint: String,
        api_key: String,
        default_model: String,
        models: BTreeMap<Purpose, String>,
    ) -> Self {
        ChatCompletionsBackend {
            endpoint,
            api_key,
            default_model,
            models,
        }
    }

    pub fn model_for(&self, purpose: Purpose) -> &str {
        self.models
            .get(&purpose)
            .map(String::as_str)
            .unwrap_or(&self.default_model)
    }

    fn request_body(&self, req: &CompletionRequest) -> serde_json::Value {
        let mut body = json!({
            "model": self.model_for(req.purpose),
            "messages": [{ "role": "user", "content": req.prompt }],
        });
        if let Some(hint) = req.max_output_hint {
            body["max_tokens"] = json!(hint);
        }
        body
    }
}

fn classify(err: ureq::Error) -> BackendError {
    match err {
        ureq::Error::Timeout(_) => BackendError::Timeout,
        ureq::Error::Io(e) => BackendError::Transient(e.to_string()),
        ureq::Error::HostNotFound | ureq::Error::ConnectionFailed => {
            BackendError::Transient(err.to_string())
        }
        other => BackendError::Protocol(other.to_string()),
    }
}

fn parse_response(raw: &str) -> Result<String, BackendError> {
    let parsed: ChatResponse =
        serde_json::from_str(raw).map_err(|e| BackendError::Protocol(e.to_string()))?;
    parsed
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| BackendError::Protocol("response has no choice text".into()))
}

impl Backend for ChatCompletionsBackend {
    fn id(&self) -> &str {
        "chat-completions"
    }

    fn send(&self, req: &CompletionRequest, timeout: Duration) -> Result<String, BackendError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut resp = agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(self.request_body(req))
            .map_err(classify)?;
        let status = resp.status().as_u16();
        let raw = resp
            .body_mut()
            .read_to_string()
            .map_err(classify)?;
        match status {
            200..=299 => parse_response(&raw),
            401 | 403 => Err(BackendError::Auth(format!("status {status}"))),
            408 | 429 | 500..=599 => Err(BackendError::Transient(format!("status {status}"))),
            _ => Err(BackendError::Protocol(format!("status {status}: {raw}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_first_choice() {
        let raw = r#"{"id":"x","choices":[{"index":0,"message":{"role":"assistant","content":"hi"}}]}"#;
        assert_eq!(parse_response(raw).unwrap(), "hi");
    }

    #[test]
    fn malformed_bodies_are_protocol_errors() {
        assert!(matches!(parse_response("not json"), Err(BackendError::Protocol(_))));
        assert!(matches!(parse_response(r#"{"choices":[]}"#), Err(BackendError::Protocol(_))));
    }

    #[test]
    fn model_map_falls_back_to_default() {
        let mut models = BTreeMap::new();
        models.insert(Purpose::Outline, "cheap".to_string());
        let b = ChatCompletionsBackend::new("http://x".into(), "k".into(), "big".into(), models);
        assert_eq!(b.model_for(Purpose::Outline), "cheap");
        assert_eq!(b.model_for(Purpose::Generation), "big");
        let mut req = CompletionRequest::new(Purpose::Outline, "p");
        req.max_output_hint = Some(64);
        let body = b.request_body(&req);
        assert_eq!(body["model"], "cheap");
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["max_tokens"], 64);
    }

    #[test]
    fn unreachable_endpoint_is_transient() {
        let b = ChatCompletionsBackend::new(
            "http://127.0.0.1:9/v1/chat/completions".into(),
            "k".into(),
            "m".into(),
            BTreeMap::new(),
        );
        let err = b
            .send(&CompletionRequest::new(Purpose::Generation, "p"), Duration::from_secs(2))
            .unwrap_err();
        assert!(matches!(err, BackendError::Transient(_) | BackendError::Timeout), "{err:?}");
    }
}
