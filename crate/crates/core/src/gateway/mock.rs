use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, BackendError, CompletionRequest, Purpose};

/// Returned for prompts that match no rule when the fallback is [`Fallback::Fixed`].
pub const MOCK_FALLBACK_TEXT: &str = "[mock provider: no scripted response]";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    Exact(String),
    Contains(String),
    /// Lowercase hex SHA-256 of the full prompt.
    Hash(String),
}

impl Matcher {
    pub fn hash_of(prompt: &str) -> Self {
        Matcher::Hash(prompt_hash(prompt))
    }

    fn matches(&self, prompt: &str) -> bool {
        match self {
            Matcher::Exact(s) => prompt == s,
            Matcher::Contains(s) => prompt.contains(s.as_str()),
            Matcher::Hash(h) => prompt_hash(prompt) == *h,
        }
    }
}

pub fn prompt_hash(prompt: &str) -> String {
    Sha256::digest(prompt.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockFailure {
    Transient,
    Timeout,
    Auth,
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockReply {
    Text(String),
    Fail { fail: MockFailure },
}

impl MockReply {
    pub fn text(s: impl Into<String>) -> Self {
        MockReply::Text(s.into())
    }

    pub fn fail(failure: MockFailure) -> Self {
        MockReply::Fail { fail: failure }
    }
}

/// One scripted entry. Successive matching calls consume `replies` in order;
/// the last reply repeats once the list is exhausted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(flatten)]
    pub matcher: Matcher,
    #[serde(default)]
    pub purpose: Option<Purpose>,
    pub replies: Vec<MockReply>,
}

impl MockRule {
    pub fn new(matcher: Matcher, replies: Vec<MockReply>) -> Self {
        MockRule {
            matcher,
            purpose: None,
            replies,
        }
    }

    pub fn for_purpose(mut self, purpose: Purpose) -> Self {
        self.purpose = Some(purpose);
        self
    }
}

/// JSON form of a mock table: `{"rules": [{"contains": "...", "replies": ["text"]}]}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    pub rules: Vec<MockRule>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fallback {
    Fixed(String),
    /// Derive a plausible response from the prompt's own structure.
    Synthetic,
}

/// Deterministic provider for tests and offline runs.
pub struct MockBackend {
    rules: Vec<MockRule>,
    cursors: Mutex<Vec<usize>>,
    fallback: Fallback,
    delay: Duration,
    calls: Mutex<Vec<CompletionRequest>>,
}

impl MockBackend {
    pub fn new(rules: Vec<MockRule>, fallback: Fallback) -> Self {
        let cursors = Mutex::new(vec![0; rules.len()]);
        MockBackend {
            rules,
            cursors,
            fallback,
            delay: Duration::ZERO,
            calls: Mutex::new(Vec::new()),
        }
    }

    /// Table-driven mock; unmatched prompts get [`MOCK_FALLBACK_TEXT`].
    pub fn scripted(rules: Vec<MockRule>) -> Self {
        MockBackend::new(rules, Fallback::Fixed(MOCK_FALLBACK_TEXT.to_string()))
    }

    pub fn synthetic() -> Self {
        MockBackend::new(Vec::new(), Fallback::Synthetic)
    }

    pub fn from_script(script: MockScript, fallback: Fallback) -> Self {
        MockBackend::new(script.rules, fallback)
    }

    /// Simulated per-call latency, for benchmarks.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn calls(&self) -> Vec<CompletionRequest> {
        self.calls.lock().expect("calls lock").clone()
    }

    pub fn calls_for(&self, purpose: Purpose) -> Vec<CompletionRequest> {
        self.calls()
            .into_iter()
            .filter(|c| c.purpose == purpose)
            .collect()
    }

    pub fn clear_calls(&self) {
        self.calls.lock().expect("calls lock").clear();
    }

    fn scripted_reply(&self, req: &CompletionRequest) -> Option<MockReply> {
        let idx = self.rules.iter().position(|r| {
            r.purpose.is_none_or(|p| p == req.purpose) && r.matcher.matches(&req.prompt)
        })?;
        let rule = &self.rules[idx];
        if rule.replies.is_empty() {
            return None;
        }
        let mut cursors = self.cursors.lock().expect("cursor lock");
        let at = cursors[idx].min(rule.replies.len() - 1);
        cursors[idx] += 1;
        Some(rule.replies[at].clone())
    }
}

impl Backend for MockBackend {
    fn id(&self) -> &str {
        "mock"
    }

    fn send(&self, req: &CompletionRequest, _timeout: Duration) -> Result<String, BackendError> {
        self.calls.lock().expect("calls lock").push(req.clone());
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        match self.scripted_reply(req) {
            Some(MockReply::Text(t)) => Ok(t),
            Some(MockReply::Fail { fail }) => Err(match fail {
                MockFailure::Transient => BackendError::Transient("scripted failure".into()),
                MockFailure::Timeout => BackendError::Timeout,
                MockFailure::Auth => BackendError::Auth("scripted auth failure".into()),
                MockFailure::Malformed => BackendError::Protocol("scripted malformed body".into()),
            }),
            None => Ok(match &self.fallback {
                Fallback::Fixed(text) => text.clone(),
                Fallback::Synthetic => synthetic::respond(req),
            }),
        }
    }
}

/// Responses derived from the canonical prompt layout in `templates/prompts.txt`.
mod synthetic {
    use super::*;

    pub(super) fn respond(req: &CompletionRequest) -> String {
        match req.purpose {
            Purpose::Outline => outline(&req.prompt),
            Purpose::Selection => selection(&req.prompt),
            Purpose::Generation => generation(&req.prompt),
            Purpose::Modification => modification(&req.prompt),
        }
    }

    fn value_after<'a>(prompt: &'a str, marker: &str) -> Option<&'a str> {
        let start = prompt.find(marker)? + marker.len();
        Some(prompt[start..].lines().next().unwrap_or("").trim())
    }

    fn spelled(n: &str) -> usize {
        match n {
            "one" => 1,
            "two" => 2,
            "three" => 3,
            other => other.parse().unwrap_or(1),
        }
    }

    fn outline(prompt: &str) -> String {
        let count = value_after(prompt, "Bullet points to write:")
            .map(spelled)
            .unwrap_or(1)
            .max(1);
        let paragraph = prompt
            .find("Paragraph:\n")
            .map(|i| &prompt[i + "Paragraph:\n".len()..])
            .unwrap_or("");
        let words: Vec<&str> = paragraph.split_whitespace().collect();
        if words.is_empty() {
            return (1..=count).map(|i| format!("Point {i}")).collect::<Vec<_>>().join("\n");
        }
        let chunk = words.len().div_ceil(count);
        (0..count)
            .map(|i| {
                let lo = (i * chunk).min(words.len().saturating_sub(1));
                let hi = ((i + 1) * chunk).min(words.len()).max(lo + 1);
                let taken: Vec<&str> = words[lo..hi].iter().take(12).copied().collect();
                taken.join(" ").trim_end_matches(['.', ',', ';', ':']).to_string()
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn selection(prompt: &str) -> String {
        let k = value_after(prompt, "Bullet points to select:")
            .and_then(|v| v.parse::<usize>().ok())
            .unwrap_or(10);
        let header = value_after(prompt, "has a section titled ").unwrap_or("");
        let ids: Vec<&str> = prompt
            .lines()
            .filter_map(|l| l.strip_prefix('[').and_then(|r| r.split_once(']')).map(|(id, _)| id))
            .collect();
        let mut ranked: Vec<(String, usize)> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (prompt_hash(&format!("{header}|{id}")), i))
            .collect();
        ranked.sort();
        let mut chosen: Vec<usize> = ranked.into_iter().take(k).map(|(_, i)| i).collect();
        chosen.sort_unstable();
        chosen.into_iter().map(|i| ids[i]).collect::<Vec<_>>().join(", ")
    }

    fn generation(prompt: &str) -> String {
        let header = prompt
            .split_once("You are writing the \"")
            .and_then(|(_, rest)| rest.split_once("\" section"))
            .map(|(h, _)| h)
            .unwrap_or("Section");
        let starting = prompt
            .split_once("continue from where it stops:\n")
            .map(|(_, rest)| rest.split("\n\n").next().unwrap_or("").to_string());
        let points: Vec<String> = prompt
            .lines()
            .filter_map(|l| l.strip_prefix("- "))
            .take(3)
            .map(|p| {
                let p = p.trim().trim_end_matches('.');
                format!("{p}.")
            })
            .collect();
        let tag = &prompt_hash(prompt)[..8];
        let mut out = String::new();
        if let Some(s) = starting {
            out.push_str(&s);
            out.push(' ');
        }
        out.push_str(&format!("{header} [{tag}]."));
        for p in points {
            out.push(' ');
            out.push_str(&p);
        }
        out
    }

    fn modification(prompt: &str) -> String {
        let text = prompt
            .split_once("Text to modify:\n<<<\n")
            .and_then(|(_, rest)| rest.rsplit_once("\n>>>"))
            .map(|(t, _)| t)
            .unwrap_or("");
        if prompt.contains("Expand the text") {
            format!("{text} {text}")
        } else if prompt.contains("Condense the text") {
            let words: Vec<&str> = text.split_whitespace().collect();
            words[..words.len().div_ceil(2)].join(" ")
        } else {
            format!("(revised) {text}")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn send(b: &MockBackend, purpose: Purpose, prompt: &str) -> Result<String, BackendError> {
        b.send(&CompletionRequest::new(purpose, prompt), Duration::from_secs(1))
    }

    #[test]
    fn lookup_fallback_and_determinism() {
        let b = MockBackend::scripted(vec![MockRule::new(
            Matcher::Exact("hello".into()),
            vec![MockReply::text("world")],
        )]);
        assert_eq!(send(&b, Purpose::Generation, "hello").unwrap(), "world");
        assert_eq!(send(&b, Purpose::Generation, "other").unwrap(), MOCK_FALLBACK_TEXT);
        assert_eq!(send(&b, Purpose::Generation, "hello").unwrap(), "world");
        assert_eq!(b.calls().len(), 3);
    }

    #[test]
    fn purpose_filter_applies() {
        let b = MockBackend::scripted(vec![MockRule::new(
            Matcher::Contains("x".into()),
            vec![MockReply::text("sel")],
        )
        .for_purpose(Purpose::Selection)]);
        assert_eq!(send(&b, Purpose::Selection, "x").unwrap(), "sel");
        assert_eq!(send(&b, Purpose::Outline, "x").unwrap(), MOCK_FALLBACK_TEXT);
    }

    #[test]
    fn script_json_roundtrip() {
        let json = r#"{"rules":[{"contains":"abc","purpose":"outline","replies":["a",{"fail":"timeout"}]}]}"#;
        let script: MockScript = serde_json::from_str(json).unwrap();
        assert_eq!(script.rules[0].matcher, Matcher::Contains("abc".into()));
        assert_eq!(script.rules[0].replies[1], MockReply::fail(MockFailure::Timeout));
        let b = MockBackend::from_script(script, Fallback::Synthetic);
        assert_eq!(send(&b, Purpose::Outline, "abc").unwrap(), "a");
        assert_eq!(send(&b, Purpose::Outline, "abc"), Err(BackendError::Timeout));
    }

    #[test]
    fn synthetic_outline_honours_requested_count() {
        let b = MockBackend::synthetic();
        let prompt = "Bullet points to write: three\n\nParagraph:\none two three four five six seven";
        let out = send(&b, Purpose::Outline, prompt).unwrap();
        assert_eq!(out.lines().count(), 3);
        assert_eq!(out, send(&b, Purpose::Outline, prompt).unwrap());
    }

    #[test]
    fn synthetic_selection_picks_k_listed_ids() {
        let b = MockBackend::synthetic();
        let prompt = "[b1] a\n[b2] b\n[b3] c\n\ntitled \"Methods\".\n\nBullet points to select: 2\n";
        let out = send(&b, Purpose::Selection, prompt).unwrap();
        let ids: Vec<&str> = out.split(", ").collect();
        assert_eq!(ids.len(), 2);
        assert!(ids.iter().all(|id| ["b1", "b2", "b3"].contains(id)));
    }
}
