//! JSON-over-HTTP plumbing shared by the remote embedding, simulation, and
//! baseline providers.
//!
//! The HTTP layer sits behind [`JsonTransport`] so retry behavior and
//! response parsing can be exercised against scripted transports in tests.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Environment variable consulted for the API credential unless a config
/// overrides the name.
pub const DEFAULT_API_KEY_ENV: &str = "ABC_UQ_API_KEY";

/// A single-call transport failure, tagged with whether a retry could help.
#[derive(Debug, Clone)]
pub struct TransportFailure {
    pub message: String,
    pub retryable: bool,
}

/// Blocking JSON POST.
pub trait JsonTransport: Send + Sync {
    fn post_json(&self, url: &str, body: &Value) -> std::result::Result<Value, TransportFailure>;
}

/// Production transport backed by a blocking HTTP client. Sends the API
/// credential from the configured environment variable as a bearer token
/// when present.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(timeout: Duration, api_key_env: &str) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Transport {
                attempts: 0,
                message: format!("failed to build HTTP client: {e}"),
            })?;
        Ok(Self {
            client,
            api_key: std::env::var(api_key_env).ok(),
        })
    }
}

impl JsonTransport for HttpTransport {
    fn post_json(&self, url: &str, body: &Value) -> std::result::Result<Value, TransportFailure> {
        let mut req = self.client.post(url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| TransportFailure {
            message: format!("request to {url} failed: {e}"),
            retryable: e.is_timeout() || e.is_connect() || e.is_request(),
        })?;
        let status = resp.status();
        if !status.is_success() {
            let retryable = status.is_server_error() || status.as_u16() == 429;
            let body = resp.text().unwrap_or_default();
            return Err(TransportFailure {
                message: format!("{url} returned {status}: {body}"),
                retryable,
            });
        }
        resp.json().map_err(|e| TransportFailure {
            message: format!("{url} returned non-JSON body: {e}"),
            retryable: false,
        })
    }
}

/// POSTs `body`, retrying transient failures up to `max_retries` additional
/// attempts with a short exponential backoff.
pub fn post_with_retries(
    transport: &dyn JsonTransport,
    url: &str,
    body: &Value,
    max_retries: u32,
) -> Result<Value> {
    let mut attempts: u32 = 0;
    loop {
        attempts += 1;
        match transport.post_json(url, body) {
            Ok(v) => return Ok(v),
            Err(failure) if failure.retryable && attempts <= max_retries => {
                let backoff = Duration::from_millis(50u64 << (attempts - 1).min(5));
                std::thread::sleep(backoff);
            }
            Err(failure) => {
                return Err(Error::Transport {
                    attempts,
                    message: failure.message,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

/// Chat-completion request body: a messages array with temperature and token
/// cap passed through, plus optional per-token log-probability flags.
#[derive(Debug, Clone, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_logprobs: Option<u32>,
}

/// Parsed essentials of a chat completion: the first choice's text and, when
/// requested, the top log-probabilities of the first generated token.
#[derive(Debug, Clone, Default)]
pub struct ChatOutput {
    pub content: String,
    pub top_logprobs: Vec<(String, f64)>,
}

/// A chat-completion backend; implemented over HTTP for production and by
/// scripted fakes in tests.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatOutput>;
}

pub struct HttpChatTransport {
    endpoint: String,
    transport: Arc<dyn JsonTransport>,
    max_retries: u32,
}

impl HttpChatTransport {
    pub fn new(endpoint: impl Into<String>, transport: Arc<dyn JsonTransport>, max_retries: u32) -> Self {
        Self {
            endpoint: endpoint.into(),
            transport,
            max_retries,
        }
    }
}

impl ChatTransport for HttpChatTransport {
    fn complete(&self, request: &ChatRequest) -> Result<ChatOutput> {
        let body = serde_json::to_value(request)?;
        let resp = post_with_retries(&*self.transport, &self.endpoint, &body, self.max_retries)?;
        parse_chat_response(&resp)
    }
}

/// Extracts `choices[0].message.content` and, when present, the first
/// position's `top_logprobs` list.
pub fn parse_chat_response(v: &Value) -> Result<ChatOutput> {
    let content = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Contract(
            "malformed chat response: missing choices[0].message.content".into(),
        ))?
        .to_string();
    let mut top_logprobs = Vec::new();
    if let Some(entries) = v
        .pointer("/choices/0/logprobs/content/0/top_logprobs")
        .and_then(Value::as_array)
    {
        for entry in entries {
            let token = entry.get("token").and_then(Value::as_str);
            let logprob = entry.get("logprob").and_then(Value::as_f64);
            if let (Some(token), Some(logprob)) = (token, logprob) {
                top_logprobs.push((token.to_string(), logprob));
            }
        }
    }
    Ok(ChatOutput {
        content,
        top_logprobs,
    })
}

/// Extracts `data[0].embedding` from an embeddings response.
pub fn parse_embedding_response(v: &Value) -> Result<Vec<f64>> {
    let arr = v
        .pointer("/data/0/embedding")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Contract(
            "malformed embeddings response: missing data[0].embedding".into(),
        ))?;
    arr.iter()
        .map(|x| {
            x.as_f64().ok_or_else(|| Error::Contract(
                "malformed embeddings response: non-numeric embedding entry".into(),
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct FailingTransport {
        calls: AtomicU32,
        retryable: bool,
    }

    impl JsonTransport for FailingTransport {
        fn post_json(&self, _url: &str, _body: &Value) -> std::result::Result<Value, TransportFailure> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Err(TransportFailure {
                message: "boom".into(),
                retryable: self.retryable,
            })
        }
    }

    #[test]
    fn retries_capped_at_max_retries() {
        let t = FailingTransport {
            calls: AtomicU32::new(0),
            retryable: true,
        };
        let err = post_with_retries(&t, "http://x", &json!({}), 3).unwrap_err();
        // One initial attempt plus three retries.
        assert_eq!(t.calls.load(Ordering::SeqCst), 4);
        match err {
            Error::Transport { attempts, .. } => assert_eq!(attempts, 4),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn non_retryable_fails_immediately() {
        let t = FailingTransport {
            calls: AtomicU32::new(0),
            retryable: false,
        };
        let _ = post_with_retries(&t, "http://x", &json!({}), 3).unwrap_err();
        assert_eq!(t.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn parses_chat_content_and_logprobs() {
        let v = json!({
            "choices": [{
                "message": {"role": "assistant", "content": "2"},
                "logprobs": {"content": [{
                    "token": "2",
                    "logprob": -0.1,
                    "top_logprobs": [
                        {"token": "2", "logprob": -0.1},
                        {"token": "1", "logprob": -2.5}
                    ]
                }]}
            }]
        });
        let out = parse_chat_response(&v).unwrap();
        assert_eq!(out.content, "2");
        assert_eq!(out.top_logprobs.len(), 2);
        assert_eq!(out.top_logprobs[0].0, "2");
    }

    #[test]
    fn chat_response_without_content_is_rejected() {
        assert!(parse_chat_response(&json!({"choices": []})).is_err());
    }

    #[test]
    fn parses_embedding_payload() {
        let v = json!({"data": [{"embedding": [0.25, -0.5]}]});
        assert_eq!(parse_embedding_response(&v).unwrap(), vec![0.25, -0.5]);
        assert!(parse_embedding_response(&json!({"data": []})).is_err());
    }
}
