use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    ChatBackend, ChatRequest, ChatResponse, FinishReason, GatewayError, Message, ResponseCache, ResponseSource,
    RetryPolicy,
};

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

enum Attempt {
    Done(ChatResponse),
    Retry(String),
    Fatal(GatewayError),
}

/// OpenAI-compatible chat-completions client. Consults the cache before
/// going to the network and records every fresh response into it.
pub struct LiveBackend {
    endpoint: String,
    api_key: String,
    client: reqwest::blocking::Client,
    cache: Option<ResponseCache>,
    retry: RetryPolicy,
}

impl LiveBackend {
    pub fn new(
        base_url: impl AsRef<str>,
        api_key: String,
        cache: Option<ResponseCache>,
        retry: RetryPolicy,
        timeout: Duration,
    ) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Config(format!("http client: {e}")))?;
        Ok(LiveBackend {
            endpoint: format!("{}/chat/completions", base_url.as_ref().trim_end_matches('/')),
            api_key,
            client,
            cache,
            retry,
        })
    }

    fn attempt(&self, request: &ChatRequest) -> Attempt {
        let body = WireRequest {
            model: &request.model,
            messages: &request.messages,
            temperature: request.temperature,
            top_p: request.top_p,
            max_tokens: request.max_tokens,
        };
        let resp = match self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
        {
            Ok(r) => r,
            // Timeouts, refused connections and resets are all transient.
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Attempt::Retry(format!("HTTP {status}"));
        }
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        if !status.is_success() {
            return Attempt::Fatal(GatewayError::Rejected {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            });
        }
        let wire: WireResponse = match serde_json::from_str(&text) {
            Ok(w) => w,
            Err(e) => return Attempt::Fatal(GatewayError::Malformed(e.to_string())),
        };
        let Some(choice) = wire.choices.into_iter().next() else {
            return Attempt::Fatal(GatewayError::Malformed("no choices".into()));
        };
        let Some(content) = choice.message.content else {
            return Attempt::Fatal(GatewayError::Malformed("choice has no content".into()));
        };
        let finish_reason = match choice.finish_reason.as_deref() {
            Some("length") => FinishReason::Length,
            _ => FinishReason::Stop,
        };
        Attempt::Done(ChatResponse {
            content,
            finish_reason,
            source: ResponseSource::Live,
        })
    }
}

impl ChatBackend for LiveBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        if let Some(cache) = &self.cache {
            if let Some(entry) = cache.load(&request.cache_key())? {
                return Ok(entry.into_response(ResponseSource::Cache));
            }
        }
        let mut last = String::new();
        for attempt in 1..=self.retry.max_attempts {
            match self.attempt(request) {
                Attempt::Done(response) => {
                    if let Some(cache) = &self.cache {
                        cache.store(request, &response)?;
                    }
                    return Ok(response);
                }
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(reason) => {
                    log::warn!("attempt {attempt}/{} failed: {reason}", self.retry.max_attempts);
                    last = reason;
                    if attempt < self.retry.max_attempts {
                        std::thread::sleep(self.retry.backoff(attempt));
                    }
                }
            }
        }
        Err(GatewayError::Unavailable {
            attempts: self.retry.max_attempts,
            last,
        })
    }
}
