//! Blocking client for chat-completion style HTTP endpoints
//! (`POST {base}/chat/completions`, messages in, choices out).

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::DescriptionError;

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "TRENDFORGE_API_KEY";

#[derive(Debug, Clone)]
pub struct LlmConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    /// Total attempts per request, including the first.
    pub attempts: u32,
    pub backoff: Duration,
    pub requests_per_minute: Option<u32>,
    pub max_in_flight: usize,
    pub timeout: Duration,
    pub temperature: f64,
    pub transcript: Option<PathBuf>,
}

impl LlmConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            attempts: 3,
            backoff: Duration::from_millis(500),
            requests_per_minute: None,
            max_in_flight: 4,
            timeout: Duration::from_secs(60),
            temperature: 0.7,
            transcript: None,
        }
    }

    /// Reads the key from [`API_KEY_ENV`].
    pub fn with_env_key(mut self) -> Self {
        self.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
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

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub model_id: String,
    pub usage: TokenUsage,
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    model: Option<String>,
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<TokenUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Spaces request starts at least `interval` apart.
struct Pacer {
    interval: Option<Duration>,
    next: Mutex<Option<Instant>>,
}

impl Pacer {
    fn wait(&self) {
        let Some(interval) = self.interval else {
            return;
        };
        let sleep_for = {
            let mut next = self.next.lock().expect("pacer lock");
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + interval);
            slot - now
        };
        if !sleep_for.is_zero() {
            std::thread::sleep(sleep_for);
        }
    }
}

/// Counting semaphore bounding concurrent requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn enter(&self) -> GateGuard<'_> {
        let mut free = self.free.lock().expect("gate lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("gate lock");
        }
        *free -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("gate lock") += 1;
        self.0.cv.notify_one();
    }
}

enum Attempt {
    Done(Completion),
    Retry(String, bool),
    Fatal(DescriptionError),
}

pub struct LlmClient {
    config: LlmConfig,
    agent: ureq::Agent,
    pacer: Pacer,
    gate: Gate,
    transcript: Mutex<Option<File>>,
}

impl LlmClient {
    pub fn new(config: LlmConfig) -> Result<Self, DescriptionError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        let transcript = match &config.transcript {
            Some(path) => Some(OpenOptions::new().create(true).append(true).open(path)?),
            None => None,
        };
        let interval = config
            .requests_per_minute
            .filter(|r| *r > 0)
            .map(|r| Duration::from_secs_f64(60.0 / r as f64));
        Ok(Self {
            agent,
            pacer: Pacer {
                interval,
                next: Mutex::new(None),
            },
            gate: Gate {
                free: Mutex::new(config.max_in_flight.max(1)),
                cv: Condvar::new(),
            },
            transcript: Mutex::new(transcript),
            config,
        })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn log(&self, request: &serde_json::Value, status: u16, body: &str) -> Result<(), DescriptionError> {
        let mut guard = self.transcript.lock().expect("transcript lock");
        if let Some(file) = guard.as_mut() {
            let line = json!({ "request": request, "status": status, "response": body });
            writeln!(file, "{line}")?;
            file.flush()?;
        }
        Ok(())
    }

    fn attempt(&self, request: &serde_json::Value) -> Attempt {
        self.pacer.wait();
        let mut call = self.agent.post(self.endpoint());
        if let Some(key) = &self.config.api_key {
            call = call.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = match call.send_json(request) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string(), false),
        };
        let status = response.status().as_u16();
        let body = match response.body_mut().read_to_string() {
            Ok(b) => b,
            Err(e) => return Attempt::Retry(e.to_string(), false),
        };
        if let Err(e) = self.log(request, status, &body) {
            return Attempt::Fatal(e);
        }
        match status {
            200..=299 => Attempt::Done(match parse_completion(&body, &self.config.model) {
                Ok(c) => c,
                Err(e) => return Attempt::Fatal(e),
            }),
            401 | 403 => Attempt::Fatal(DescriptionError::AuthError(status)),
            429 => Attempt::Retry(format!("HTTP 429: {body}"), true),
            500..=599 => Attempt::Retry(format!("HTTP {status}: {body}"), false),
            _ => Attempt::Fatal(DescriptionError::Http { status, body }),
        }
    }

    /// One chat completion with retries and exponential backoff on 429,
    /// 5xx and transport failures.
    pub fn chat(&self, messages: &[ChatMessage]) -> Result<Completion, DescriptionError> {
        let request = json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
        });
        let _slot = self.gate.enter();
        let attempts = self.config.attempts.max(1);
        let mut last = String::new();
        let mut all_rate_limited = true;
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.config.backoff * 2u32.pow(attempt - 1));
            }
            match self.attempt(&request) {
                Attempt::Done(c) => return Ok(c),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(msg, rate_limited) => {
                    all_rate_limited &= rate_limited;
                    last = msg;
                }
            }
        }
        if all_rate_limited {
            Err(DescriptionError::RateLimited(attempts))
        } else {
            Err(DescriptionError::Unavailable { attempts, last })
        }
    }
}

fn parse_completion(body: &str, requested_model: &str) -> Result<Completion, DescriptionError> {
    let parsed: ChatResponse =
        serde_json::from_str(body).map_err(|e| DescriptionError::BadResponse(e.to_string()))?;
    let text = parsed
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .map(|t| t.trim().to_string())
        .unwrap_or_default();
    if text.is_empty() {
        return Err(DescriptionError::EmptyCompletion);
    }
    Ok(Completion {
        // paragraphs are joined so every description is a single paragraph
        text: text.split_whitespace().collect::<Vec<_>>().join(" "),
        model_id: parsed.model.unwrap_or_else(|| requested_model.to_string()),
        usage: parsed.usage.unwrap_or_default(),
    })
}
