//! Uniform chat-completion client: content-addressed disk cache, bounded
//! concurrency, retries, and a deterministic mock provider for tests and
//! hermetic runs.

mod cache;
mod http;
mod mock;

pub use cache::DiskCache;
pub use http::HttpProvider;
pub use mock::{MockProvider, MockStats};

use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("missing credential: environment variable `{variable}` is not set")]
    Auth { variable: String },
    #[error("invalid request: {reason}")]
    InvalidRequest { reason: String },
    #[error("cache error: {0}")]
    Cache(String),
    #[error("unsupported endpoint `{0}`")]
    BadEndpoint(String),
}

/// Provider-level failure. `Transport` is retryable, `Auth` is not.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    #[error("{0}")]
    Transport(String),
    #[error("{0}")]
    Auth(String),
}

/// One chat completion request. Refusal text is a normal response; there
/// is no refusal error anywhere in this interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub system_prompt: Option<String>,
    pub user_prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn new(model_id: &str, user_prompt: &str) -> Self {
        Self {
            model_id: model_id.to_string(),
            system_prompt: None,
            user_prompt: user_prompt.to_string(),
            temperature: 0.0,
            max_tokens: 1024,
        }
    }

    pub fn with_system(mut self, system: &str) -> Self {
        self.system_prompt = Some(system.to_string());
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    fn validate(&self) -> Result<(), GatewayError> {
        if self.user_prompt.is_empty() {
            return Err(GatewayError::InvalidRequest {
                reason: "user_prompt is empty".into(),
            });
        }
        if !self.temperature.is_finite() || !(0.0..=1.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest {
                reason: format!("temperature {} outside [0, 1]", self.temperature),
            });
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest {
                reason: "max_tokens must be positive".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub model_id: String,
    pub cached: bool,
    pub latency_ms: u64,
}

/// A provider entry from the run config. API keys come only from the
/// environment variable named here; the mock provider needs none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub name: String,
    pub endpoint: String,
    #[serde(default)]
    pub auth_env_var: String,
    pub max_in_flight: usize,
    pub retry_limit: u32,
}

pub trait Provider: Send + Sync {
    fn complete_text(&self, request: &ChatRequest) -> Result<String, ProviderError>;
}

/// Client wrapper adding caching, retries, and bounded batch concurrency
/// over any provider.
pub struct Gateway {
    provider: Arc<dyn Provider>,
    cache: Option<DiskCache>,
    max_in_flight: usize,
    retry_limit: u32,
}

impl Gateway {
    /// Resolve a provider config into a live gateway. `mock:` endpoints
    /// build the deterministic mock; anything `http(s)://` builds the
    /// OpenAI-style HTTP provider and requires its credential now.
    pub fn from_config(config: &ProviderConfig, cache: Option<DiskCache>) -> Result<Self, GatewayError> {
        if config.max_in_flight == 0 {
            return Err(GatewayError::InvalidRequest {
                reason: "max_in_flight must be >= 1".into(),
            });
        }
        let provider: Arc<dyn Provider> = if config.endpoint.starts_with("mock:") {
            Arc::new(MockProvider::from_endpoint(&config.endpoint)?)
        } else if config.endpoint.starts_with("http://") || config.endpoint.starts_with("https://") {
            let api_key = if config.auth_env_var.is_empty() {
                String::new()
            } else {
                std::env::var(&config.auth_env_var).map_err(|_| GatewayError::Auth {
                    variable: config.auth_env_var.clone(),
                })?
            };
            Arc::new(HttpProvider::new(&config.endpoint, api_key))
        } else {
            return Err(GatewayError::BadEndpoint(config.endpoint.clone()));
        };
        Ok(Self {
            provider,
            cache,
            max_in_flight: config.max_in_flight,
            retry_limit: config.retry_limit,
        })
    }

    pub fn with_provider(provider: Arc<dyn Provider>, max_in_flight: usize, retry_limit: u32, cache: Option<DiskCache>) -> Self {
        Self {
            provider,
            cache,
            max_in_flight: max_in_flight.max(1),
            retry_limit,
        }
    }

    /// Complete one request: cache hit returns the stored text verbatim
    /// with `cached = true`; otherwise the provider is tried up to
    /// `retry_limit + 1` times on transport failure.
    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        let start = Instant::now();
        if let Some(cache) = &self.cache {
            if let Some(text) = cache.get(request).map_err(GatewayError::Cache)? {
                return Ok(ChatResponse {
                    text,
                    model_id: request.model_id.clone(),
                    cached: true,
                    latency_ms: start.elapsed().as_millis() as u64,
                });
            }
        }
        let attempts = self.retry_limit + 1;
        let mut last_message = String::new();
        for _ in 0..attempts {
            match self.provider.complete_text(request) {
                Ok(text) => {
                    if let Some(cache) = &self.cache {
                        cache.put(request, &text).map_err(GatewayError::Cache)?;
                    }
                    return Ok(ChatResponse {
                        text,
                        model_id: request.model_id.clone(),
                        cached: false,
                        latency_ms: start.elapsed().as_millis() as u64,
                    });
                }
                Err(ProviderError::Auth(message)) => {
                    return Err(GatewayError::Auth { variable: message });
                }
                Err(ProviderError::Transport(message)) => last_message = message,
            }
        }
        Err(GatewayError::Transport {
            attempts,
            message: last_message,
        })
    }

    /// Complete a batch with at most `max_in_flight` concurrent requests.
    /// Output order equals input order; per-item errors are collected,
    /// never fail-fast.
    pub fn complete_batch(&self, requests: &[ChatRequest]) -> Vec<Result<ChatResponse, GatewayError>> {
        if requests.is_empty() {
            return Vec::new();
        }
        let next = AtomicUsize::new(0);
        let (sender, receiver) = mpsc::channel();
        let workers = self.max_in_flight.min(requests.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                let sender = sender.clone();
                let next = &next;
                scope.spawn(move || loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= requests.len() {
                        break;
                    }
                    let result = self.complete(&requests[i]);
                    if sender.send((i, result)).is_err() {
                        break;
                    }
                });
            }
        });
        drop(sender);
        let mut slots: Vec<Option<Result<ChatResponse, GatewayError>>> = (0..requests.len()).map(|_| None).collect();
        for (i, result) in receiver {
            slots[i] = Some(result);
        }
        slots
            .into_iter()
            .map(|slot| slot.expect("every batch slot is filled"))
            .collect()
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }
}
