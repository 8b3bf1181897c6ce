//! Generation acquisition: parse a local generations file or call a remote
//! text-generation service with bounded parallelism and retries.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::retrieval::GeneratedSample;

/// Environment variable read by the CLI for the Authorization bearer token.
pub const BEARER_TOKEN_ENV: &str = "CALREC_BEARER_TOKEN";

/// One prompt's sampling parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub n_samples: usize,
    pub temperature: f64,
    pub max_output_tokens: usize,
}

impl GenerationRequest {
    /// Defaults: 32 samples at temperature 0.5, at most 80 output tokens.
    pub fn new(prompt: impl Into<String>) -> Self {
        GenerationRequest {
            prompt: prompt.into(),
            n_samples: 32,
            temperature: 0.5,
            max_output_tokens: 80,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 1 {
            return Err(Error::InvalidArgument("n_samples must be >= 1".to_string()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "temperature must be finite and > 0, got {}",
                self.temperature
            )));
        }
        if self.max_output_tokens < 1 {
            return Err(Error::InvalidArgument("max_output_tokens must be >= 1".to_string()));
        }
        Ok(())
    }
}

/// A prompt tagged with the user it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRequest {
    pub user_id: String,
    pub request: GenerationRequest,
}

/// Remote fetch result: per-user samples plus per-user failure messages.
/// Failed users are recorded, not fatal, unless every user failed.
#[derive(Debug, Default)]
pub struct FetchOutcome {
    pub generations: BTreeMap<String, Vec<GeneratedSample>>,
    pub failures: BTreeMap<String, String>,
}

/// POST body: `{"prompt","n","temperature","max_tokens"}`.
#[derive(Debug, Serialize)]
struct WireRequest<'a> {
    prompt: &'a str,
    n: usize,
    temperature: f64,
    max_tokens: usize,
}

/// Response body: `{"samples":[{"text","logprob"},...]}`.
#[derive(Debug, Deserialize)]
struct WireResponse {
    samples: Vec<WireSample>,
}

#[derive(Debug, Deserialize)]
struct WireSample {
    text: String,
    logprob: f64,
}

/// Blocking client for a generation endpoint.
#[derive(Debug)]
pub struct RemoteClient {
    endpoint: String,
    bearer_token: Option<String>,
    concurrency: usize,
    max_retries: usize,
    backoff_base: Duration,
    http: reqwest::blocking::Client,
}

impl RemoteClient {
    /// Client with bounded parallelism 8, 3 retries, 200 ms base backoff,
    /// 30 s request timeout.
    pub fn new(endpoint: impl Into<String>, bearer_token: Option<String>) -> Result<Self> {
        Self::with_options(endpoint, bearer_token, 8, 3, Duration::from_millis(200))
    }

    pub fn with_options(
        endpoint: impl Into<String>,
        bearer_token: Option<String>,
        concurrency: usize,
        max_retries: usize,
        backoff_base: Duration,
    ) -> Result<Self> {
        if concurrency < 1 {
            return Err(Error::InvalidArgument("concurrency must be >= 1".to_string()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| Error::Http(format!("failed to build HTTP client: {e}")))?;
        Ok(RemoteClient {
            endpoint: endpoint.into(),
            bearer_token,
            concurrency,
            max_retries,
            backoff_base,
            http,
        })
    }

    /// Issues one POST per request with at most `concurrency` in flight,
    /// retrying 5xx and transport errors with exponential backoff. Results
    /// merge by user_id, so completion order never shows.
    pub fn fetch_generations(&self, requests: &[UserRequest]) -> Result<FetchOutcome> {
        for r in requests {
            r.request.validate()?;
        }
        let cursor = AtomicUsize::new(0);
        let outcome = Mutex::new(FetchOutcome::default());
        let workers = self.concurrency.min(requests.len().max(1));
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = cursor.fetch_add(1, Ordering::Relaxed);
                    let Some(request) = requests.get(i) else {
                        break;
                    };
                    let result = self.fetch_one(request);
                    let mut out = outcome.lock().expect("no panics while locked");
                    match result {
                        Ok(samples) => {
                            out.generations.insert(request.user_id.clone(), samples);
                        }
                        Err(message) => {
                            out.failures.insert(request.user_id.clone(), message);
                        }
                    }
                });
            }
        });
        let outcome = outcome.into_inner().expect("workers joined");
        if outcome.generations.is_empty() && !requests.is_empty() {
            return Err(Error::AllUsersFailed(outcome.failures.len()));
        }
        Ok(outcome)
    }

    fn fetch_one(&self, request: &UserRequest) -> std::result::Result<Vec<GeneratedSample>, String> {
        let body = WireRequest {
            prompt: &request.request.prompt,
            n: request.request.n_samples,
            temperature: request.request.temperature,
            max_tokens: request.request.max_output_tokens,
        };
        let key = idempotency_key(request);
        let mut last_error = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff_base * (1 << (attempt - 1)));
            }
            let mut call = self
                .http
                .post(&self.endpoint)
                .header("Idempotency-Key", &key)
                .json(&body);
            if let Some(token) = &self.bearer_token {
                call = call.bearer_auth(token);
            }
            match call.send() {
                Ok(response) if response.status().is_success() => {
                    let parsed: WireResponse = match response.json() {
                        Ok(parsed) => parsed,
                        Err(e) => return Err(format!("malformed response body: {e}")),
                    };
                    return validate_samples(parsed.samples);
                }
                Ok(response) if response.status().is_server_error() => {
                    last_error = format!("server error {}", response.status());
                }
                Ok(response) => {
                    return Err(format!("request rejected with status {}", response.status()));
                }
                Err(e) => {
                    last_error = format!("transport error: {e}");
                }
            }
        }
        Err(format!("{last_error} after {} attempts", self.max_retries + 1))
    }
}

fn validate_samples(samples: Vec<WireSample>) -> std::result::Result<Vec<GeneratedSample>, String> {
    samples
        .into_iter()
        .enumerate()
        .map(|(origin, s)| {
            if !(s.logprob.is_finite() && s.logprob <= 0.0) {
                return Err(format!("sample {origin} has invalid logprob {}", s.logprob));
            }
            Ok(GeneratedSample::new(s.text, s.logprob, origin))
        })
        .collect()
}

/// Deterministic per-request idempotency key: user id plus a hash of the
/// prompt and sampling parameters.
fn idempotency_key(request: &UserRequest) -> String {
    let mut hasher = std::hash::DefaultHasher::new();
    request.request.prompt.hash(&mut hasher);
    request.request.n_samples.hash(&mut hasher);
    request.request.temperature.to_bits().hash(&mut hasher);
    request.request.max_output_tokens.hash(&mut hasher);
    format!("{}-{:016x}", request.user_id, hasher.finish())
}
