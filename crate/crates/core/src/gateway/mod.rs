//! Uniform client for chat-completion endpoints: disk caching keyed by a
//! prompt digest, bounded per-model parallelism, and transient-failure
//! retries with exponential backoff. A deterministic mock backend serves
//! offline runs.

mod backend;
mod cache;
pub mod mock;
mod limiter;

pub use backend::{Backend, HttpBackend, RouterBackend};
pub use cache::{CacheRecord, DiskCache};
pub use mock::{MockBackend, MockBehavior};

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use limiter::Semaphore;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Evaluatee,
    SmallFilter,
    Proposer,
    Verifier,
    Synthesizer,
}

/// Connection and metadata record for one model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model_id: String,
    pub display_name: String,
    pub endpoint: String,
    pub auth_env_var: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params_billion: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub release_date: Option<NaiveDate>,
    #[serde(default)]
    pub roles: BTreeSet<Role>,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
}

fn default_max_in_flight() -> usize {
    4
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if let Some(p) = self.params_billion {
            if !(p > 0.0) {
                return Err(GatewayError::Configuration(format!(
                    "model `{}`: params_billion must be positive, got {p}",
                    self.model_id
                )));
            }
        }
        if self.max_in_flight == 0 {
            return Err(GatewayError::Configuration(format!(
                "model `{}`: max_in_flight must be at least 1",
                self.model_id
            )));
        }
        Ok(())
    }

    pub fn has_role(&self, role: Role) -> bool {
        self.roles.contains(&role)
    }

    /// Spec for a mock-backed model in tests and offline configs.
    pub fn mock(model_id: &str) -> ModelSpec {
        ModelSpec {
            model_id: model_id.to_string(),
            display_name: model_id.to_string(),
            endpoint: "mock://".to_string(),
            auth_env_var: "UNUSED".to_string(),
            params_billion: None,
            release_date: None,
            roles: BTreeSet::new(),
            max_in_flight: 4,
        }
    }
}

/// Decoding parameters; part of the cache key. `seed` is forwarded to the
/// endpoint and distinguishes repeated sampling runs of an identical prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Decoding {
    pub fn greedy(max_tokens: u32) -> Decoding {
        Decoding {
            temperature: 0.0,
            max_tokens,
            seed: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Decoding {
        self.seed = Some(seed);
        self
    }
}

/// One completion request. `mock_key` routes scripted mock behaviors (it is
/// ignored by live backends and excluded from the cache key).
#[derive(Debug, Clone)]
pub struct Request {
    pub prompt: String,
    pub decoding: Decoding,
    pub mock_key: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Completion {
    pub model_id: String,
    pub prompt_hash: String,
    pub text: String,
    pub cached: bool,
    pub latency_ms: u64,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("credential failure for model `{model_id}`: {reason}")]
    Credential { model_id: String, reason: String },
    #[error("transport failure for model `{model_id}` after {attempts} attempts: {last}")]
    Transport {
        model_id: String,
        attempts: u32,
        last: String,
    },
    #[error("protocol error from model `{model_id}`: {reason}")]
    Protocol { model_id: String, reason: String },
    #[error("gateway configuration: {0}")]
    Configuration(String),
    #[error("cache I/O at {path}: {source}")]
    CacheIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Backend-level failure; the gateway retries transient ones.
#[derive(Debug)]
pub enum BackendFailure {
    Permanent(GatewayError),
    Transient(String),
}

/// Retry schedule: exponential backoff with jitter, transient classes only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay_ms: 250,
            max_delay_ms: 10_000,
        }
    }
}

impl RetryPolicy {
    fn delay_for(&self, attempt: u32) -> Duration {
        let exp = self
            .base_delay_ms
            .saturating_mul(1u64 << (attempt - 1).min(16));
        let capped = exp.min(self.max_delay_ms);
        let jitter = if capped > 1 {
            rand::thread_rng().gen_range(0..capped / 2 + 1)
        } else {
            0
        };
        Duration::from_millis(capped + jitter)
    }
}

/// Digest of (model id, decoding params, prompt); the cache key.
pub fn prompt_hash(model_id: &str, prompt: &str, decoding: &Decoding) -> String {
    let mut hasher = Sha256::new();
    hasher.update(model_id.as_bytes());
    hasher.update([0]);
    hasher.update(decoding.temperature.to_bits().to_le_bytes());
    hasher.update(decoding.max_tokens.to_le_bytes());
    match decoding.seed {
        Some(s) => {
            hasher.update([1]);
            hasher.update(s.to_le_bytes());
        }
        None => hasher.update([0]),
    }
    hasher.update([0]);
    hasher.update(prompt.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub struct Gateway {
    backend: Box<dyn Backend>,
    cache: Option<DiskCache>,
    retry: RetryPolicy,
    limiters: Mutex<HashMap<String, Arc<Semaphore>>>,
    live_calls: AtomicU64,
}

impl Gateway {
    pub fn new(backend: Box<dyn Backend>, cache: Option<DiskCache>, retry: RetryPolicy) -> Self {
        Gateway {
            backend,
            cache,
            retry,
            limiters: Mutex::new(HashMap::new()),
            live_calls: AtomicU64::new(0),
        }
    }

    pub fn with_cache_dir(
        backend: Box<dyn Backend>,
        cache_dir: &Path,
        retry: RetryPolicy,
    ) -> Result<Self, GatewayError> {
        Ok(Self::new(backend, Some(DiskCache::open(cache_dir)?), retry))
    }

    /// Completions that actually reached the backend (cache misses).
    pub fn live_completions(&self) -> u64 {
        self.live_calls.load(Ordering::SeqCst)
    }

    fn limiter_for(&self, spec: &ModelSpec) -> Arc<Semaphore> {
        let mut limiters = self.limiters.lock().unwrap();
        limiters
            .entry(spec.model_id.clone())
            .or_insert_with(|| Semaphore::new(spec.max_in_flight))
            .clone()
    }

    pub fn complete(
        &self,
        spec: &ModelSpec,
        request: &Request,
    ) -> Result<Completion, GatewayError> {
        let hash = prompt_hash(&spec.model_id, &request.prompt, &request.decoding);
        if let Some(cache) = &self.cache {
            if let Some(text) = cache.get(&spec.model_id, &hash)? {
                return Ok(Completion {
                    model_id: spec.model_id.clone(),
                    prompt_hash: hash,
                    text,
                    cached: true,
                    latency_ms: 0,
                });
            }
        }

        let limiter = self.limiter_for(spec);
        let permit = limiter.acquire();
        let start = Instant::now();
        let mut attempt = 0u32;
        let text = loop {
            attempt += 1;
            match self.backend.complete(spec, request) {
                Ok(text) => break text,
                Err(BackendFailure::Permanent(e)) => return Err(e),
                Err(BackendFailure::Transient(last)) => {
                    if attempt >= self.retry.max_attempts {
                        return Err(GatewayError::Transport {
                            model_id: spec.model_id.clone(),
                            attempts: attempt,
                            last,
                        });
                    }
                    log::warn!(
                        "transient failure from `{}` (attempt {attempt}): {last}",
                        spec.model_id
                    );
                    std::thread::sleep(self.retry.delay_for(attempt));
                }
            }
        };
        drop(permit);
        let latency_ms = start.elapsed().as_millis() as u64;
        self.live_calls.fetch_add(1, Ordering::SeqCst);

        if let Some(cache) = &self.cache {
            cache.put(&CacheRecord {
                model_id: spec.model_id.clone(),
                prompt_hash: hash.clone(),
                prompt: request.prompt.clone(),
                temperature: request.decoding.temperature,
                max_tokens: request.decoding.max_tokens,
                seed: request.decoding.seed,
                text: text.clone(),
                latency_ms,
            })?;
        }
        Ok(Completion {
            model_id: spec.model_id.clone(),
            prompt_hash: hash,
            text,
            cached: false,
            latency_ms,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;
    use std::sync::atomic::AtomicU32;

    struct Flaky {
        failures: AtomicU32,
    }

    impl Backend for Flaky {
        fn complete(&self, _spec: &ModelSpec, _request: &Request) -> Result<String, BackendFailure> {
            if self.failures.load(Ordering::SeqCst) > 0 {
                self.failures.fetch_sub(1, Ordering::SeqCst);
                Err(BackendFailure::Transient("HTTP 503".into()))
            } else {
                Ok("B".into())
            }
        }
    }

    fn fast_retry(max_attempts: u32) -> RetryPolicy {
        RetryPolicy {
            max_attempts,
            base_delay_ms: 1,
            max_delay_ms: 2,
        }
    }

    fn scripted_mock(entries: &[(&str, &str)]) -> Arc<MockBackend> {
        let mock = Arc::new(MockBackend::new());
        let answer_map: BTreeMap<String, String> = entries
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        mock.register_mock("m", MockBehavior::AnswerMap { answer_map }).unwrap();
        mock
    }

    fn req(key: &str) -> Request {
        Request {
            prompt: format!("prompt for {key}"),
            decoding: Decoding::greedy(16),
            mock_key: Some(key.into()),
        }
    }

    #[test]
    fn cache_hit_returns_byte_identical_text() {
        let dir = tempfile::tempdir().unwrap();
        let mock = scripted_mock(&[("q1", "B, and some trailing rationale")]);
        let gw =
            Gateway::with_cache_dir(Box::new(mock), dir.path(), fast_retry(3)).unwrap();
        let spec = ModelSpec::mock("m");
        let first = gw.complete(&spec, &req("q1")).unwrap();
        assert!(!first.cached);
        let second = gw.complete(&spec, &req("q1")).unwrap();
        assert!(second.cached);
        assert_eq!(first.text, second.text);
        assert_eq!(gw.live_completions(), 1);
    }

    #[test]
    fn transient_failures_are_retried_to_success() {
        let backend = Flaky {
            failures: AtomicU32::new(3),
        };
        let gw = Gateway::new(Box::new(backend), None, fast_retry(5));
        let out = gw.complete(&ModelSpec::mock("m"), &req("q")).unwrap();
        assert_eq!(out.text, "B");
    }

    #[test]
    fn exhausted_retries_surface_transport_error_with_last_status() {
        let backend = Flaky {
            failures: AtomicU32::new(100),
        };
        let gw = Gateway::new(Box::new(backend), None, fast_retry(4));
        let err = gw.complete(&ModelSpec::mock("m"), &req("q")).unwrap_err();
        match err {
            GatewayError::Transport { attempts, last, .. } => {
                assert_eq!(attempts, 4);
                assert!(last.contains("503"));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn per_model_in_flight_bound_is_enforced() {
        let mock = Arc::new(MockBackend::with_delay(Duration::from_millis(5)));
        mock.register_mock(
            "m",
            MockBehavior::AnswerMap {
                answer_map: (0..32).map(|i| (format!("q{i}"), "A".to_string())).collect(),
            },
        )
        .unwrap();
        let gw = Gateway::new(Box::new(Arc::clone(&mock)), None, fast_retry(2));
        let mut spec = ModelSpec::mock("m");
        spec.max_in_flight = 3;
        std::thread::scope(|scope| {
            for i in 0..32 {
                let gw = &gw;
                let spec = &spec;
                scope.spawn(move || {
                    gw.complete(spec, &req(&format!("q{i}"))).unwrap();
                });
            }
        });
        assert!(
            mock.max_in_flight_observed() <= 3,
            "observed {}",
            mock.max_in_flight_observed()
        );
    }

    #[test]
    fn hash_separates_decoding_params() {
        let base = Decoding::greedy(16);
        let h1 = prompt_hash("m", "p", &base);
        assert_eq!(h1, prompt_hash("m", "p", &base.clone()));
        assert_ne!(h1, prompt_hash("m", "p", &Decoding { temperature: 0.7, ..base.clone() }));
        assert_ne!(h1, prompt_hash("m", "p", &base.clone().with_seed(1)));
        assert_ne!(h1, prompt_hash("m2", "p", &base.clone()));
        assert_ne!(h1, prompt_hash("m", "p2", &base));
    }
}
