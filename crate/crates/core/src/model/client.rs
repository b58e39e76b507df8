//! Shareable client: caching, single-flight, rate limiting, bounded
//! concurrency and retries around a [`Backend`].

use super::cache::{cache_key, CachedResponse, ResponseCache};
use super::{Backend, ByteEstimator, ModelConfig, ModelError, TokenEstimator, TokenUsage};
use std::collections::HashMap;
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

/// Token bucket refilled continuously at `per_minute / 60` tokens per second.
#[derive(Debug)]
pub struct RateLimiter {
    capacity: f64,
    per_sec: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn per_minute(per_minute: u32) -> Self {
        let capacity = f64::from(per_minute.max(1));
        RateLimiter { capacity, per_sec: capacity / 60.0, state: Mutex::new((capacity, Instant::now())) }
    }

    /// Block until one request token is available.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut st = self.state.lock().unwrap();
                let now = Instant::now();
                st.0 = (st.0 + now.duration_since(st.1).as_secs_f64() * self.per_sec).min(self.capacity);
                st.1 = now;
                if st.0 >= 1.0 {
                    st.0 -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - st.0) / self.per_sec)
            };
            thread::sleep(wait);
        }
    }
}

#[derive(Debug)]
struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore { free: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.cv.wait_while(self.free.lock().unwrap(), |f| *f == 0).unwrap();
        *free -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

type Outcome = Result<CachedResponse, String>;

#[derive(Default)]
struct Flight {
    done: Mutex<Option<Outcome>>,
    cv: Condvar,
}

/// Thread-safe completion client. Identical requests within one client are
/// answered once; later duplicates are reported as cached.
pub struct ModelClient {
    backend: Arc<dyn Backend>,
    cfg: ModelConfig,
    cache: Option<ResponseCache>,
    limiter: Option<RateLimiter>,
    inflight: Semaphore,
    flights: Mutex<HashMap<String, Arc<Flight>>>,
    estimator: Box<dyn TokenEstimator>,
}

impl ModelClient {
    pub fn new(backend: Arc<dyn Backend>, cfg: ModelConfig) -> Result<Self, ModelError> {
        cfg.validate()?;
        Ok(ModelClient {
            backend,
            cfg,
            cache: None,
            limiter: None,
            inflight: Semaphore::new(8),
            flights: Mutex::new(HashMap::new()),
            estimator: Box::new(ByteEstimator::default()),
        })
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_rate_limit(mut self, per_minute: Option<u32>) -> Self {
        self.limiter = per_minute.map(RateLimiter::per_minute);
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.inflight = Semaphore::new(n);
        self
    }

    pub fn with_estimator(mut self, e: Box<dyn TokenEstimator>) -> Self {
        self.estimator = e;
        self
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn backend(&self) -> &Arc<dyn Backend> {
        &self.backend
    }

    pub fn count_tokens(&self, text: &str) -> u64 {
        self.estimator.count(text)
    }

    /// First completion for `prompt` plus its token usage.
    pub fn complete(&self, prompt: &str) -> Result<(String, TokenUsage), ModelError> {
        if prompt.trim().is_empty() {
            return Err(ModelError::EmptyPrompt);
        }
        let estimated = self.estimator.count(prompt);
        if estimated > self.cfg.context_limit {
            return Err(ModelError::PromptTooLong { estimated, limit: self.cfg.context_limit });
        }
        let key = cache_key(prompt, &self.cfg);
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            return Ok(cached(hit));
        }

        let (flight, leader) = {
            let mut map = self.flights.lock().unwrap();
            match map.get(&key) {
                Some(f) => (Arc::clone(f), false),
                None => {
                    let f = Arc::new(Flight::default());
                    map.insert(key.clone(), Arc::clone(&f));
                    (f, true)
                }
            }
        };

        if !leader {
            let done = flight.cv.wait_while(flight.done.lock().unwrap(), |d| d.is_none()).unwrap();
            return match done.as_ref().expect("flight finished") {
                Ok(r) => Ok(cached(r.clone())),
                Err(_) => {
                    drop(done);
                    self.live(prompt).map(|r| usage_of(r, false))
                }
            };
        }

        let result = self.live(prompt);
        if let (Ok(r), Some(cache)) = (&result, &self.cache) {
            if let Err(e) = cache.put(&key, r) {
                log::warn!("cache write failed for {key}: {e}");
            }
        }
        *flight.done.lock().unwrap() = Some(result.as_ref().map(Clone::clone).map_err(|e| e.to_string()));
        flight.cv.notify_all();
        if result.is_err() {
            // allow a later caller to try again
            self.flights.lock().unwrap().remove(&key);
        }
        result.map(|r| usage_of(r, false))
    }

    /// Embedding through the backend, rate limited like chat calls.
    pub fn embed(&self, text: &str) -> Result<Vec<f64>, ModelError> {
        let _permit = self.inflight.acquire();
        if let Some(l) = &self.limiter {
            l.acquire();
        }
        self.backend.embed(text, &self.cfg)
    }

    fn live(&self, prompt: &str) -> Result<CachedResponse, ModelError> {
        let mut transient_left = self.cfg.retry.count;
        let mut empty_left = 1;
        let mut attempt = 0u32;
        loop {
            let outcome = {
                let _permit = self.inflight.acquire();
                if let Some(l) = &self.limiter {
                    l.acquire();
                }
                self.backend.chat(prompt, &self.cfg)
            };
            match outcome {
                Ok(c) if c.text.trim().is_empty() => {
                    if empty_left == 0 {
                        return Err(ModelError::EmptyCompletion);
                    }
                    empty_left -= 1;
                }
                Ok(c) => {
                    return Ok(CachedResponse {
                        input_tokens: c.input_tokens.unwrap_or_else(|| self.estimator.count(prompt)),
                        output_tokens: c.output_tokens.unwrap_or_else(|| self.estimator.count(&c.text)),
                        text: c.text,
                    })
                }
                Err(e) if e.is_transient() && transient_left > 0 => {
                    transient_left -= 1;
                    let backoff = self.cfg.retry.backoff_ms.saturating_mul(1 << attempt.min(16));
                    log::debug!("retrying after {e}; sleeping {backoff} ms");
                    thread::sleep(Duration::from_millis(backoff));
                    attempt += 1;
                }
                Err(e) if e.is_transient() => return Err(ModelError::Transport(e.to_string())),
                Err(e) => return Err(e),
            }
        }
    }
}

fn usage_of(r: CachedResponse, cached: bool) -> (String, TokenUsage) {
    (r.text, TokenUsage { input_tokens: r.input_tokens, output_tokens: r.output_tokens, cached })
}

fn cached(r: CachedResponse) -> (String, TokenUsage) {
    usage_of(r, true)
}
