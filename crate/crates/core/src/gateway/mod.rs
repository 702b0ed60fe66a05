//! Uniform access to chat-style providers with caching, retries and a bound
//! on in-flight requests.

mod cache;
mod mock;
mod openai;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ResponseSet, Sampling, TokenTrace};

pub use cache::Cache;
pub use mock::{MockEntry, MockFixture, MockProvider, Select};
pub use openai::OpenAiProvider;

/// Default sampling temperature for response sets.
pub const DEFAULT_SAMPLE_TEMPERATURE: f64 = 0.5;
/// Default number of sampled responses.
pub const DEFAULT_SAMPLE_K: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    pub temperature: f64,
    pub max_tokens: u32,
    /// Ask for per-token probabilities of the generated text.
    pub logprobs: bool,
    /// Number of alternatives per position; 0 disables them.
    pub top_logprobs: u32,
    pub seed: Option<u64>,
}

impl Default for GenParams {
    fn default() -> Self {
        Self { temperature: 0.0, max_tokens: 512, logprobs: false, top_logprobs: 0, seed: None }
    }
}

impl GenParams {
    pub fn greedy() -> Self {
        Self::default()
    }

    pub fn sampling(temperature: f64) -> Self {
        Self { temperature, ..Self::default() }
    }

    pub fn with_logprobs(mut self, top_logprobs: u32) -> Self {
        self.logprobs = true;
        self.top_logprobs = top_logprobs;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    fn validate(&self, caps: &Capabilities) -> Result<()> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid(format!("temperature {} must be >= 0", self.temperature)));
        }
        if self.top_logprobs > caps.max_top_logprobs {
            return Err(Error::invalid(format!(
                "top_logprobs {} exceeds provider maximum {}",
                self.top_logprobs, caps.max_top_logprobs
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Capabilities {
    pub returns_generated_logprobs: bool,
    pub returns_topk_alternatives: bool,
    pub supports_teacher_forced_scoring: bool,
    pub max_top_logprobs: u32,
}

impl Default for Capabilities {
    fn default() -> Self {
        Self {
            returns_generated_logprobs: false,
            returns_topk_alternatives: false,
            supports_teacher_forced_scoring: false,
            max_top_logprobs: 20,
        }
    }
}

impl Capabilities {
    pub fn white_box() -> Self {
        Self {
            returns_generated_logprobs: true,
            returns_topk_alternatives: true,
            supports_teacher_forced_scoring: true,
            max_top_logprobs: 20,
        }
    }
}

/// Partial override of a provider's advertised capabilities, from config.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CapabilityOverrides {
    pub returns_generated_logprobs: Option<bool>,
    pub returns_topk_alternatives: Option<bool>,
    pub supports_teacher_forced_scoring: Option<bool>,
    pub max_top_logprobs: Option<u32>,
}

impl CapabilityOverrides {
    pub fn apply(&self, mut caps: Capabilities) -> Capabilities {
        if let Some(v) = self.returns_generated_logprobs {
            caps.returns_generated_logprobs = v;
        }
        if let Some(v) = self.returns_topk_alternatives {
            caps.returns_topk_alternatives = v;
        }
        if let Some(v) = self.supports_teacher_forced_scoring {
            caps.supports_teacher_forced_scoring = v;
        }
        if let Some(v) = self.max_top_logprobs {
            caps.max_top_logprobs = v;
        }
        caps
    }
}

/// A chat-style backend. Implementations must be pure with respect to their
/// inputs only if they want cache hits to be meaningful; the gateway does not
/// check.
pub trait Provider: Send + Sync {
    fn name(&self) -> &str;
    fn capabilities(&self) -> Capabilities;
    fn complete(&self, prompt: &str, params: &GenParams) -> Result<TokenTrace>;
    /// Teacher-forced probabilities of `target` given `prompt`.
    fn score_sequence(&self, prompt: &str, target: &[String]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { attempts: 3, base_delay: Duration::from_millis(250) }
    }
}

impl RetryPolicy {
    pub fn immediate() -> Self {
        Self { attempts: 3, base_delay: Duration::ZERO }
    }
}

/// Counting semaphore for in-flight provider calls.
struct Limiter {
    max: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(max: usize) -> Self {
        Self { max: max.max(1), active: Mutex::new(0), freed: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut active = self.active.lock().expect("limiter poisoned");
        while *active >= self.max {
            active = self.freed.wait(active).expect("limiter poisoned");
        }
        *active += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.active.lock().expect("limiter poisoned") -= 1;
        self.0.freed.notify_one();
    }
}

pub struct Gateway {
    provider: Arc<dyn Provider>,
    capabilities: Capabilities,
    cache: Option<Cache>,
    retry: RetryPolicy,
    limiter: Limiter,
    provider_calls: AtomicUsize,
}

impl Gateway {
    pub fn new(provider: Arc<dyn Provider>) -> Self {
        let capabilities = provider.capabilities();
        Self {
            provider,
            capabilities,
            cache: Some(Cache::in_memory()),
            retry: RetryPolicy::default(),
            limiter: Limiter::new(8),
            provider_calls: AtomicUsize::new(0),
        }
    }

    pub fn mock(fixture: MockFixture) -> Self {
        Self::new(Arc::new(MockProvider::new(fixture))).with_retry(RetryPolicy::immediate())
    }

    pub fn with_cache(mut self, cache: Option<Cache>) -> Self {
        self.cache = cache;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_in_flight(mut self, max: usize) -> Self {
        self.limiter = Limiter::new(max);
        self
    }

    pub fn with_capability_overrides(mut self, overrides: &CapabilityOverrides) -> Self {
        self.capabilities = overrides.apply(self.capabilities);
        self
    }

    pub fn capabilities(&self) -> Capabilities {
        self.capabilities
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    /// Number of requests that actually reached the provider (cache misses,
    /// counting every retry attempt).
    pub fn provider_calls(&self) -> usize {
        self.provider_calls.load(Ordering::SeqCst)
    }

    fn with_retries<T>(&self, mut call: impl FnMut() -> Result<T>) -> Result<T> {
        let mut attempt = 0;
        loop {
            let _permit = self.limiter.acquire();
            self.provider_calls.fetch_add(1, Ordering::SeqCst);
            match call() {
                Err(e) if e.is_retryable() && attempt + 1 < self.retry.attempts => {
                    drop(_permit);
                    let delay = self.retry.base_delay * 2u32.pow(attempt);
                    log::warn!("provider attempt {} failed ({e}); retrying in {delay:?}", attempt + 1);
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    /// One generation. Token data is returned only when requested and the
    /// provider supports it.
    pub fn complete(&self, prompt: &str, params: &GenParams) -> Result<TokenTrace> {
        params.validate(&self.capabilities)?;
        let key = Cache::key("complete", prompt, params);
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get_trace(&key)) {
            return Ok(hit);
        }
        let mut trace = self.with_retries(|| self.provider.complete(prompt, params))?;
        if trace.text.trim().is_empty() {
            return Err(Error::EmptyGeneration);
        }
        if !params.logprobs || !self.capabilities.returns_generated_logprobs {
            trace = TokenTrace::text_only(trace.text);
        } else if params.top_logprobs == 0 || !self.capabilities.returns_topk_alternatives {
            trace.topk_alternatives = None;
        } else if let Some(alts) = trace.topk_alternatives.as_mut() {
            for list in alts.iter_mut() {
                list.truncate(params.top_logprobs as usize);
            }
        }
        trace.uncond_probs = None;
        if let Some(cache) = &self.cache {
            cache.put_trace(&key, &trace)?;
        }
        Ok(trace)
    }

    /// K generations with seeds `seed, seed+1, …`. Fails as a whole if any
    /// sample fails after retries; never resamples.
    pub fn sample(&self, prompt: &str, params: &GenParams, k: usize) -> Result<ResponseSet> {
        if k == 0 {
            return Err(Error::invalid("sample needs K >= 1"));
        }
        let base = params.seed.unwrap_or(0);
        let mut responses = Vec::with_capacity(k);
        let mut failed = Vec::new();
        let mut last_err = String::new();
        for i in 0..k {
            let p = params.clone().with_seed(base.wrapping_add(i as u64));
            match self.complete(prompt, &p) {
                Ok(t) => responses.push(t),
                Err(e) => {
                    failed.push(i);
                    last_err = e.to_string();
                }
            }
        }
        if !failed.is_empty() {
            return Err(Error::PartialSample { indices: failed, message: last_err });
        }
        ResponseSet::new(
            prompt,
            responses,
            Sampling { temperature: params.temperature, k, seed: base },
        )
    }

    pub fn score_sequence(&self, prompt: &str, target: &[String]) -> Result<Vec<f64>> {
        if !self.capabilities.supports_teacher_forced_scoring {
            return Err(Error::unsupported("teacher-forced scoring"));
        }
        if target.is_empty() {
            return Ok(Vec::new());
        }
        let key = Cache::key("score", prompt, &target);
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get_probs(&key)) {
            return Ok(hit);
        }
        let probs = self.with_retries(|| self.provider.score_sequence(prompt, target))?;
        if probs.len() != target.len() {
            return Err(Error::Provider(format!(
                "scored {} tokens, expected {}",
                probs.len(),
                target.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
            return Err(Error::Provider(format!("scored probability {p} outside (0, 1]")));
        }
        if let Some(cache) = &self.cache {
            cache.put_probs(&key, &probs)?;
        }
        Ok(probs)
    }

    /// Attaches context-free probabilities to a trace for the PMI family.
    pub fn attach_uncond_probs(&self, trace: TokenTrace) -> Result<TokenTrace> {
        if !trace.has_token_data() {
            return Err(Error::unsupported("needs generated token probabilities"));
        }
        let probs = self.score_sequence("", &trace.tokens)?;
        trace.with_uncond_probs(probs)
    }
}
