//! Language-model providers. The pipeline only needs prompt in, text out.

use std::collections::VecDeque;
use std::num::NonZeroU32;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use governor::clock::{Clock, DefaultClock};
use governor::{DefaultDirectRateLimiter, Quota, RateLimiter};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    #[error("provider transport: {0}")]
    Transport(String),
    #[error("provider returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("provider configuration: {0}")]
    Config(String),
    #[error("scripted provider has no reply left")]
    Exhausted,
}

pub trait LlmProvider: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError>;
}

impl<P: LlmProvider + ?Sized> LlmProvider for &P {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        (**self).complete(prompt)
    }
}

impl<P: LlmProvider + ?Sized> LlmProvider for Box<P> {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        (**self).complete(prompt)
    }
}

/// Replays canned replies. Keyed rules are consulted first (the first rule
/// whose key occurs in the prompt and still has replies wins), then the
/// shared queue.
#[derive(Default)]
pub struct ScriptedProvider {
    queue: Mutex<VecDeque<Result<String, ProviderError>>>,
    rules: Mutex<Vec<(String, VecDeque<Result<String, ProviderError>>)>>,
    prompts: Mutex<Vec<String>>,
    calls: AtomicUsize,
}

impl ScriptedProvider {
    pub fn new<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        let p = Self::default();
        p.queue.lock().unwrap().extend(replies.into_iter().map(|r| Ok(r.into())));
        p
    }

    pub fn push(&self, reply: impl Into<String>) {
        self.queue.lock().unwrap().push_back(Ok(reply.into()));
    }

    pub fn push_error(&self, error: ProviderError) {
        self.queue.lock().unwrap().push_back(Err(error));
    }

    pub fn on<S: Into<String>>(self, key: impl Into<String>, replies: impl IntoIterator<Item = S>) -> Self {
        let replies = replies.into_iter().map(|r| Ok(r.into())).collect();
        self.rules.lock().unwrap().push((key.into(), replies));
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().unwrap().clone()
    }

    pub fn remaining(&self) -> usize {
        let rules: usize = self.rules.lock().unwrap().iter().map(|(_, q)| q.len()).sum();
        rules + self.queue.lock().unwrap().len()
    }
}

impl LlmProvider for ScriptedProvider {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.prompts.lock().unwrap().push(prompt.to_string());
        {
            let mut rules = self.rules.lock().unwrap();
            if let Some((_, q)) = rules.iter_mut().find(|(k, q)| !q.is_empty() && prompt.contains(k.as_str())) {
                return q.pop_front().expect("non-empty");
            }
        }
        self.queue.lock().unwrap().pop_front().unwrap_or(Err(ProviderError::Exhausted))
    }
}

/// Token-bucket admission in front of another provider; callers block until
/// a token is available.
pub struct RateLimited<P> {
    inner: P,
    limiter: DefaultDirectRateLimiter,
    clock: DefaultClock,
}

impl<P: LlmProvider> RateLimited<P> {
    pub fn new(inner: P, per_minute: NonZeroU32, burst: NonZeroU32) -> Self {
        let clock = DefaultClock::default();
        let quota = Quota::per_minute(per_minute).allow_burst(burst);
        Self { inner, limiter: RateLimiter::direct_with_clock(quota, clock.clone()), clock }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    fn acquire(&self) {
        while let Err(not_until) = self.limiter.check() {
            std::thread::sleep(not_until.wait_time_from(self.clock.now()));
        }
    }
}

impl<P: LlmProvider> LlmProvider for RateLimited<P> {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        self.acquire();
        self.inner.complete(prompt)
    }
}
