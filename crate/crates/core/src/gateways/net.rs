//! Retry with exponential backoff and a per-endpoint token bucket.

use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use super::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetConfig {
    /// Requests per second per endpoint; 0 disables limiting.
    pub rps: f64,
    pub max_retries: u32,
    pub backoff: Duration,
    pub timeout: Duration,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            rps: 0.0,
            max_retries: 3,
            backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(120),
        }
    }
}

/// Outcome of one attempt: transient failures are retried.
pub(crate) enum Attempt<T> {
    Done(T),
    Retry(GatewayError),
    Fail(GatewayError),
}

const MAX_BACKOFF: Duration = Duration::from_secs(30);

pub(crate) fn with_retries<T>(
    cfg: &NetConfig,
    limiter: &RateLimiter,
    mut attempt: impl FnMut() -> Attempt<T>,
) -> Result<T, GatewayError> {
    let mut delay = cfg.backoff;
    let mut tries = 0;
    loop {
        limiter.acquire();
        match attempt() {
            Attempt::Done(v) => return Ok(v),
            Attempt::Fail(e) => return Err(e),
            Attempt::Retry(e) => {
                if tries >= cfg.max_retries {
                    return Err(e);
                }
                log::warn!("retrying after {e} ({}/{})", tries + 1, cfg.max_retries);
                thread::sleep(delay);
                delay = (delay * 2).min(MAX_BACKOFF);
                tries += 1;
            }
        }
    }
}

#[derive(Debug)]
pub struct RateLimiter {
    rps: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn new(rps: f64) -> Self {
        let capacity = rps.max(1.0);
        Self {
            rps,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    pub fn unlimited() -> Self {
        Self::new(0.0)
    }

    /// Blocks until a token is available.
    pub fn acquire(&self) {
        if self.rps <= 0.0 {
            return;
        }
        let capacity = self.rps.max(1.0);
        loop {
            let wait = {
                let mut st = self.state.lock().expect("rate limiter poisoned");
                let now = Instant::now();
                let refill = now.duration_since(st.1).as_secs_f64() * self.rps;
                st.0 = (st.0 + refill).min(capacity);
                st.1 = now;
                if st.0 >= 1.0 {
                    st.0 -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - st.0) / self.rps)
            };
            thread::sleep(wait);
        }
    }
}
