use std::thread;
use std::time::Duration;

/// Outcome of one attempt of a remote call.
#[derive(Debug)]
pub enum Attempt {
    /// Transport errors, timeouts, 429 and 5xx responses.
    Transient(String),
    Fatal(String),
}

#[derive(Clone, Copy, Debug)]
pub struct Backoff {
    pub max_retries: u32,
    pub base: Duration,
    pub cap: Duration,
}

impl Backoff {
    pub fn new(max_retries: u32) -> Self {
        Self {
            max_retries,
            base: Duration::from_millis(500),
            cap: Duration::from_secs(30),
        }
    }

    /// Delay before retry number `retry` (0-based): base · 2^retry, capped.
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry.min(20)).unwrap_or(u32::MAX);
        self.base.saturating_mul(factor).min(self.cap)
    }

    /// Runs `op` until it succeeds, fails fatally, or exhausts the retries.
    /// Only idempotent requests go through here.
    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T, Attempt>) -> Result<T, String> {
        let mut retry = 0;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(msg)) => return Err(msg),
                Err(Attempt::Transient(msg)) if retry >= self.max_retries => {
                    return Err(format!("{msg} (after {} retries)", self.max_retries))
                }
                Err(Attempt::Transient(msg)) => {
                    let d = self.delay(retry);
                    tracing::warn!(retry, delay_ms = d.as_millis() as u64, error = %msg, "retrying provider call");
                    thread::sleep(d);
                    retry += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(max_retries: u32) -> Backoff {
        Backoff {
            max_retries,
            base: Duration::from_millis(1),
            cap: Duration::from_millis(4),
        }
    }

    #[test]
    fn delays_double_and_cap() {
        let b = Backoff::new(3);
        assert_eq!(b.delay(0), Duration::from_millis(500));
        assert_eq!(b.delay(2), Duration::from_secs(2));
        assert_eq!(b.delay(40), Duration::from_secs(30));
    }

    #[test]
    fn transient_errors_are_retried_until_success() {
        let mut calls = 0;
        let out = quick(3).run(|| {
            calls += 1;
            if calls < 3 {
                Err(Attempt::Transient("503".into()))
            } else {
                Ok(calls)
            }
        });
        assert_eq!(out, Ok(3));
    }

    #[test]
    fn gives_up_after_max_retries() {
        let mut calls = 0;
        let out: Result<(), _> = quick(2).run(|| {
            calls += 1;
            Err(Attempt::Transient("timeout".into()))
        });
        assert!(out.unwrap_err().contains("after 2 retries"));
        assert_eq!(calls, 3);
    }

    #[test]
    fn fatal_errors_are_not_retried() {
        let mut calls = 0;
        let out: Result<(), _> = quick(5).run(|| {
            calls += 1;
            Err(Attempt::Fatal("401".into()))
        });
        assert_eq!(out.unwrap_err(), "401");
        assert_eq!(calls, 1);
    }
}
