use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Monotonic time source; injectable so retry and rate-limit behavior can be
/// tested without sleeping.
pub trait Clock: Send + Sync {
    /// Time elapsed since an arbitrary fixed origin.
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Clock whose `sleep` advances time instantly.
#[derive(Debug, Default)]
pub struct VirtualClock {
    now: Mutex<Duration>,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, d: Duration) {
        *self.now.lock().unwrap() += d;
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> Duration {
        *self.now.lock().unwrap()
    }

    fn sleep(&self, d: Duration) {
        self.advance(d);
    }
}

/// Sliding-window limiter: at most `limit` acquisitions in any `window`.
#[derive(Debug)]
pub struct RateLimiter {
    limit: usize,
    window: Duration,
    stamps: Mutex<VecDeque<Duration>>,
}

impl RateLimiter {
    pub fn new(limit: u32, window: Duration) -> Self {
        assert!(limit > 0, "rate limit must be positive");
        Self {
            limit: limit as usize,
            window,
            stamps: Mutex::new(VecDeque::new()),
        }
    }

    pub fn per_minute(limit: u32) -> Self {
        Self::new(limit, Duration::from_secs(60))
    }

    /// Blocks until a slot is free, then claims it. The lock is held while
    /// waiting so dispatch decisions are serialized.
    pub fn acquire(&self, clock: &dyn Clock) -> Duration {
        let mut stamps = self.stamps.lock().unwrap();
        loop {
            let now = clock.now();
            while stamps
                .front()
                .is_some_and(|&t| now.saturating_sub(t) >= self.window)
            {
                stamps.pop_front();
            }
            if stamps.len() < self.limit {
                stamps.push_back(now);
                return now;
            }
            let oldest = *stamps.front().expect("window is full");
            clock.sleep((oldest + self.window).saturating_sub(now));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn virtual_sleep_advances() {
        let c = VirtualClock::new();
        c.sleep(Duration::from_secs(3));
        assert_eq!(c.now(), Duration::from_secs(3));
    }

    #[test]
    fn blocks_once_window_is_full() {
        let clock = VirtualClock::new();
        let rl = RateLimiter::per_minute(2);
        assert_eq!(rl.acquire(&clock), Duration::ZERO);
        clock.advance(Duration::from_secs(10));
        assert_eq!(rl.acquire(&clock), Duration::from_secs(10));
        assert_eq!(rl.acquire(&clock), Duration::from_secs(60));
        assert_eq!(rl.acquire(&clock), Duration::from_secs(70));
    }

    proptest! {
        #[test]
        fn never_exceeds_ceiling_in_any_window(
            limit in 1u32..8,
            gaps in proptest::collection::vec(0u64..40_000, 1..60),
        ) {
            let clock = VirtualClock::new();
            let rl = RateLimiter::per_minute(limit);
            let mut times = Vec::new();
            for gap in gaps {
                clock.advance(Duration::from_millis(gap));
                times.push(rl.acquire(&clock));
            }
            for (i, &t) in times.iter().enumerate() {
                let in_window = times[i..]
                    .iter()
                    .take_while(|&&u| u < t + Duration::from_secs(60))
                    .count();
                prop_assert!(in_window <= limit as usize);
            }
        }
    }
}
