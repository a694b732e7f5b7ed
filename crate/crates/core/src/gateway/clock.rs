use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use chrono::{DateTime, TimeZone, Utc};

/// Time source for backoff, rate limiting and log timestamps.
pub trait Clock: Send + Sync {
    /// Monotonic time since the clock's origin.
    fn elapsed(&self) -> Duration;
    fn wall(&self) -> DateTime<Utc>;
    fn sleep(&self, d: Duration);
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn elapsed(&self) -> Duration {
        self.origin.elapsed()
    }

    fn wall(&self) -> DateTime<Utc> {
        Utc::now()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Clock that only moves when someone sleeps on it. Offline runs use it so
/// that backoff is instant and timestamps are reproducible.
#[derive(Debug)]
pub struct VirtualClock {
    epoch: DateTime<Utc>,
    nanos: AtomicU64,
}

impl Default for VirtualClock {
    fn default() -> Self {
        Self::new(Utc.with_ymd_and_hms(2024, 8, 1, 0, 0, 0).unwrap())
    }
}

impl VirtualClock {
    pub fn new(epoch: DateTime<Utc>) -> Self {
        Self {
            epoch,
            nanos: AtomicU64::new(0),
        }
    }

    pub fn advance(&self, d: Duration) {
        self.nanos.fetch_add(d.as_nanos() as u64, Ordering::SeqCst);
    }
}

impl Clock for VirtualClock {
    fn elapsed(&self) -> Duration {
        Duration::from_nanos(self.nanos.load(Ordering::SeqCst))
    }

    fn wall(&self) -> DateTime<Utc> {
        self.epoch + chrono::Duration::from_std(self.elapsed()).unwrap_or_default()
    }

    fn sleep(&self, d: Duration) {
        self.advance(d);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn virtual_clock_moves_on_sleep_only() {
        let c = VirtualClock::default();
        let t0 = c.wall();
        assert_eq!(c.elapsed(), Duration::ZERO);
        c.sleep(Duration::from_secs(2));
        assert_eq!(c.elapsed(), Duration::from_secs(2));
        assert_eq!((c.wall() - t0).num_seconds(), 2);
    }
}
