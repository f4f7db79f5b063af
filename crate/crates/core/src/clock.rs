use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::checkin::Millis;

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> Millis;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> Millis {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as Millis)
            .unwrap_or(0)
    }
}

/// Deterministic clock: every read returns the current value and then
/// advances it by `step`.
#[derive(Debug)]
pub struct TestClock {
    next: AtomicU64,
    step: u64,
}

impl TestClock {
    pub fn new(start: Millis, step: u64) -> Self {
        TestClock {
            next: AtomicU64::new(start),
            step,
        }
    }

    /// Parses `<start_ms>` or `<start_ms>:<step_ms>` (step defaults to 1000).
    pub fn parse(spec: &str) -> Option<Self> {
        let (start, step) = match spec.split_once(':') {
            Some((a, b)) => (a.trim().parse().ok()?, b.trim().parse().ok()?),
            None => (spec.trim().parse().ok()?, 1000),
        };
        Some(TestClock::new(start, step))
    }

    pub fn advance(&self, by: u64) {
        self.next.fetch_add(by, Ordering::SeqCst);
    }

    pub fn peek(&self) -> Millis {
        self.next.load(Ordering::SeqCst)
    }
}

impl Clock for TestClock {
    fn now_ms(&self) -> Millis {
        self.next.fetch_add(self.step, Ordering::SeqCst)
    }
}
