use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

/// Shared discrete-event virtual clock in milliseconds. Cloning shares the
/// underlying time.
#[derive(Debug, Clone, Default)]
pub struct VirtualClock(Arc<AtomicU64>);

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }

    /// Moves the clock forward to `t`; never moves it backwards.
    pub fn advance_to(&self, t: u64) -> u64 {
        self.0.fetch_max(t, Ordering::SeqCst).max(t)
    }

    pub fn advance_by(&self, d: u64) -> u64 {
        self.0.fetch_add(d, Ordering::SeqCst) + d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotone_and_shared() {
        let c = VirtualClock::new();
        let d = c.clone();
        c.advance_to(500);
        assert_eq!(d.now_ms(), 500);
        c.advance_to(100);
        assert_eq!(c.now_ms(), 500);
        assert_eq!(d.advance_by(250), 750);
    }
}
