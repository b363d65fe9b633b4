use std::time::Instant;

use immc_core::sampler::Clock;

/// Monotonic wall clock, in seconds since construction.
pub struct StdClock {
    start: Instant,
}

impl StdClock {
    pub fn new() -> Self {
        StdClock { start: Instant::now() }
    }
}

impl Default for StdClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for StdClock {
    fn now(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}
