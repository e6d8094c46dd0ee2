//! Wall-clock access for solver and training diagnostics.

/// Monotonic time source, in seconds from an arbitrary origin.
pub trait Clock {
    fn now(&self) -> f64;
}

/// Reports zero for every reading. Used where no time source exists.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullClock;

impl Clock for NullClock {
    fn now(&self) -> f64 {
        0.0
    }
}

#[cfg(feature = "std")]
#[derive(Debug, Clone, Copy)]
pub struct MonotonicClock {
    origin: std::time::Instant,
}

#[cfg(feature = "std")]
impl Default for MonotonicClock {
    fn default() -> Self {
        Self {
            origin: std::time::Instant::now(),
        }
    }
}

#[cfg(feature = "std")]
impl Clock for MonotonicClock {
    fn now(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }
}

/// The best clock available for the current build.
#[cfg(feature = "std")]
pub fn default_clock() -> MonotonicClock {
    MonotonicClock::default()
}

#[cfg(not(feature = "std"))]
pub fn default_clock() -> NullClock {
    NullClock
}
