//! Run clocks.
//!
//! The wall clock measures real elapsed time. The work clock converts a
//! deterministic count of floating-point work (accumulated per thread by the
//! gradient engine) into seconds at a fixed rate, so budgets expressed in
//! seconds yield bit-identical runs.

use std::cell::Cell;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

thread_local! {
    static WORK_UNITS: Cell<u64> = const { Cell::new(0) };
}

/// Adds `units` of work to the current thread's counter.
#[inline]
pub fn add_work(units: u64) {
    WORK_UNITS.with(|w| w.set(w.get().wrapping_add(units)));
}

/// Work performed so far on this thread.
pub fn work_units() -> u64 {
    WORK_UNITS.with(Cell::get)
}

/// Work units per second of work-clock time.
///
/// Median single-threaded training throughput over the initial design and
/// random configurations on the reference development machine; individual
/// architectures run between half and twice this rate.
pub const WORK_UNITS_PER_SECOND: f64 = 1.25e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockKind {
    Wall,
    Work,
}

impl FromStr for ClockKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "wall" => Ok(ClockKind::Wall),
            "work" => Ok(ClockKind::Work),
            other => Err(format!("unknown clock '{other}' (expected wall|work)")),
        }
    }
}

impl fmt::Display for ClockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClockKind::Wall => "wall",
            ClockKind::Work => "work",
        })
    }
}

/// Seconds elapsed since the clock started.
#[derive(Debug, Clone, Copy)]
pub struct RunClock {
    kind: ClockKind,
    start: Instant,
    start_units: u64,
}

impl RunClock {
    pub fn start(kind: ClockKind) -> Self {
        Self {
            kind,
            start: Instant::now(),
            start_units: work_units(),
        }
    }

    pub fn kind(&self) -> ClockKind {
        self.kind
    }

    /// Elapsed seconds. For the work clock this only counts work done on the
    /// calling thread.
    pub fn now(&self) -> f64 {
        match self.kind {
            ClockKind::Wall => self.start.elapsed().as_secs_f64(),
            ClockKind::Work => {
                work_units().wrapping_sub(self.start_units) as f64 / WORK_UNITS_PER_SECOND
            }
        }
    }
}

/// A point in time on a [`RunClock`] after which work should stop.
#[derive(Debug, Clone, Copy)]
pub struct Deadline {
    pub clock: RunClock,
    pub at: f64,
}

impl Deadline {
    pub fn new(clock: RunClock, at: f64) -> Self {
        Self { clock, at }
    }

    pub fn expired(&self) -> bool {
        self.clock.now() >= self.at
    }
}
