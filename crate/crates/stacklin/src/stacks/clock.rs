//! Interval timestamps from a shared counter.
//!
//! A timestamp is the pair of two successive counter reads; t1 is less than
//! t2 iff t1 finished before t2 started. Two sequential generations are
//! therefore always comparable and increasing, while overlapping generations
//! can interleave their reads and come out incomparable. Nodes carry the
//! distinguished maximal value between insertion and timestamp write.

use std::sync::atomic::{AtomicU64, Ordering};

/// A generated (start, end) interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interval {
    pub start: u64,
    pub end: u64,
}

/// An interval or the maximal value held by freshly inserted nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Timestamp {
    Interval(Interval),
    Top,
}

impl Timestamp {
    /// Strict comparison: intervals compare by end-before-start; everything
    /// generated is less than `Top`, and `Top` is less than nothing.
    pub fn lt(&self, other: &Timestamp) -> bool {
        match (self, other) {
            (Timestamp::Interval(a), Timestamp::Interval(b)) => a.end < b.start,
            (Timestamp::Interval(_), Timestamp::Top) => true,
            (Timestamp::Top, _) => false,
        }
    }

    pub fn comparable(&self, other: &Timestamp) -> bool {
        self.lt(other) || other.lt(self)
    }
}

#[derive(Debug, Default)]
pub struct TsClock {
    counter: AtomicU64,
}

impl TsClock {
    pub fn new() -> TsClock {
        TsClock::default()
    }

    pub fn now(&self) -> Interval {
        let start = self.counter.fetch_add(1, Ordering::AcqRel);
        let end = self.counter.fetch_add(1, Ordering::AcqRel);
        Interval { start, end }
    }

    pub fn tick(&self) -> u64 {
        self.counter.fetch_add(1, Ordering::AcqRel)
    }
}
