//! Instrumented lock-free stacks and the stress recorder.
//!
//! Three implementations share the same harness: the Treiber stack, the HSY
//! elimination-backoff stack, and the timestamped stack with per-thread
//! pools. Each emits invocation/response events through the recorder and
//! reports, per pop, either a removal key (from which removal ranks are
//! derived) or an elimination mark.
//!
//! Removal keys are captured so that their order equals the real-time order
//! of the removal actions exactly, not approximately: the Treiber-style
//! stacks read the key off the versioned top word their own successful
//! update installed, and the timestamped stack stamps reservations through a
//! shared clock with helping, so any pop that observed a node as reserved
//! has a later stamp than that node's remover.

pub mod clock;
pub mod hsy;
pub mod recorder;
pub mod stress;
pub mod treiber;
pub mod ts;

pub use clock::{Interval, Timestamp, TsClock};
pub use recorder::{value_token, Recorder, RemovalTag, ThreadLog};
pub use stress::{record_stress, HarnessError, ImplKind, StressConfig, StressRun};

use std::sync::atomic::{AtomicU32, Ordering};

/// What a pop handed back, plus how its removal is ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PopOutcome {
    /// Removed value id, or `None` for an empty return.
    pub value: Option<u64>,
    pub tag: RemovalTag,
}

/// Per-push diagnostics; the timestamped stack reports the generated
/// interval for timestamp-law assertions.
#[derive(Debug, Clone, Copy, Default)]
pub struct PushInfo {
    pub timestamp: Option<(u64, u64)>,
}

/// A concurrent stack under instrumentation. `thread` is the worker index;
/// values are opaque ids chosen by the harness.
pub trait InstrumentedStack: Sync {
    fn push(&self, thread: usize, value: u64) -> PushInfo;
    fn pop(&self, thread: usize) -> PopOutcome;
}

/// Fixed-capacity node slab with per-thread allocation ranges, so lock-free
/// code never allocates and node ids fit in a packed word. Nodes stay live
/// until the whole stack is dropped; recorded runs are bounded.
pub(crate) struct Slab<N> {
    nodes: Vec<N>,
    per_thread: usize,
    cursors: Vec<AtomicU32>,
}

impl<N: Default> Slab<N> {
    pub fn new(threads: usize, per_thread: usize) -> Slab<N> {
        let mut nodes = Vec::new();
        nodes.resize_with(threads * per_thread, N::default);
        Slab {
            nodes,
            per_thread,
            cursors: (0..threads).map(|_| AtomicU32::new(0)).collect(),
        }
    }

    /// Claim a fresh node for `thread`; returns its 1-based id.
    pub fn alloc(&self, thread: usize) -> u32 {
        let local = self.cursors[thread].fetch_add(1, Ordering::Relaxed) as usize;
        assert!(local < self.per_thread, "slab capacity exceeded");
        (thread * self.per_thread + local) as u32 + 1
    }

    pub fn get(&self, id1: u32) -> &N {
        &self.nodes[id1 as usize - 1]
    }
}

/// Packed (version, node id) word: version in the high half guards against
/// reuse of identical node ids, node id 0 is the null list.
pub(crate) fn pack(version: u32, id1: u32) -> u64 {
    ((version as u64) << 32) | id1 as u64
}

pub(crate) fn unpack(word: u64) -> (u32, u32) {
    ((word >> 32) as u32, word as u32)
}
