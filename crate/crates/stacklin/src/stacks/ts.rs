//! Timestamped stack: one single-writer pool per thread, interval
//! timestamps, and pops that remove the youngest visible node.
//!
//! A push inserts at the head of its own pool with the maximal timestamp,
//! then generates an interval and writes it to the node. A pop generates a
//! start time and retries a removal attempt: scan every pool for its
//! youngest live node; a node whose timestamp exceeds the start time must
//! have been inserted during this pop, so it is taken at once (the
//! elimination path); otherwise the candidate with the maximal timestamp is
//! removed. If no pool had a live node the recorded tops are re-validated
//! and the pop reports empty.
//!
//! Removal is logical: a node is first reserved by a compare-and-swap on its
//! removal word and then stamped through the shared removal clock; scanners
//! that skip a reserved node stamp it on the way past. The stamp order is
//! the recorded pop order, and helping guarantees that whatever a pop
//! observed as removed was stamped before the pop's own stamp. Physical
//! unlinking is left to the pool owner, which trims stamped prefixes on its
//! next insert.

use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use super::clock::{Interval, Timestamp, TsClock};
use super::recorder::RemovalTag;
use super::{pack, unpack, InstrumentedStack, PopOutcome, PushInfo, Slab};

const TS_UNSET: u64 = u64::MAX;
const FREE: u64 = 0;
const RESERVED: u64 = u64::MAX;

pub(crate) struct TsNode {
    value: AtomicU64,
    next: AtomicU32,
    ts_start: AtomicU64,
    ts_end: AtomicU64,
    /// 0 free, maximal value reserved, anything else the removal stamp.
    removal: AtomicU64,
}

impl Default for TsNode {
    fn default() -> TsNode {
        TsNode {
            value: AtomicU64::new(0),
            next: AtomicU32::new(0),
            ts_start: AtomicU64::new(TS_UNSET),
            ts_end: AtomicU64::new(TS_UNSET),
            removal: AtomicU64::new(FREE),
        }
    }
}

struct Pool {
    /// Packed (version, head id); written only by the owning thread.
    top: AtomicU64,
}

pub struct TsStack {
    pools: Vec<Pool>,
    slab: Slab<TsNode>,
    ts_clock: TsClock,
    removal_clock: AtomicU64,
}

enum Scan {
    /// Node younger than the pop's start time; take it immediately.
    Eliminate { node: u32 },
    /// Youngest node over all pools.
    Candidate { node: u32 },
    /// Every pool looked empty; re-validate these top snapshots.
    AllEmpty { snapshots: Vec<u64> },
}

enum Attempt {
    Done(PopOutcome),
    Retry,
}

impl TsStack {
    pub fn new(threads: usize, per_thread: usize) -> TsStack {
        TsStack {
            pools: (0..threads)
                .map(|_| Pool {
                    top: AtomicU64::new(0),
                })
                .collect(),
            slab: Slab::new(threads, per_thread),
            ts_clock: TsClock::new(),
            removal_clock: AtomicU64::new(0),
        }
    }

    pub(crate) fn new_timestamp(&self) -> Interval {
        self.ts_clock.now()
    }

    fn node_timestamp(&self, id: u32) -> Timestamp {
        let node = self.slab.get(id);
        let start = node.ts_start.load(Ordering::Acquire);
        if start == TS_UNSET {
            Timestamp::Top
        } else {
            Timestamp::Interval(Interval {
                start,
                end: node.ts_end.load(Ordering::Acquire),
            })
        }
    }

    fn new_stamp(&self) -> u64 {
        self.removal_clock.fetch_add(1, Ordering::AcqRel) + 1
    }

    /// Stamp a reserved node on behalf of its remover. Burned stamps only
    /// leave gaps, which rank derivation closes.
    fn help_stamp(&self, id: u32) {
        let stamp = self.new_stamp();
        let _ = self.slab.get(id).removal.compare_exchange(
            RESERVED,
            stamp,
            Ordering::AcqRel,
            Ordering::Acquire,
        );
    }

    /// Youngest live node of one pool plus the top snapshot the walk started
    /// from. Skipped reserved nodes are stamped in passing.
    fn get_youngest(&self, pool: usize) -> (Option<u32>, u64) {
        let top_word = self.pools[pool].top.load(Ordering::Acquire);
        let (_, mut id) = unpack(top_word);
        while id != 0 {
            let node = self.slab.get(id);
            match node.removal.load(Ordering::Acquire) {
                FREE => return (Some(id), top_word),
                RESERVED => {
                    self.help_stamp(id);
                    id = node.next.load(Ordering::Acquire);
                }
                _ => {
                    id = node.next.load(Ordering::Acquire);
                }
            }
        }
        (None, top_word)
    }

    /// Reserve and stamp one node. The reservation is the removal decision;
    /// the stamp may come from a helper, in which case it is earlier.
    fn remove(&self, id: u32) -> Option<(u64, u64)> {
        let node = self.slab.get(id);
        if node
            .removal
            .compare_exchange(FREE, RESERVED, Ordering::AcqRel, Ordering::Acquire)
            .is_err()
        {
            return None;
        }
        let stamp = self.new_stamp();
        let _ = node
            .removal
            .compare_exchange(RESERVED, stamp, Ordering::AcqRel, Ordering::Acquire);
        let final_stamp = node.removal.load(Ordering::Acquire);
        debug_assert!(final_stamp != FREE && final_stamp != RESERVED);
        Some((node.value.load(Ordering::Relaxed), final_stamp))
    }

    fn scan(&self, start: Interval) -> Scan {
        let start_ts = Timestamp::Interval(start);
        let mut candidate: Option<(u32, Timestamp)> = None;
        let mut snapshots = vec![0u64; self.pools.len()];
        for pool in 0..self.pools.len() {
            let (found, top_word) = self.get_youngest(pool);
            match found {
                None => snapshots[pool] = top_word,
                Some(id) => {
                    let ts = self.node_timestamp(id);
                    if start_ts.lt(&ts) {
                        return Scan::Eliminate { node: id };
                    }
                    let newer = match &candidate {
                        None => true,
                        Some((_, best)) => best.lt(&ts),
                    };
                    if newer {
                        candidate = Some((id, ts));
                    }
                }
            }
        }
        match candidate {
            Some((node, _)) => Scan::Candidate { node },
            None => Scan::AllEmpty { snapshots },
        }
    }

    fn finish(&self, scan: Scan) -> Attempt {
        match scan {
            Scan::Eliminate { node } => match self.remove(node) {
                Some((value, _)) => Attempt::Done(PopOutcome {
                    value: Some(value),
                    tag: RemovalTag::Eliminated,
                }),
                None => Attempt::Retry,
            },
            Scan::Candidate { node } => match self.remove(node) {
                Some((value, stamp)) => Attempt::Done(PopOutcome {
                    value: Some(value),
                    tag: RemovalTag::keyed(stamp, 0),
                }),
                None => Attempt::Retry,
            },
            Scan::AllEmpty { snapshots } => {
                for (pool, snapshot) in snapshots.iter().enumerate() {
                    if self.pools[pool].top.load(Ordering::Acquire) != *snapshot {
                        return Attempt::Retry;
                    }
                }
                // All pools provably empty at this point; the stamp is the
                // emptiness-check instant.
                Attempt::Done(PopOutcome {
                    value: None,
                    tag: RemovalTag::keyed(self.new_stamp(), 0),
                })
            }
        }
    }

    pub(crate) fn pop_with_start(&self, start: Interval) -> PopOutcome {
        loop {
            match self.finish(self.scan(start)) {
                Attempt::Done(out) => return out,
                Attempt::Retry => std::thread::yield_now(),
            }
        }
    }

    /// Drop stamped nodes off the head of the owner's pool. Trimming only
    /// moves the top past logically removed nodes; chains stay intact for
    /// concurrent walkers.
    fn trim(&self, thread: usize) {
        let pool = &self.pools[thread];
        let word = pool.top.load(Ordering::Acquire);
        let (ver, mut id) = unpack(word);
        let mut changed = false;
        while id != 0 {
            let node = self.slab.get(id);
            let removal = node.removal.load(Ordering::Acquire);
            if removal == FREE || removal == RESERVED {
                break;
            }
            id = node.next.load(Ordering::Acquire);
            changed = true;
        }
        if changed {
            pool.top
                .store(pack(ver.wrapping_add(1), id), Ordering::Release);
        }
    }
}

impl InstrumentedStack for TsStack {
    fn push(&self, thread: usize, value: u64) -> PushInfo {
        self.trim(thread);
        let id = self.slab.alloc(thread);
        let node = self.slab.get(id);
        node.value.store(value, Ordering::Relaxed);
        let pool = &self.pools[thread];
        let word = pool.top.load(Ordering::Acquire);
        let (ver, head) = unpack(word);
        node.next.store(head, Ordering::Relaxed);
        // Insert with the maximal timestamp, then stamp.
        pool.top
            .store(pack(ver.wrapping_add(1), id), Ordering::Release);
        let ts = self.new_timestamp();
        node.ts_end.store(ts.end, Ordering::Release);
        node.ts_start.store(ts.start, Ordering::Release);
        PushInfo {
            timestamp: Some((ts.start, ts.end)),
        }
    }

    fn pop(&self, _thread: usize) -> PopOutcome {
        self.pop_with_start(self.new_timestamp())
    }
}
