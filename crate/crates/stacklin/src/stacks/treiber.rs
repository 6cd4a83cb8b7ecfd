//! Treiber stack: a singly-linked list whose top pointer is updated with
//! compare-and-swap retry loops.
//!
//! The top word packs (version, node id); every successful update bumps the
//! version, which both rules out reuse hazards and totally orders all top
//! modifications. A pop's removal key is the version its own winning swap
//! installed; an empty return's key is the version it observed on the null
//! top, placing it between the surrounding modifications.

use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use super::recorder::RemovalTag;
use super::{pack, unpack, InstrumentedStack, PopOutcome, PushInfo, Slab};

pub(crate) struct Node {
    value: AtomicU64,
    next: AtomicU32,
}

impl Default for Node {
    fn default() -> Node {
        Node {
            value: AtomicU64::new(0),
            next: AtomicU32::new(0),
        }
    }
}

/// One push or pop attempt against the shared list.
pub(crate) enum PopAttempt {
    Empty { observed_version: u32 },
    Got { value: u64, installed_version: u32 },
    Contended,
}

pub(crate) struct ListCore {
    top: AtomicU64,
    slab: Slab<Node>,
}

impl ListCore {
    pub fn new(threads: usize, per_thread: usize) -> ListCore {
        ListCore {
            top: AtomicU64::new(0),
            slab: Slab::new(threads, per_thread),
        }
    }

    pub fn prepare_node(&self, thread: usize, value: u64) -> u32 {
        let id = self.slab.alloc(thread);
        self.slab.get(id).value.store(value, Ordering::Relaxed);
        id
    }

    pub fn try_push(&self, node: u32) -> bool {
        let cur = self.top.load(Ordering::Acquire);
        let (ver, head) = unpack(cur);
        self.slab.get(node).next.store(head, Ordering::Relaxed);
        self.top
            .compare_exchange(
                cur,
                pack(ver.wrapping_add(1), node),
                Ordering::AcqRel,
                Ordering::Acquire,
            )
            .is_ok()
    }

    pub fn try_pop(&self) -> PopAttempt {
        let cur = self.top.load(Ordering::Acquire);
        let (ver, head) = unpack(cur);
        if head == 0 {
            return PopAttempt::Empty {
                observed_version: ver,
            };
        }
        let node = self.slab.get(head);
        let next = node.next.load(Ordering::Relaxed);
        let installed = ver.wrapping_add(1);
        match self.top.compare_exchange(
            cur,
            pack(installed, next),
            Ordering::AcqRel,
            Ordering::Acquire,
        ) {
            Ok(_) => PopAttempt::Got {
                value: node.value.load(Ordering::Relaxed),
                installed_version: installed,
            },
            Err(_) => PopAttempt::Contended,
        }
    }
}

pub struct TreiberStack {
    core: ListCore,
}

impl TreiberStack {
    pub fn new(threads: usize, per_thread: usize) -> TreiberStack {
        TreiberStack {
            core: ListCore::new(threads, per_thread),
        }
    }
}

impl InstrumentedStack for TreiberStack {
    fn push(&self, thread: usize, value: u64) -> PushInfo {
        let node = self.core.prepare_node(thread, value);
        while !self.core.try_push(node) {
            std::thread::yield_now();
        }
        PushInfo::default()
    }

    fn pop(&self, _thread: usize) -> PopOutcome {
        loop {
            match self.core.try_pop() {
                PopAttempt::Empty { observed_version } => {
                    return PopOutcome {
                        value: None,
                        tag: RemovalTag::keyed(observed_version as u64, 1),
                    }
                }
                PopAttempt::Got {
                    value,
                    installed_version,
                } => {
                    return PopOutcome {
                        value: Some(value),
                        tag: RemovalTag::keyed(installed_version as u64, 0),
                    }
                }
                PopAttempt::Contended => std::thread::yield_now(),
            }
        }
    }
}
